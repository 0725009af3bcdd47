// gsde_lab: scenario runner and single-check front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "gsde/error.hpp"
#include "gsde/grid.hpp"
#include "gsde/kolmogorov.hpp"
#include "gsde/scenario.hpp"

namespace {

struct Shared {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "runs";
    std::size_t threads = 0;
    bool deterministic = true;
};

void add_shared(CLI::App* cmd, Shared& s)
{
    cmd->add_option("--config", s.config, "scenario JSON")->required();
    cmd->add_option("--seed", s.seed, "override the scenario seed");
    cmd->add_option("--out", s.out, "output root directory");
    cmd->add_option("--threads", s.threads, "worker cap (0 = automatic)");
    cmd->add_flag("--deterministic,!--fast", s.deterministic, "fixed-order reductions (default on)");
}

void print_report(const gsde::RunReport& report)
{
    for (const auto& c : report.checks) {
        std::printf("%s  %-20s %-18s %7.2f s", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.kind.c_str(), c.runtime_s);
        for (const auto& [k, v] : c.metrics) std::printf("  %s=%.4g", k.c_str(), v);
        std::printf("\n");
        if (!c.message.empty()) std::printf("      %s\n", c.message.c_str());
    }
    std::printf("%s: %s (%s)\n", report.scenario.c_str(), report.pass() ? "all checks passed" : "FAILED",
                report.output_dir.string().c_str());
}

// Runs the checks of `kind` declared in the scenario, or a report-only
// default one when none is declared. An empty kind runs everything.
int run(const Shared& s, const std::string& kind)
{
    try {
        auto cfg = gsde::load_scenario(s.config);
        if (!kind.empty()) {
            std::erase_if(cfg.checks, [&](const gsde::CheckSpec& c) { return c.kind != kind; });
            if (cfg.checks.empty()) {
                if (!cfg.grid && kind != "paths" && kind != "ito_wentzell" && kind != "conservation") {
                    throw gsde::ConfigError("'" + kind + "' needs a grid section", "/grid", 0);
                }
                gsde::CheckSpec c;
                c.kind = kind;
                c.name = kind;
                cfg.checks.push_back(c);
            }
        }
        gsde::RunOptions opts;
        opts.out_root = s.out;
        opts.seed = s.seed;
        opts.threads = s.threads;
        opts.deterministic = s.deterministic;
        const auto report = gsde::run_scenario(cfg, opts);
        print_report(report);
        return report.pass() ? 0 : 1;
    } catch (const gsde::ConfigError& e) {
        std::fprintf(stderr, "config error: %s", s.config.c_str());
        if (e.line() > 0) std::fprintf(stderr, ":%zu", e.line());
        std::fprintf(stderr, ": %s: %s\n", e.field().c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int compare(const std::string& a, const std::string& b, std::optional<double> max_l1)
{
    try {
        std::ifstream fa(a), fb(b);
        if (!fa || !fb) throw gsde::InvalidArgument("cannot read " + (fa ? b : a));
        const auto m = gsde::compare_densities(gsde::read_density_csv(fa), gsde::read_density_csv(fb));
        std::printf("l1=%.6g linf=%.6g mass_err=%.6g\n", m.l1, m.linf, m.mass_err);
        return max_l1 && !(m.l1 <= *max_l1) ? 1 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Stochastic first integrals, kernel functions and Kolmogorov equations for jump-diffusions"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "paths"},
        {"verify-iw", "ito_wentzell"},
        {"check-fi", "conservation"},
        {"evolve-density", "density_invariant"},
        {"kolmogorov-forward", "forward"},
        {"kolmogorov-backward", "backward"},
        {"run", ""},
    };
    Shared shared;
    std::string selected_kind;
    for (const auto& [name, kind] : commands) {
        auto* cmd = app.add_subcommand(name, kind.empty() ? "run every check of a scenario" : "run '" + kind + "' checks");
        add_shared(cmd, shared);
        cmd->callback([&selected_kind, k = kind] { selected_kind = k; });
    }

    std::string file_a, file_b;
    std::optional<double> max_l1;
    auto* cmp = app.add_subcommand("compare", "L1/Linf distance between two density CSVs");
    cmp->add_option("a", file_a, "first density CSV")->required();
    cmp->add_option("b", file_b, "second density CSV")->required();
    cmp->add_option("--max-l1", max_l1, "exit 1 when L1 exceeds this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (cmp->parsed()) return compare(file_a, file_b, max_l1);
    return run(shared, selected_kind);
}
