#include "gsde/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gsde/csv.hpp"
#include "gsde/density_field.hpp"
#include "gsde/error.hpp"
#include "gsde/first_integral.hpp"
#include "gsde/ito_wentzell.hpp"
#include "gsde/kolmogorov.hpp"
#include "gsde/philox.hpp"
#include "gsde/sample_path.hpp"

namespace gsde {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Source positions of JSON pointers, for diagnostics.

std::string escape_token(const std::string& key)
{
    std::string out;
    for (const char c : key) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

class LineMap {
public:
    LineMap() = default;

    // Assumes `text` is valid JSON (already accepted by the parser).
    explicit LineMap(const std::string& text) : text_(&text) { value(""); }

    std::size_t line_of(std::string pointer) const
    {
        for (;;) {
            if (const auto it = lines_.find(pointer); it != lines_.end()) return it->second;
            if (pointer.empty()) return text_ ? 1 : 0;
            pointer.erase(pointer.rfind('/'));
        }
    }

private:
    void skip_ws()
    {
        const auto& s = *text_;
        while (pos_ < s.size() && (s[pos_] == ' ' || s[pos_] == '\t' || s[pos_] == '\r' || s[pos_] == '\n')) {
            if (s[pos_] == '\n') ++line_;
            ++pos_;
        }
    }

    std::string string_token()
    {
        const auto& s = *text_;
        std::string out;
        ++pos_;
        while (pos_ < s.size() && s[pos_] != '"') {
            if (s[pos_] == '\\') ++pos_;
            out += s[pos_++];
        }
        ++pos_;
        return out;
    }

    void value(const std::string& pointer)
    {
        const auto& s = *text_;
        skip_ws();
        lines_.emplace(pointer, line_);
        if (pos_ >= s.size()) return;
        if (s[pos_] == '{') {
            ++pos_;
            skip_ws();
            while (pos_ < s.size() && s[pos_] != '}') {
                const std::size_t key_line = line_;
                const std::string child = pointer + "/" + escape_token(string_token());
                lines_.emplace(child, key_line);
                skip_ws();
                ++pos_; // ':'
                value(child);
                skip_ws();
                if (s[pos_] == ',') ++pos_;
                skip_ws();
            }
            ++pos_;
        } else if (s[pos_] == '[') {
            ++pos_;
            skip_ws();
            std::size_t index = 0;
            while (pos_ < s.size() && s[pos_] != ']') {
                value(pointer + "/" + std::to_string(index++));
                skip_ws();
                if (s[pos_] == ',') ++pos_;
                skip_ws();
            }
            ++pos_;
        } else if (s[pos_] == '"') {
            string_token();
        } else {
            while (pos_ < s.size() && std::string_view(",]} \t\r\n").find(s[pos_]) == std::string_view::npos) ++pos_;
        }
    }

    const std::string* text_ = nullptr;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::map<std::string, std::size_t> lines_;
};

std::size_t line_at_offset(const std::string& text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// ---------------------------------------------------------------------------
// Strict field access.

class Validator {
public:
    explicit Validator(const LineMap& lines) : lines_(lines) {}

    [[noreturn]] void fail(const std::string& message, const std::string& pointer) const
    {
        throw ConfigError(message, pointer.empty() ? "/" : pointer, lines_.line_of(pointer));
    }

    void object(const json& j, const std::string& pointer) const
    {
        if (!j.is_object()) fail("expected an object", pointer);
    }

    void allow(const json& j, const std::string& pointer, const std::vector<std::string>& keys) const
    {
        object(j, pointer);
        for (const auto& [key, _] : j.items()) {
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                fail("unknown field '" + key + "'", pointer + "/" + escape_token(key));
            }
        }
    }

    const json& need(const json& j, const std::string& pointer, const std::string& key) const
    {
        object(j, pointer);
        const auto it = j.find(key);
        if (it == j.end()) fail("missing required field '" + key + "'", pointer + "/" + escape_token(key));
        return *it;
    }

    double number(const json& j, const std::string& pointer) const
    {
        if (!j.is_number()) fail("expected a number", pointer);
        const double v = j.get<double>();
        if (!std::isfinite(v)) fail("expected a finite number", pointer);
        return v;
    }

    double positive(const json& j, const std::string& pointer) const
    {
        const double v = number(j, pointer);
        if (!(v > 0.0)) fail("expected a positive number", pointer);
        return v;
    }

    std::uint64_t count(const json& j, const std::string& pointer) const
    {
        if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
            fail("expected a non-negative integer", pointer);
        }
        return j.get<std::uint64_t>();
    }

    std::vector<double> numbers(const json& j, const std::string& pointer) const
    {
        if (!j.is_array() || j.empty()) fail("expected a non-empty array of numbers", pointer);
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], pointer + "/" + std::to_string(i)));
        return out;
    }

    std::string text(const json& j, const std::string& pointer) const
    {
        if (!j.is_string()) fail("expected a string", pointer);
        return j.get<std::string>();
    }

private:
    const LineMap& lines_;
};

// ---------------------------------------------------------------------------
// Model registry.

struct ModelEntry {
    std::string id;
    std::vector<std::string> params;
    std::function<Model(const std::map<std::string, double>&)> make;
};

const std::vector<ModelEntry>& registry()
{
    static const std::vector<ModelEntry> entries{
        {"static", {}, [](const auto&) { return models::static_system(1); }},
        {"constant-drift", {"drift"}, [](const auto& p) { return models::constant_drift(p.at("drift")); }},
        {"heat", {"diffusion"}, [](const auto& p) { return models::heat(p.at("diffusion")); }},
        {"ornstein-uhlenbeck", {"theta", "diffusion"},
         [](const auto& p) { return models::ornstein_uhlenbeck(p.at("theta"), p.at("diffusion")); }},
        {"pure-jump-lattice", {"jump_size", "rate"},
         [](const auto& p) { return models::pure_jump(p.at("jump_size"), p.at("rate")); }},
        {"multiplicative-jump", {"jump_scale", "rate"},
         [](const auto& p) { return models::multiplicative_jump(p.at("jump_scale"), p.at("rate")); }},
        {"jump-diffusion", {"theta", "diffusion", "jump_scale", "rate"},
         [](const auto& p) {
             return models::jump_diffusion(p.at("theta"), p.at("diffusion"), p.at("jump_scale"), p.at("rate"));
         }},
    };
    return entries;
}

using ParamMap = std::map<std::string, double>;

ParamMap validate_model(const std::string& id, const json& params, const Validator& v)
{
    const auto& reg = registry();
    const auto entry = std::find_if(reg.begin(), reg.end(), [&](const ModelEntry& e) { return e.id == id; });
    if (entry == reg.end()) {
        std::string known;
        for (const auto& e : reg) known += (known.empty() ? "" : ", ") + e.id;
        v.fail("unknown model '" + id + "' (known: " + known + ")", "/model/id");
    }
    v.allow(params, "/model/params", entry->params);
    ParamMap out;
    for (const auto& name : entry->params) {
        const std::string ptr = "/model/params/" + name;
        const double value = v.number(v.need(params, "/model/params", name), ptr);
        if ((name == "diffusion" || name == "rate" || name == "theta") && value < 0.0) {
            v.fail("'" + name + "' must not be negative", ptr);
        }
        if (name == "jump_scale" && !(value > -1.0)) v.fail("'jump_scale' must exceed -1", ptr);
        out[name] = value;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Check kinds.

enum class ParamType { number, positive, count, numbers, initial };

struct ParamSpec {
    std::string name;
    ParamType type;
};

struct KindSpec {
    std::string kind;
    std::vector<ParamSpec> params;
    bool needs_grid = false;
    bool report_only = false; // an empty tolerance object is allowed
};

const std::vector<KindSpec>& kinds()
{
    using T = ParamType;
    static const std::vector<KindSpec> specs{
        {"paths", {{"n_paths", T::count}}, false, true},
        {"conservation", {{"n_paths", T::count}}},
        {"ito_wentzell", {{"n_paths", T::count}, {"dts", T::numbers}}},
        {"jacobian", {{"n_paths", T::count}}},
        {"inverse_map", {{"samples", T::count}, {"half_width", T::positive}}},
        {"density_invariant", {{"n_paths", T::count}, {"snapshots", T::count}, {"initial", T::initial}}, true},
        {"normalization", {{"path_index", T::count}, {"initial", T::initial}}, true},
        {"forward", {{"snapshots", T::count}, {"initial", T::initial}}, true},
        {"backward", {{"x", T::number}, {"s", T::number}, {"width", T::positive}}, true},
        {"mc_vs_forward", {{"n_paths", T::count}, {"coarsen", T::count}, {"initial", T::initial}}, true},
        {"duality", {{"s", T::number}, {"stride", T::count}, {"initial", T::initial}}, true},
        {"mean_field", {{"n_realizations", T::count}, {"initial", T::initial}}, true},
    };
    return specs;
}

bool has_gaussian_law(const std::string& model) { return model == "static" || model == "heat" || model == "ornstein-uhlenbeck"; }

bool has_first_integral(const std::string& model)
{
    return model == "static" || model == "constant-drift" || model == "heat" || model == "pure-jump-lattice"
           || model == "multiplicative-jump";
}

std::string initial_shape(const json& params, const std::string& fallback)
{
    const auto it = params.find("initial");
    return it == params.end() ? fallback : it->at("shape").get<std::string>();
}

// Metrics a check of this kind reports for the given model; tolerances may
// only name these.
std::vector<std::string> metric_names(const std::string& kind, const std::string& model, const json& params)
{
    if (kind == "paths") return {"final_mean", "final_variance", "mean_jumps"};
    if (kind == "conservation") return {"max_residual", "mean_residual", "max_increment_residual"};
    if (kind == "ito_wentzell") return {"order", "mean_square_order", "finest_mean_residual", "max_residual"};
    if (kind == "jacobian") return {"max_rel_error", "log_consistency"};
    if (kind == "inverse_map") return {"det_identity", "branch_error", "fd_det_error", "newton_iterations"};
    if (kind == "density_invariant") return {"max_rel_dev", "clipped_mass", "mass_drift"};
    if (kind == "normalization") return {"mass_error", "max_weak_error"};
    if (kind == "forward") {
        std::vector<std::string> out{"mass_err", "clipped_mass", "mean_error"};
        if (model == "static" || (has_gaussian_law(model) && initial_shape(params, "gaussian") == "gaussian")) {
            out.insert(out.end(), {"l1", "linf"});
        }
        if (model == "pure-jump-lattice") out.push_back("lattice_sup");
        return out;
    }
    if (kind == "backward") {
        std::vector<std::string> out{"clipped_mass"};
        if (has_gaussian_law(model) || model == "pure-jump-lattice") out.push_back("linf");
        return out;
    }
    if (kind == "mc_vs_forward") return {"l1", "linf", "overflow_mass"};
    if (kind == "duality") return {"l1", "linf"};
    if (kind == "mean_field") return {"l1", "linf"};
    return {};
}

CheckSpec validate_check(const json& j, const std::string& pointer, const std::string& model, bool has_grid,
                         const Validator& v)
{
    v.allow(j, pointer, {"kind", "name", "params", "tolerance"});
    CheckSpec check;
    check.kind = v.text(v.need(j, pointer, "kind"), pointer + "/kind");
    const auto& all = kinds();
    const auto spec = std::find_if(all.begin(), all.end(), [&](const KindSpec& k) { return k.kind == check.kind; });
    if (spec == all.end()) {
        std::string known;
        for (const auto& k : all) known += (known.empty() ? "" : ", ") + k.kind;
        v.fail("unknown check kind '" + check.kind + "' (known: " + known + ")", pointer + "/kind");
    }
    check.name = j.contains("name") ? v.text(j["name"], pointer + "/name") : check.kind;

    if (j.contains("params")) {
        const std::string pp = pointer + "/params";
        std::vector<std::string> allowed;
        for (const auto& p : spec->params) allowed.push_back(p.name);
        v.allow(j["params"], pp, allowed);
        for (const auto& p : spec->params) {
            const auto it = j["params"].find(p.name);
            if (it == j["params"].end()) continue;
            const std::string ptr = pp + "/" + p.name;
            switch (p.type) {
            case ParamType::number: v.number(*it, ptr); break;
            case ParamType::positive: v.positive(*it, ptr); break;
            case ParamType::count:
                if (v.count(*it, ptr) == 0) v.fail("expected a positive integer", ptr);
                break;
            case ParamType::numbers:
                v.numbers(*it, ptr);
                for (std::size_t i = 0; i < it->size(); ++i) v.positive((*it)[i], ptr + "/" + std::to_string(i));
                break;
            case ParamType::initial: {
                v.allow(*it, ptr, {"shape", "width"});
                const std::string shape = v.text(v.need(*it, ptr, "shape"), ptr + "/shape");
                if (shape != "gaussian" && shape != "bump") v.fail("shape must be 'gaussian' or 'bump'", ptr + "/shape");
                v.positive(v.need(*it, ptr, "width"), ptr + "/width");
                break;
            }
            }
        }
        check.params = j["params"];
    }

    if (spec->needs_grid && !has_grid) v.fail("check '" + check.name + "' needs a grid section", pointer + "/kind");
    if (check.kind == "conservation" && !has_first_integral(model)) {
        v.fail("no known first integral for model '" + model + "'", pointer + "/kind");
    }

    const std::string tp = pointer + "/tolerance";
    const json& tol = v.need(j, pointer, "tolerance");
    v.object(tol, tp);
    if (tol.empty() && !spec->report_only) v.fail("tolerance must name at least one metric", tp);
    const auto metrics = metric_names(check.kind, model, check.params);
    for (const auto& [key, value] : tol.items()) {
        const std::string metric = key.rfind("min_", 0) == 0 ? key.substr(4) : key;
        if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) {
            std::string known;
            for (const auto& m : metrics) known += (known.empty() ? "" : ", ") + m;
            v.fail("unknown metric '" + metric + "' for check kind '" + check.kind + "' (available: " + known + ")",
                   tp + "/" + escape_token(key));
        }
        check.tolerances[key] = v.number(value, tp + "/" + escape_token(key));
    }
    return check;
}

// ---------------------------------------------------------------------------
// Oracles.

double gaussian_pdf(double x, double mean, double var)
{
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

double poisson_pmf(std::size_t k, double mean)
{
    const double kd = static_cast<double>(k);
    return std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
}

struct ModelOracle {
    std::string id;
    ParamMap p;

    double get(const char* key) const
    {
        const auto it = p.find(key);
        return it == p.end() ? 0.0 : it->second;
    }

    // E x(t) from x(0) = m0.
    double mean(double m0, double t) const
    {
        if (id == "constant-drift") return m0 + get("drift") * t;
        if (id == "ornstein-uhlenbeck") return m0 * std::exp(-get("theta") * t);
        if (id == "pure-jump-lattice") return m0 + get("rate") * get("jump_size") * t;
        if (id == "multiplicative-jump") return m0 * std::exp(get("rate") * get("jump_scale") * t);
        if (id == "jump-diffusion") return m0 * std::exp((get("rate") * get("jump_scale") - get("theta")) * t);
        return m0;
    }

    // Variance at t of the Gaussian law started from N(m0, v0).
    double variance(double v0, double t) const
    {
        const double b = get("diffusion");
        const double theta = get("theta");
        if (theta == 0.0) return v0 + b * b * t;
        return v0 * std::exp(-2.0 * theta * t) - b * b * std::expm1(-2.0 * theta * t) / (2.0 * theta);
    }

    // J(T) given the number of jumps on the path.
    double jacobian(double T, std::size_t jumps) const
    {
        const double n = static_cast<double>(jumps);
        if (id == "ornstein-uhlenbeck") return std::exp(-get("theta") * T);
        if (id == "multiplicative-jump") return std::pow(1.0 + get("jump_scale"), n);
        if (id == "jump-diffusion") return std::exp(-get("theta") * T) * std::pow(1.0 + get("jump_scale"), n);
        return 1.0;
    }
};

// ---------------------------------------------------------------------------
// Check execution.

double param_or(const json& params, const char* key, double fallback)
{
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->get<double>();
}

std::size_t count_or(const json& params, const char* key, std::size_t fallback)
{
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->get<std::size_t>();
}

struct InitialShape {
    std::string shape;
    double width = 0.0;
};

InitialShape initial_or(const json& params, InitialShape fallback)
{
    const auto it = params.find("initial");
    if (it == params.end()) return fallback;
    return {it->at("shape").get<std::string>(), it->at("width").get<double>()};
}

GridDensity make_initial(const GridSpec& spec, const Vector& center, const InitialShape& init)
{
    return init.shape == "bump" ? bump_density(spec, center, init.width) : gaussian_density(spec, center, init.width);
}

std::size_t snapshot_stride(double T, double dt, std::size_t snapshots)
{
    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    return std::max<std::size_t>(1, steps / std::max<std::size_t>(snapshots, 1));
}

class CheckRunner {
public:
    CheckRunner(const ScenarioConfig& cfg, const Model& model, const ParamMap& params, const ExecutionPolicy& policy,
                std::uint64_t seed, fs::path dir)
        : cfg_(cfg), model_(model), oracle_{cfg.model_id, params}, policy_(policy), seed_(seed), dir_(std::move(dir))
    {
    }

    void run(const CheckSpec& check, CheckResult& result)
    {
        result_ = &result;
        prefix_ = check.name;
        const json& p = check.params;
        const std::string& k = check.kind;
        if (k == "paths") paths(p);
        else if (k == "conservation") conservation(p);
        else if (k == "ito_wentzell") ito_wentzell(p);
        else if (k == "jacobian") jacobian(p);
        else if (k == "inverse_map") inverse_map(p);
        else if (k == "density_invariant") density_invariant(p);
        else if (k == "normalization") normalization(p);
        else if (k == "forward") forward(p);
        else if (k == "backward") backward(p);
        else if (k == "mc_vs_forward") mc_vs_forward(p);
        else if (k == "duality") duality(p);
        else if (k == "mean_field") mean_field(p);
    }

private:
    std::ofstream artifact(const std::string& suffix)
    {
        const std::string file = prefix_ + suffix;
        result_->artifacts.push_back(file);
        std::ofstream out(dir_ / file, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir_ / file).string());
        return out;
    }

    void metric(const std::string& name, double value) { result_->metrics[name] = value; }

    const CoefficientField& coeffs() const { return model_.coeffs; }
    const MarkMeasure& measure() const { return model_.measure; }
    GridSpec grid() const { return cfg_.grid->spec(); }
    double grid_dt() const { return cfg_.grid->dt; }
    double x0() const { return cfg_.x0[0]; }

    void paths(const json& p)
    {
        const std::size_t n = count_or(p, "n_paths", 4);
        const auto ens =
            simulate_ensemble(coeffs(), measure(), cfg_.x0, cfg_.T, cfg_.dt, seed_, n, policy_, PathStorage::full);
        for (std::size_t i = 0; i < n; ++i) {
            auto out = artifact("_path_" + std::to_string(i) + ".csv");
            write_path_csv(out, ens.paths[i]);
        }
        const auto moments = terminal_moments(ens, policy_);
        const auto jumps = jump_counts(ens);
        double total = 0.0;
        for (const auto j : jumps) total += static_cast<double>(j);
        metric("final_mean", moments.mean[0]);
        metric("final_variance", n > 1 ? moments.variance[0] : 0.0);
        metric("mean_jumps", total / static_cast<double>(n));
    }

    SFICandidate candidate() const
    {
        const std::string& id = cfg_.model_id;
        if (id == "constant-drift") return linear_sfi(oracle_.get("drift"), 0.0);
        if (id == "heat") return linear_sfi(0.0, oracle_.get("diffusion"));
        if (id == "pure-jump-lattice") return jump_count_sfi(oracle_.get("jump_size"));
        if (id == "multiplicative-jump") return multiplicative_jump_sfi(oracle_.get("jump_scale"));
        return linear_sfi(0.0, 0.0);
    }

    void conservation(const json& p)
    {
        const std::size_t n = count_or(p, "n_paths", 100);
        const auto u = candidate();
        const auto ens =
            simulate_ensemble(coeffs(), measure(), cfg_.x0, cfg_.T, cfg_.dt, seed_, n, policy_, PathStorage::full);
        const auto report = check_conservation(u, sfi_triple(u, coeffs()), coeffs(), measure(), ens, policy_);
        auto out = artifact(".csv");
        write_conservation_csv(out, report);
        metric("max_residual", report.max_residual);
        metric("mean_residual", report.mean_residual);
        metric("max_increment_residual", report.max_increment_residual);
    }

    void ito_wentzell(const json& p)
    {
        const std::size_t n = count_or(p, "n_paths", 200);
        std::vector<double> dts;
        if (p.contains("dts")) {
            dts = p["dts"].get<std::vector<double>>();
        } else {
            for (int k = 6; k <= 10; ++k) dts.push_back(std::ldexp(1.0, -k));
        }
        const auto F = RandomScalarField::deterministic(
            [](double, const Vector& x) { return x.squaredNorm(); }, [](double, const Vector& x) { return Vector(2.0 * x); },
            [](double, const Vector& x) { return Matrix(2.0 * Matrix::Identity(x.size(), x.size())); });
        const auto ladder =
            verify_ladder(F, DifferentialTriple::zero(), coeffs(), measure(), cfg_.x0, cfg_.T, dts, n, seed_, policy_);
        auto out = artifact(".csv");
        write_ladder_csv(out, ladder);
        const auto finest = std::min_element(ladder.rungs.begin(), ladder.rungs.end(),
                                             [](const LadderRung& a, const LadderRung& b) { return a.dt < b.dt; });
        double worst = 0.0;
        for (const auto& r : ladder.rungs) worst = std::max(worst, r.max_residual);
        metric("order", ladder.order);
        metric("mean_square_order", ladder.mean_square_order);
        metric("finest_mean_residual", finest->mean_residual);
        metric("max_residual", worst);
    }

    void jacobian(const json& p)
    {
        const std::size_t n = count_or(p, "n_paths", 20);
        std::vector<double> J(n), oracle(n), log_dev(n);
        std::vector<std::size_t> jumps(n);
        parallel_for(n, policy_, [&](std::size_t i) {
            const auto path = simulate_path(coeffs(), measure(), cfg_.x0, cfg_.T, cfg_.dt, seed_, i);
            const auto jac = evolve_jacobian(coeffs(), measure(), path);
            J[i] = jac.final_value();
            jumps[i] = path.jumps.size();
            oracle[i] = oracle_.jacobian(cfg_.T, jumps[i]);
            log_dev[i] = jac.log_consistency();
        });
        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header({"path_index", "jumps", "jacobian", "oracle", "rel_error"});
        double worst = 0.0, worst_log = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double rel = std::abs(J[i] - oracle[i]) / std::abs(oracle[i]);
            worst = std::max(worst, rel);
            worst_log = std::max(worst_log, log_dev[i]);
            csv.field(static_cast<std::uint64_t>(i)).field(static_cast<std::uint64_t>(jumps[i])).field(J[i]);
            csv.field(oracle[i]).field(rel).end_row();
        }
        metric("max_rel_error", worst);
        metric("log_consistency", worst_log);
    }

    void inverse_map(const json& p)
    {
        const std::size_t n = count_or(p, "samples", 1000);
        double lo = x0() - 2.0, hi = x0() + 2.0;
        if (p.contains("half_width")) {
            lo = x0() - p["half_width"].get<double>();
            hi = x0() + p["half_width"].get<double>();
        } else if (cfg_.grid) {
            lo = cfg_.grid->lo[0];
            hi = cfg_.grid->hi[0];
        }
        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header({"t", "x", "mark", "y", "forward_det", "inverse_det", "fd_inverse_det", "iterations"});
        double det_id = 0.0, branch = 0.0, fd_err = 0.0, iterations = 0.0;
        if (coeffs().has_jump() && !measure().empty()) {
            std::mt19937_64 rng(seed_);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = cfg_.T * unit(rng);
                const Vector x = Vector::Constant(1, lo + (hi - lo) * unit(rng));
                const Vector& mark = measure().atoms()[i % measure().size()].mark;
                const auto sol = inverse_jump_map(coeffs(), t, x, mark);
                const double fd = inverse_det_fd(coeffs(), t, x, mark);
                det_id = std::max(det_id, std::abs(sol.inverse_det * sol.forward_det - 1.0));
                const Vector image = sol.y + coeffs().jump(t, sol.y, mark);
                branch = std::max(branch, (image - x).cwiseAbs().maxCoeff() / std::max(1.0, x.cwiseAbs().maxCoeff()));
                fd_err = std::max(fd_err, std::abs(fd - sol.inverse_det));
                iterations = std::max(iterations, static_cast<double>(sol.iterations));
                csv.field(t).field(x[0]).field(mark[0]).field(sol.y[0]).field(sol.forward_det).field(sol.inverse_det);
                csv.field(fd).field(static_cast<std::uint64_t>(sol.iterations)).end_row();
            }
        }
        metric("det_identity", det_id);
        metric("branch_error", branch);
        metric("fd_det_error", fd_err);
        metric("newton_iterations", iterations);
    }

    void density_invariant(const json& p)
    {
        const std::size_t n = count_or(p, "n_paths", 1);
        const auto spec = grid();
        const auto rho0 = make_initial(spec, cfg_.x0, initial_or(p, {"gaussian", 0.5}));
        DensityOptions opts;
        opts.snapshot_every = snapshot_stride(cfg_.T, grid_dt(), count_or(p, "snapshots", 10));
        double dev = 0.0, clipped = 0.0, drift = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto path = simulate_path(coeffs(), measure(), cfg_.x0, cfg_.T, grid_dt(), seed_, i);
            const auto dens = evolve_density_field(coeffs(), measure(), path, rho0, opts);
            const auto jac = evolve_jacobian(coeffs(), measure(), path);
            const auto report = check_density_invariant(jac, dens, path, rho0);
            dev = std::max(dev, report.max_rel_dev);
            clipped = std::max(clipped, dens.clipped_mass);
            for (const double m : dens.snapshot_masses) drift = std::max(drift, std::abs(m - dens.snapshot_masses[0]));
            auto inv = artifact("_invariant_" + std::to_string(i) + ".csv");
            write_invariant_csv(inv, report);
            if (i == 0) {
                auto traj = artifact("_density_0.csv");
                write_density_trajectory_csv(traj, dens.snapshot_times, dens.snapshots);
            }
        }
        metric("max_rel_dev", dev);
        metric("clipped_mass", clipped);
        metric("mass_drift", drift);
    }

    void normalization(const json& p)
    {
        const std::uint64_t index = count_or(p, "path_index", 0);
        const auto spec = grid();
        const auto rho0 = make_initial(spec, cfg_.x0, initial_or(p, {"gaussian", 0.5}));
        const auto path = simulate_path(coeffs(), measure(), cfg_.x0, cfg_.T, grid_dt(), seed_, index);
        const auto dens = evolve_density_field(coeffs(), measure(), path, rho0);
        const auto flow = density_flow(coeffs(), measure(), rho0, cfg_.T, grid_dt(), seed_, index, policy_);
        const auto report = check_normalization(dens, default_test_functions(), flow, rho0);
        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header({"function", "grid_value", "flow_value", "flow_stderr", "abs_diff"});
        double worst = 0.0;
        for (const auto& row : report.rows) {
            csv.field(std::string_view(row.name)).field(row.grid_value).field(row.flow_value);
            csv.field(row.flow_stderr).field(row.abs_diff).end_row();
            worst = std::max(worst, row.abs_diff);
        }
        metric("mass_error", std::abs(report.mass_error));
        metric("max_weak_error", worst);
    }

    // Closed-form density at T where one exists.
    std::optional<GridDensity> forward_oracle(const GridDensity& p0, const InitialShape& init) const
    {
        const std::string& id = cfg_.model_id;
        if (id == "static") return p0;
        if (!has_gaussian_law(id) || init.shape != "gaussian") return std::nullopt;
        const double mean = oracle_.mean(x0(), cfg_.T);
        const double var = oracle_.variance(init.width * init.width, cfg_.T);
        return GridDensity::from_function(p0.spec, [&](const Vector& x) { return gaussian_pdf(x[0], mean, var); });
    }

    void forward(const json& p)
    {
        const auto spec = grid();
        const auto init = initial_or(p, {"gaussian", 2.0 * spec.axis(0).dx});
        const auto p0 = make_initial(spec, cfg_.x0, init);
        SolverOptions opts;
        opts.snapshot_every = snapshot_stride(cfg_.T, grid_dt(), count_or(p, "snapshots", 10));
        const auto start = std::chrono::steady_clock::now();
        const auto traj = solve_forward(coeffs(), measure(), p0, cfg_.T, grid_dt(), opts);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto& fin = traj.final();

        {
            auto out = artifact("_trajectory.csv");
            write_density_trajectory_csv(out, traj.times, traj.snapshots);
        }
        const auto oracle = forward_oracle(p0, init);
        {
            auto out = artifact("_final.csv");
            CsvWriter csv(out);
            csv.header(oracle ? std::vector<std::string>{"x", "rho", "oracle"} : std::vector<std::string>{"x", "rho"});
            for (std::size_t j = 0; j < spec.size(); ++j) {
                csv.field(spec.node(j)[0]).field(fin.values[j]);
                if (oracle) csv.field(oracle->values[j]);
                csv.end_row();
            }
        }

        const double mean = fin.integrate([](const Vector& x) { return x[0]; }) / fin.mass();
        metric("mass_err", std::abs(fin.mass() - 1.0));
        metric("clipped_mass", traj.clipped_mass);
        metric("mean_error", std::abs(mean - oracle_.mean(p0.integrate([](const Vector& x) { return x[0]; }), cfg_.T)));
        DensityMetrics dm;
        dm.mass_err = fin.mass() - 1.0;
        if (oracle) {
            dm = compare_densities(fin, *oracle);
            metric("l1", dm.l1);
            metric("linf", dm.linf);
        }
        if (cfg_.model_id == "pure-jump-lattice") {
            const double h = oracle_.get("jump_size");
            const double lambda_t = oracle_.get("rate") * cfg_.T;
            const double span = h > 0.0 ? spec.axis(0).hi() - x0() : x0() - spec.axis(0).lo;
            const auto count = static_cast<std::size_t>(std::floor(span / std::abs(h) + 1e-9)) + 1;
            const auto masses = lattice_masses(fin, x0(), h, count);
            double sup = 0.0;
            for (std::size_t k = 0; k < count; ++k) sup = std::max(sup, std::abs(masses[k] - poisson_pmf(k, lambda_t)));
            metric("lattice_sup", sup);
        }
        auto json_out = artifact("_metrics.json");
        write_metrics_json(json_out, dm, secs);
    }

    void backward(const json& p)
    {
        const auto spec = grid();
        const double x = param_or(p, "x", x0());
        const double s = param_or(p, "s", 0.0);
        const double width = param_or(p, "width", 2.0 * spec.axis(0).dx);
        if (!(s < cfg_.T)) throw InvalidArgument("backward check needs s < T");
        const auto terminal = gaussian_density(spec, Vector::Constant(1, x), width);
        SolverOptions opts;
        opts.check_support = false;
        const auto traj = solve_backward(coeffs(), measure(), terminal, cfg_.T, s, grid_dt(), opts);
        const auto& fin = traj.final();
        const double tau = cfg_.T - s;

        std::function<double(double)> exact;
        const std::string& id = cfg_.model_id;
        if (has_gaussian_law(id)) {
            const double theta = oracle_.get("theta");
            const double var = oracle_.variance(0.0, tau) + width * width;
            exact = [=](double y) { return gaussian_pdf(x, y * std::exp(-theta * tau), var); };
        } else if (id == "pure-jump-lattice") {
            const double h = oracle_.get("jump_size");
            const double mean = oracle_.get("rate") * tau;
            exact = [=](double y) {
                double sum = 0.0;
                for (std::size_t k = 0; k < 200; ++k) {
                    const double w = poisson_pmf(k, mean);
                    sum += w * gaussian_pdf(y + static_cast<double>(k) * h, x, width * width);
                    if (static_cast<double>(k) > mean && w < 1e-17) break;
                }
                return sum;
            };
        }

        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header(exact ? std::vector<std::string>{"y", "p", "oracle"} : std::vector<std::string>{"y", "p"});
        double linf = 0.0;
        for (std::size_t j = 0; j < spec.size(); ++j) {
            const double y = spec.node(j)[0];
            csv.field(y).field(fin.values[j]);
            if (exact) {
                const double e = exact(y);
                csv.field(e);
                linf = std::max(linf, std::abs(fin.values[j] - e));
            }
            csv.end_row();
        }
        metric("clipped_mass", traj.clipped_mass);
        if (exact) metric("linf", linf);
    }

    void mc_vs_forward(const json& p)
    {
        const std::size_t n = count_or(p, "n_paths", 100000);
        const std::size_t factor = count_or(p, "coarsen", 10);
        // Keep the leading whole blocks of `factor` cells per axis.
        std::vector<Axis> axes = grid().axes();
        for (auto& a : axes) a.count -= a.count % factor;
        const GridSpec spec(axes);
        const auto p0 = make_initial(spec, cfg_.x0, initial_or(p, {"gaussian", 2.0 * spec.axis(0).dx}));
        // Path i starts from a draw of p0: node by inverse CDF, then uniform within its cell.
        std::vector<double> cdf(p0.values.size());
        std::partial_sum(p0.values.begin(), p0.values.end(), cdf.begin());
        const double dx = spec.axis(0).dx;
        std::vector<Vector> finals(n);
        parallel_for(n, policy_, [&](std::size_t i) {
            const auto u = CounterRng(seed_, i).uniforms(0, Channel::user, 0, 0);
            const auto node = static_cast<std::size_t>(
                std::upper_bound(cdf.begin(), cdf.end(), u[0] * cdf.back()) - cdf.begin());
            const Vector start = spec.node(std::min(node, cdf.size() - 1)) + Vector::Constant(1, (u[1] - 0.5) * dx);
            finals[i] = simulate_path(coeffs(), measure(), start, cfg_.T, cfg_.dt, seed_, i, PathStorage::terminal)
                            .final_state();
        });
        const auto mc = mc_density(finals, spec);
        const auto pde = solve_forward(coeffs(), measure(), p0, cfg_.T, grid_dt());
        const auto a = coarsen(mc.density, factor);
        const auto b = coarsen(pde.final(), factor);
        const auto m = compare_densities(a, b);
        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header({"x", "mc", "forward"});
        for (std::size_t j = 0; j < a.spec.size(); ++j) {
            csv.field(a.spec.node(j)[0]).field(a.values[j]).field(b.values[j]).end_row();
        }
        metric("l1", m.l1);
        metric("linf", m.linf);
        metric("overflow_mass", mc.overflow_mass);
    }

    void duality(const json& p)
    {
        const auto spec = grid();
        const double s = param_or(p, "s", 0.5 * cfg_.T);
        const auto p0 = make_initial(spec, cfg_.x0, initial_or(p, {"gaussian", 2.0 * spec.axis(0).dx}));
        const auto report =
            check_duality(coeffs(), measure(), p0, s, cfg_.T, grid_dt(), count_or(p, "stride", 4), policy_);
        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header({"x", "composed", "direct"});
        for (std::size_t j = 0; j < report.x.size(); ++j) {
            csv.field(report.x[j]).field(report.composed[j]).field(report.direct[j]).end_row();
        }
        metric("l1", report.l1);
        metric("linf", report.linf);
    }

    void mean_field(const json& p)
    {
        const auto spec = grid();
        const auto rho0 = make_initial(spec, cfg_.x0, initial_or(p, {"gaussian", 0.5}));
        const auto avg = mean_field_average(coeffs(), measure(), rho0, cfg_.T, grid_dt(),
                                            count_or(p, "n_realizations", 1000), seed_, policy_);
        const auto fwd = solve_forward(coeffs(), measure(), rho0, cfg_.T, grid_dt());
        const auto m = compare_densities(avg, fwd.final());
        auto out = artifact(".csv");
        CsvWriter csv(out);
        csv.header({"x", "mean_field", "forward"});
        for (std::size_t j = 0; j < spec.size(); ++j) {
            csv.field(spec.node(j)[0]).field(avg.values[j]).field(fwd.final().values[j]).end_row();
        }
        metric("l1", m.l1);
        metric("linf", m.linf);
    }

    const ScenarioConfig& cfg_;
    const Model& model_;
    ModelOracle oracle_;
    ExecutionPolicy policy_;
    std::uint64_t seed_;
    fs::path dir_;
    CheckResult* result_ = nullptr;
    std::string prefix_;
};

void judge(CheckResult& r)
{
    r.pass = true;
    std::string failing;
    for (const auto& [key, bound] : r.tolerances) {
        const bool lower = key.rfind("min_", 0) == 0;
        const std::string name = lower ? key.substr(4) : key;
        const auto it = r.metrics.find(name);
        const double value = it == r.metrics.end() ? std::nan("") : it->second;
        const bool ok = lower ? value >= bound : value <= bound;
        if (!ok) {
            r.pass = false;
            std::ostringstream os;
            os << name << " = " << value << (lower ? " < " : " > ") << bound;
            failing += (failing.empty() ? "" : "; ") + os.str();
        }
    }
    if (!failing.empty()) r.message = failing;
}

std::string timestamp_now()
{
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    localtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    return buf;
}

std::string csv_header(const fs::path& file)
{
    std::ifstream in(file);
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

void write_plot_script(const fs::path& dir, const RunReport& report)
{
    std::ofstream out(dir / "plot.gp", std::ios::binary);
    out << "set datafile separator ','\n"
        << "set key autotitle columnhead\n"
        << "set terminal pngcairo size 900,600\n";
    for (const auto& check : report.checks) {
        for (const auto& file : check.artifacts) {
            if (fs::path(file).extension() != ".csv") continue;
            const std::string header = csv_header(dir / file);
            const auto columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
            if (columns < 2) continue;
            const std::string png = fs::path(file).replace_extension(".png").string();
            out << "\nset output '" << png << "'\nset title '" << check.name << "'\n";
            if (header.rfind("t,x,rho", 0) == 0) {
                out << "plot '" << file << "' using 2:3:1 with points pointtype 7 pointsize 0.3 palette\n";
            } else if (columns == 2) {
                out << "plot '" << file << "' using 1:2 with lines\n";
            } else {
                out << "plot for [c=2:" << std::min<std::size_t>(columns, 5) << "] '" << file
                    << "' using 1:c with lines\n";
            }
        }
    }
}

} // namespace

// ---------------------------------------------------------------------------

GridSpec GridConfig::spec() const
{
    std::vector<Axis> axes;
    for (std::size_t d = 0; d < lo.size(); ++d) axes.push_back(Axis::span(lo[d], hi[d], dx[d]));
    return GridSpec(std::move(axes));
}

Model build_model(const std::string& id, const json& params)
{
    const LineMap none;
    const Validator v(none);
    const auto values = validate_model(id, params, v);
    const auto& reg = registry();
    return std::find_if(reg.begin(), reg.end(), [&](const ModelEntry& e) { return e.id == id; })->make(values);
}

std::vector<std::string> model_ids()
{
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.id);
    return out;
}

std::vector<std::string> check_kinds()
{
    std::vector<std::string> out;
    for (const auto& k : kinds()) out.push_back(k.kind);
    return out;
}

ScenarioConfig parse_scenario(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), "", line_at_offset(text, e.byte));
    }
    const LineMap lines(text);
    const Validator v(lines);
    v.allow(j, "", {"schema_version", "name", "model", "x0", "time", "seed", "grid", "checks"});

    ScenarioConfig cfg;
    cfg.schema_version = static_cast<int>(v.count(v.need(j, "", "schema_version"), "/schema_version"));
    if (cfg.schema_version != kScenarioSchemaVersion) {
        v.fail("unsupported schema_version " + std::to_string(cfg.schema_version) + " (expected "
                   + std::to_string(kScenarioSchemaVersion) + ")",
               "/schema_version");
    }
    cfg.name = v.text(v.need(j, "", "name"), "/name");
    if (cfg.name.empty() || cfg.name.find_first_of("/\\") != std::string::npos) {
        v.fail("name must be non-empty and contain no path separators", "/name");
    }

    const json& model = v.need(j, "", "model");
    v.allow(model, "/model", {"id", "params"});
    cfg.model_id = v.text(v.need(model, "/model", "id"), "/model/id");
    cfg.model_params = model.contains("params") ? model["params"] : json::object();
    validate_model(cfg.model_id, cfg.model_params, v);

    const auto x0 = v.numbers(v.need(j, "", "x0"), "/x0");
    if (x0.size() != 1) v.fail("x0 must have 1 component for model '" + cfg.model_id + "'", "/x0");
    cfg.x0 = Eigen::Map<const Vector>(x0.data(), static_cast<Eigen::Index>(x0.size()));

    const json& time = v.need(j, "", "time");
    v.allow(time, "/time", {"T", "dt"});
    cfg.T = v.positive(v.need(time, "/time", "T"), "/time/T");
    cfg.dt = v.positive(v.need(time, "/time", "dt"), "/time/dt");
    cfg.seed = v.count(v.need(j, "", "seed"), "/seed");

    if (j.contains("grid")) {
        const json& g = j["grid"];
        v.allow(g, "/grid", {"lo", "hi", "dx", "dt"});
        GridConfig grid;
        grid.lo = v.numbers(v.need(g, "/grid", "lo"), "/grid/lo");
        grid.hi = v.numbers(v.need(g, "/grid", "hi"), "/grid/hi");
        grid.dx = v.numbers(v.need(g, "/grid", "dx"), "/grid/dx");
        grid.dt = v.positive(v.need(g, "/grid", "dt"), "/grid/dt");
        if (grid.lo.size() != x0.size() || grid.hi.size() != x0.size() || grid.dx.size() != x0.size()) {
            v.fail("grid lo, hi and dx must match the state dimension", "/grid");
        }
        for (std::size_t d = 0; d < grid.lo.size(); ++d) {
            const std::string i = std::to_string(d);
            if (!(grid.dx[d] > 0.0)) v.fail("dx must be positive", "/grid/dx/" + i);
            if (!(grid.hi[d] - grid.lo[d] >= 2.0 * grid.dx[d])) v.fail("grid needs at least three nodes", "/grid/hi/" + i);
        }
        cfg.grid = grid;
    }

    const json& checks = v.need(j, "", "checks");
    if (!checks.is_array() || checks.empty()) v.fail("expected a non-empty array of checks", "/checks");
    std::set<std::string> names;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const std::string ptr = "/checks/" + std::to_string(i);
        auto check = validate_check(checks[i], ptr, cfg.model_id, cfg.grid.has_value(), v);
        if (!names.insert(check.name).second) {
            v.fail("duplicate check name '" + check.name + "' (set a distinct 'name')", ptr);
        }
        cfg.checks.push_back(std::move(check));
    }
    return cfg;
}

ScenarioConfig load_scenario(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string(), "", 0);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario(text.str());
}

bool RunReport::pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

nlohmann::ordered_json RunReport::to_json() const
{
    nlohmann::ordered_json out;
    out["schema_version"] = kScenarioSchemaVersion;
    out["scenario"] = scenario;
    out["seed"] = seed;
    out["output_dir"] = output_dir.string();
    out["pass"] = pass();
    out["runtime_s"] = runtime_s;
    auto& list = out["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
        nlohmann::ordered_json item;
        item["name"] = c.name;
        item["kind"] = c.kind;
        item["pass"] = c.pass;
        item["metrics"] = c.metrics;
        item["tolerances"] = c.tolerances;
        item["runtime_s"] = c.runtime_s;
        item["artifacts"] = c.artifacts;
        if (!c.message.empty()) item["message"] = c.message;
        list.push_back(std::move(item));
    }
    return out;
}

RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options)
{
    const auto start = std::chrono::steady_clock::now();
    RunReport report;
    report.scenario = config.name;
    report.seed = options.seed.value_or(config.seed);
    report.output_dir = options.out_root / (options.timestamp ? config.name + "_" + timestamp_now() : config.name);
    fs::create_directories(report.output_dir);

    const LineMap none;
    const auto params = validate_model(config.model_id, config.model_params, Validator(none));
    const Model model = build_model(config.model_id, config.model_params);
    const ExecutionPolicy policy{options.threads, options.deterministic};
    CheckRunner runner(config, model, params, policy, report.seed, report.output_dir);

    for (const auto& check : config.checks) {
        CheckResult result;
        result.name = check.name;
        result.kind = check.kind;
        result.tolerances = check.tolerances;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            runner.run(check, result);
            judge(result);
        } catch (const std::exception& e) {
            result.pass = false;
            result.message = e.what();
        }
        result.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.checks.push_back(std::move(result));
    }

    report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_plot_script(report.output_dir, report);
    std::ofstream summary(report.output_dir / "summary.json", std::ios::binary);
    summary << report.to_json().dump(2) << '\n';
    return report;
}

} // namespace gsde
