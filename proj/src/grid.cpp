#include "gsde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "gsde/csv.hpp"
#include "gsde/error.hpp"

namespace gsde {

Axis Axis::span(double lo, double hi, double dx)
{
    if (!(dx > 0.0) || !std::isfinite(dx)) throw InvalidGrid("grid spacing must be positive");
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw InvalidGrid("grid bounds must satisfy lo < hi");
    const double cells = std::round((hi - lo) / dx);
    return Axis{lo, dx, static_cast<std::size_t>(cells) + 1};
}

GridSpec::GridSpec(std::vector<Axis> axes) : axes_(std::move(axes))
{
    if (axes_.empty() || axes_.size() > 2) throw InvalidGrid("grids have one or two dimensions");
    size_ = 1;
    for (const auto& a : axes_) {
        if (a.count < 3) throw InvalidGrid("each grid axis needs at least three nodes");
        if (!(a.dx > 0.0) || !std::isfinite(a.dx) || !std::isfinite(a.lo)) throw InvalidGrid("bad grid axis");
        size_ *= a.count;
    }
}

double GridSpec::cell_volume() const noexcept
{
    double v = 1.0;
    for (const auto& a : axes_) v *= a.dx;
    return v;
}

std::array<std::size_t, 2> GridSpec::unflatten(std::size_t flat) const noexcept
{
    if (axes_.size() == 1) return {flat, 0};
    return {flat % axes_[0].count, flat / axes_[0].count};
}

Vector GridSpec::node(std::size_t flat) const
{
    const auto idx = unflatten(flat);
    Vector x(static_cast<Eigen::Index>(axes_.size()));
    for (std::size_t d = 0; d < axes_.size(); ++d) x[static_cast<Eigen::Index>(d)] = axes_[d].node(idx[d]);
    return x;
}

bool GridSpec::same_as(const GridSpec& other) const noexcept
{
    if (axes_.size() != other.axes_.size()) return false;
    for (std::size_t d = 0; d < axes_.size(); ++d) {
        const auto& a = axes_[d];
        const auto& b = other.axes_[d];
        if (a.count != b.count) return false;
        if (std::abs(a.dx - b.dx) > 1e-12 * a.dx) return false;
        if (std::abs(a.lo - b.lo) > 1e-12 * std::max(1.0, std::abs(a.lo))) return false;
    }
    return true;
}

GridDensity GridDensity::from_function(const GridSpec& spec, const std::function<double(const Vector&)>& fn)
{
    GridDensity out(spec);
    for (std::size_t j = 0; j < spec.size(); ++j) out.values[j] = fn(spec.node(j));
    return out;
}

double GridDensity::mass() const
{
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum * spec.cell_volume();
}

double GridDensity::max_value() const
{
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double GridDensity::integrate(const std::function<double(const Vector&)>& f) const
{
    double sum = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (values[j] != 0.0) sum += f(spec.node(j)) * values[j];
    }
    return sum * spec.cell_volume();
}

bool GridDensity::contains(const Vector& x) const
{
    for (std::size_t d = 0; d < spec.dims(); ++d) {
        const auto& a = spec.axis(d);
        const double xi = x[static_cast<Eigen::Index>(d)];
        if (!(xi >= a.lo && xi <= a.hi())) return false;
    }
    return true;
}

double GridDensity::interpolate(const Vector& x) const
{
    std::array<std::size_t, 2> base{0, 0};
    std::array<double, 2> frac{0.0, 0.0};
    for (std::size_t d = 0; d < spec.dims(); ++d) {
        const auto& a = spec.axis(d);
        const double s = (x[static_cast<Eigen::Index>(d)] - a.lo) / a.dx;
        if (!(s >= 0.0 && s <= static_cast<double>(a.count - 1))) return 0.0;
        const auto i = std::min(static_cast<std::size_t>(s), a.count - 2);
        base[d] = i;
        frac[d] = s - static_cast<double>(i);
    }
    if (spec.dims() == 1) return (1.0 - frac[0]) * values[base[0]] + frac[0] * values[base[0] + 1];
    const std::size_t n0 = spec.axis(0).count;
    const std::size_t j = base[0] + n0 * base[1];
    return (1.0 - frac[0]) * (1.0 - frac[1]) * values[j] + frac[0] * (1.0 - frac[1]) * values[j + 1]
           + (1.0 - frac[0]) * frac[1] * values[j + n0] + frac[0] * frac[1] * values[j + n0 + 1];
}

GridDensity& GridDensity::normalize()
{
    const double m = mass();
    if (!(m > 0.0)) throw InvalidArgument("cannot normalize a density with zero mass");
    for (auto& v : values) v /= m;
    return *this;
}

GridDensity gaussian_density(const GridSpec& spec, const Vector& mean, double sigma)
{
    if (!(sigma > 0.0)) throw InvalidArgument("Gaussian width must be positive");
    auto out = GridDensity::from_function(
        spec, [&](const Vector& x) { return std::exp(-0.5 * (x - mean).squaredNorm() / (sigma * sigma)); });
    return out.normalize();
}

double bump_shape(const Vector& x, const Vector& center, double radius)
{
    const double r2 = (x - center).squaredNorm() / (radius * radius);
    if (r2 >= 1.0) return 0.0;
    const double s = 1.0 - r2;
    return s * s * s;
}

GridDensity bump_density(const GridSpec& spec, const Vector& center, double radius)
{
    if (!(radius > 0.0)) throw InvalidArgument("bump radius must be positive");
    auto out = GridDensity::from_function(spec, [&](const Vector& x) { return bump_shape(x, center, radius); });
    return out.normalize();
}

GridDensity coarsen(const GridDensity& density, std::size_t factor)
{
    if (factor == 0) throw InvalidArgument("coarsening factor must be positive");
    std::vector<Axis> axes;
    for (const auto& a : density.spec.axes()) {
        if (a.count % factor != 0) throw InvalidGrid("axis count is not divisible by the coarsening factor");
        const double first = 0.5 * (a.node(0) + a.node(factor - 1));
        axes.push_back({first, a.dx * static_cast<double>(factor), a.count / factor});
    }
    GridDensity out{GridSpec(axes)};
    const double ratio = density.spec.cell_volume() / out.spec.cell_volume();
    for (std::size_t j = 0; j < density.spec.size(); ++j) {
        const auto idx = density.spec.unflatten(j);
        std::size_t target = idx[0] / factor;
        if (density.spec.dims() == 2) target += out.spec.axis(0).count * (idx[1] / factor);
        out.values[target] += density.values[j] * ratio;
    }
    return out;
}

namespace {

std::vector<std::string> coordinate_names(std::size_t dims)
{
    if (dims == 1) return {"x"};
    return {"x_1", "x_2"};
}

} // namespace

void write_density_csv(std::ostream& out, const GridDensity& density)
{
    CsvWriter csv(out);
    auto header = coordinate_names(density.spec.dims());
    header.emplace_back("rho");
    csv.header(header);
    for (std::size_t j = 0; j < density.spec.size(); ++j) {
        const Vector x = density.spec.node(j);
        for (Eigen::Index d = 0; d < x.size(); ++d) csv.field(x[d]);
        csv.field(density.values[j]).end_row();
    }
}

void write_density_trajectory_csv(std::ostream& out, const std::vector<double>& times,
                                  const std::vector<GridDensity>& snapshots)
{
    if (times.size() != snapshots.size()) throw InvalidArgument("one time per snapshot expected");
    CsvWriter csv(out);
    std::vector<std::string> header{"t"};
    if (!snapshots.empty()) {
        for (auto& name : coordinate_names(snapshots.front().spec.dims())) header.push_back(name);
    }
    header.emplace_back("rho");
    csv.header(header);
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const auto& density = snapshots[s];
        for (std::size_t j = 0; j < density.spec.size(); ++j) {
            csv.field(times[s]);
            const Vector x = density.spec.node(j);
            for (Eigen::Index d = 0; d < x.size(); ++d) csv.field(x[d]);
            csv.field(density.values[j]).end_row();
        }
    }
}

CsvTable read_numeric_csv(std::istream& in)
{
    CsvTable table;
    std::string line;
    auto split = [](const std::string& text) {
        std::vector<std::string> cells;
        std::string cell;
        bool quoted = false;
        for (std::size_t i = 0; i < text.size(); ++i) {
            const char c = text[i];
            if (quoted) {
                if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cell += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                cells.push_back(cell);
                cell.clear();
            } else {
                cell += c;
            }
        }
        cells.push_back(cell);
        return cells;
    };
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw InvalidArgument("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size())
                                  + " cells, expected " + std::to_string(table.header.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& cell : cells) {
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
                throw InvalidArgument("CSV line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
            }
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

GridDensity read_density_csv(std::istream& in)
{
    const CsvTable table = read_numeric_csv(in);
    const std::size_t dims = table.header.size() == 2 ? 1 : table.header.size() == 3 ? 2 : 0;
    if (dims == 0 || table.header.back() != "rho") throw InvalidArgument("not a density CSV");
    if (table.rows.size() < 3) throw InvalidGrid("density CSV has too few rows");
    std::vector<Axis> axes;
    if (dims == 1) {
        const double lo = table.rows.front()[0];
        const double dx = table.rows[1][0] - lo;
        axes.push_back({lo, dx, table.rows.size()});
    } else {
        std::size_t n0 = 1;
        while (n0 < table.rows.size() && table.rows[n0][1] == table.rows[0][1]) ++n0;
        if (table.rows.size() % n0 != 0) throw InvalidGrid("2D density CSV is not a tensor grid");
        axes.push_back({table.rows[0][0], table.rows[1][0] - table.rows[0][0], n0});
        axes.push_back({table.rows[0][1], table.rows[n0][1] - table.rows[0][1], table.rows.size() / n0});
    }
    GridDensity out{GridSpec(axes)};
    for (std::size_t j = 0; j < table.rows.size(); ++j) {
        const Vector x = out.spec.node(j);
        for (std::size_t d = 0; d < dims; ++d) {
            const double tol = 1e-9 * std::max(1.0, std::abs(x[static_cast<Eigen::Index>(d)]));
            if (std::abs(table.rows[j][d] - x[static_cast<Eigen::Index>(d)]) > tol) {
                throw InvalidGrid("density CSV nodes are not uniformly spaced");
            }
        }
        out.values[j] = table.rows[j][dims];
    }
    return out;
}

} // namespace gsde
