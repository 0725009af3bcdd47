#include "gsde/coefficient_field.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gsde/error.hpp"

namespace gsde {

std::string format_vector(const Vector& v)
{
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i > 0) os << ", ";
        os << v[i];
    }
    os << ')';
    return os.str();
}

namespace {

// Second derivatives use a wider step than first derivatives: with h = 1e-6
// the roundoff term ε/h² would dominate.
double second_fd_step(double x) { return std::max(1e-4, 1e-4 * std::abs(x)); }

double max_rel_error(const Matrix& analytic, const Matrix& fd)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            const double scale = std::max(1.0, std::abs(fd(i, j)));
            worst = std::max(worst, std::abs(analytic(i, j) - fd(i, j)) / scale);
        }
    }
    return worst;
}

} // namespace

CoefficientField::CoefficientField(std::size_t state_dim, std::size_t noise_dim)
    : n_(state_dim), m_(noise_dim)
{
    if (state_dim == 0) throw InvalidArgument("state dimension must be positive");
}

CoefficientField& CoefficientField::with_drift(VectorFn fn, MatrixFn jacobian)
{
    drift_ = std::move(fn);
    drift_jacobian_ = std::move(jacobian);
    return *this;
}

CoefficientField& CoefficientField::with_diffusion(MatrixFn fn, DiffusionJacobianFn jacobian,
                                                   DiffusionHessianFn hessian)
{
    diffusion_ = std::move(fn);
    diffusion_jacobian_ = std::move(jacobian);
    diffusion_hessian_ = std::move(hessian);
    return *this;
}

CoefficientField& CoefficientField::with_jump(JumpFn fn, bool depends_on_state, JumpJacobianFn jacobian)
{
    jump_ = std::move(fn);
    jump_depends_on_state_ = depends_on_state;
    jump_jacobian_ = std::move(jacobian);
    return *this;
}

CoefficientField& CoefficientField::set_autonomous(bool autonomous)
{
    autonomous_ = autonomous;
    return *this;
}

Vector CoefficientField::drift(double t, const Vector& x) const
{
    if (!drift_) return Vector::Zero(static_cast<Eigen::Index>(n_));
    return drift_(t, x);
}

Matrix CoefficientField::diffusion(double t, const Vector& x) const
{
    if (!diffusion_) return Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(m_));
    return diffusion_(t, x);
}

Vector CoefficientField::jump(double t, const Vector& x, const Vector& mark) const
{
    if (!jump_) return Vector::Zero(static_cast<Eigen::Index>(n_));
    return jump_(t, x, mark);
}

Matrix CoefficientField::drift_jacobian(double t, const Vector& x) const
{
    if (drift_jacobian_) return drift_jacobian_(t, x);
    return drift_jacobian_fd(t, x);
}

std::vector<Matrix> CoefficientField::diffusion_jacobian(double t, const Vector& x) const
{
    if (diffusion_jacobian_) return diffusion_jacobian_(t, x);
    return diffusion_jacobian_fd(t, x);
}

std::vector<std::vector<Matrix>> CoefficientField::diffusion_hessian(double t, const Vector& x) const
{
    if (diffusion_hessian_) return diffusion_hessian_(t, x);
    return diffusion_hessian_fd(t, x);
}

Matrix CoefficientField::jump_jacobian(double t, const Vector& x, const Vector& mark) const
{
    if (jump_jacobian_) return jump_jacobian_(t, x, mark);
    return jump_jacobian_fd(t, x, mark);
}

Matrix CoefficientField::drift_jacobian_fd(double t, const Vector& x) const
{
    const auto n = static_cast<Eigen::Index>(n_);
    Matrix jac = Matrix::Zero(n, n);
    if (!drift_) return jac;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = fd_step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        jac.col(j) = (drift_(t, xp) - drift_(t, xm)) / (xp[j] - xm[j]);
    }
    return jac;
}

std::vector<Matrix> CoefficientField::diffusion_jacobian_fd(double t, const Vector& x) const
{
    const auto n = static_cast<Eigen::Index>(n_);
    std::vector<Matrix> out(m_, Matrix::Zero(n, n));
    if (!diffusion_) return out;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = fd_step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const Matrix diff = (diffusion_(t, xp) - diffusion_(t, xm)) / (xp[j] - xm[j]);
        for (std::size_t k = 0; k < m_; ++k) out[k].col(j) = diff.col(static_cast<Eigen::Index>(k));
    }
    return out;
}

std::vector<std::vector<Matrix>> CoefficientField::diffusion_hessian_fd(double t, const Vector& x) const
{
    const auto n = static_cast<Eigen::Index>(n_);
    std::vector<std::vector<Matrix>> out(m_, std::vector<Matrix>(n_, Matrix::Zero(n, n)));
    if (!diffusion_) return out;
    const Matrix b0 = diffusion_(t, x);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index l = j; l < n; ++l) {
            const double hj = second_fd_step(x[j]);
            const double hl = second_fd_step(x[l]);
            Matrix d2;
            if (j == l) {
                Vector xp = x, xm = x;
                xp[j] += hj;
                xm[j] -= hj;
                d2 = (diffusion_(t, xp) - 2.0 * b0 + diffusion_(t, xm)) / (hj * hj);
            } else {
                Vector pp = x, pm = x, mp = x, mm = x;
                pp[j] += hj; pp[l] += hl;
                pm[j] += hj; pm[l] -= hl;
                mp[j] -= hj; mp[l] += hl;
                mm[j] -= hj; mm[l] -= hl;
                d2 = (diffusion_(t, pp) - diffusion_(t, pm) - diffusion_(t, mp) + diffusion_(t, mm))
                     / (4.0 * hj * hl);
            }
            for (std::size_t k = 0; k < m_; ++k) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    out[k][static_cast<std::size_t>(i)](j, l) = d2(i, static_cast<Eigen::Index>(k));
                    out[k][static_cast<std::size_t>(i)](l, j) = d2(i, static_cast<Eigen::Index>(k));
                }
            }
        }
    }
    return out;
}

Matrix CoefficientField::jump_jacobian_fd(double t, const Vector& x, const Vector& mark) const
{
    const auto n = static_cast<Eigen::Index>(n_);
    Matrix jac = Matrix::Zero(n, n);
    if (!jump_) return jac;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = fd_step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        jac.col(j) = (jump_(t, xp, mark) - jump_(t, xm, mark)) / (xp[j] - xm[j]);
    }
    return jac;
}

MarkMeasure::MarkMeasure(std::vector<MarkAtom> atoms) : atoms_(std::move(atoms))
{
    cumulative_.reserve(atoms_.size());
    for (const auto& atom : atoms_) {
        if (!(atom.rate > 0.0) || !std::isfinite(atom.rate)) {
            throw InvalidArgument("mark atom rates must be positive and finite");
        }
        total_rate_ += atom.rate;
        cumulative_.push_back(total_rate_);
    }
}

std::size_t MarkMeasure::select(double u) const
{
    if (atoms_.empty()) throw InvalidArgument("cannot sample a mark from an empty measure");
    const double target = u * total_rate_;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), atoms_.size() - 1);
}

FieldCheckReport check_field(const CoefficientField& field, const MarkMeasure& measure,
                             std::span<const Vector> probes, double t, double rel_tol)
{
    FieldCheckReport report;
    auto fail = [&report](std::string what) { report.failures.push_back(std::move(what)); };

    for (const auto& x : probes) {
        const bool same_a = (field.drift(t, x).array() == field.drift(t, x).array()).all();
        const bool same_b = (field.diffusion(t, x).array() == field.diffusion(t, x).array()).all();
        bool same_g = true;
        for (const auto& atom : measure.atoms()) {
            same_g = same_g
                     && (field.jump(t, x, atom.mark).array() == field.jump(t, x, atom.mark).array()).all();
        }
        if (!(same_a && same_b && same_g)) {
            report.pure = false;
            fail("coefficient evaluation is not repeatable at x = " + format_vector(x));
        }
    }

    if (!field.jump_depends_on_state() && field.has_jump() && probes.size() >= 2) {
        for (const auto& atom : measure.atoms()) {
            const Vector g0 = field.jump(t, probes[0], atom.mark);
            for (std::size_t p = 1; p < probes.size(); ++p) {
                if (!(field.jump(t, probes[p], atom.mark).array() == g0.array()).all()) {
                    report.jump_state_independence_ok = false;
                    fail("jump declared state-independent but varies with x");
                }
            }
        }
    }

    auto record = [&](double err, const char* name) {
        report.max_derivative_rel_error = std::max(report.max_derivative_rel_error, err);
        if (err > rel_tol) {
            report.derivatives_ok = false;
            fail(std::string(name) + " disagrees with central differences (rel " + std::to_string(err) + ")");
        }
    };
    for (const auto& x : probes) {
        if (field.has_drift_jacobian()) {
            record(max_rel_error(field.drift_jacobian(t, x), field.drift_jacobian_fd(t, x)), "drift jacobian");
        }
        if (field.has_diffusion_jacobian()) {
            const auto an = field.diffusion_jacobian(t, x);
            const auto fd = field.diffusion_jacobian_fd(t, x);
            for (std::size_t k = 0; k < an.size(); ++k) record(max_rel_error(an[k], fd[k]), "diffusion jacobian");
        }
        if (field.has_diffusion_hessian()) {
            const auto an = field.diffusion_hessian(t, x);
            const auto fd = field.diffusion_hessian_fd(t, x);
            for (std::size_t k = 0; k < an.size(); ++k) {
                for (std::size_t i = 0; i < an[k].size(); ++i) {
                    record(max_rel_error(an[k][i], fd[k][i]), "diffusion hessian");
                }
            }
        }
        if (field.has_jump_jacobian()) {
            for (const auto& atom : measure.atoms()) {
                record(max_rel_error(field.jump_jacobian(t, x, atom.mark), field.jump_jacobian_fd(t, x, atom.mark)),
                       "jump jacobian");
            }
        }
    }
    return report;
}

CoefficientField centered_drift(const CoefficientField& field, const MarkMeasure& measure)
{
    CoefficientField out = field;
    if (measure.empty() || !field.has_jump()) return out;

    auto drift = [field, measure](double t, const Vector& x) {
        Vector a = field.drift(t, x);
        for (const auto& atom : measure.atoms()) a -= atom.rate * field.jump(t, x, atom.mark);
        return a;
    };
    CoefficientField::MatrixFn jacobian;
    if (field.has_drift_jacobian() && (field.has_jump_jacobian() || !field.jump_depends_on_state())) {
        jacobian = [field, measure](double t, const Vector& x) {
            Matrix jac = field.drift_jacobian(t, x);
            if (field.jump_depends_on_state()) {
                for (const auto& atom : measure.atoms()) jac -= atom.rate * field.jump_jacobian(t, x, atom.mark);
            }
            return jac;
        };
    }
    out.with_drift(std::move(drift), std::move(jacobian));
    return out;
}

} // namespace gsde
