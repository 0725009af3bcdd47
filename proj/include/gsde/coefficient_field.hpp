#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gsde/linalg.hpp"

namespace gsde {

/// Coefficients a, b, g of dx = a dt + b dw + ∫ g ν(dt, dγ).
///
/// Every callable is optional: a missing drift, diffusion or jump evaluates to
/// zero, and a missing derivative callback falls back to central finite
/// differences with step max(1e-6, 1e-6|x_j|). Instances are immutable after
/// construction and safe to share across threads as long as the stored
/// callables are.
class CoefficientField {
public:
    using VectorFn = std::function<Vector(double, const Vector&)>;
    using MatrixFn = std::function<Matrix(double, const Vector&)>;
    using JumpFn = std::function<Vector(double, const Vector&, const Vector&)>;
    using JumpJacobianFn = std::function<Matrix(double, const Vector&, const Vector&)>;
    /// result[k](i, j) = ∂b_ik/∂x_j
    using DiffusionJacobianFn = std::function<std::vector<Matrix>(double, const Vector&)>;
    /// result[k][i](j, l) = ∂²b_ik/∂x_j∂x_l
    using DiffusionHessianFn = std::function<std::vector<std::vector<Matrix>>(double, const Vector&)>;

    CoefficientField(std::size_t state_dim, std::size_t noise_dim);

    static CoefficientField zero(std::size_t state_dim, std::size_t noise_dim)
    {
        return CoefficientField(state_dim, noise_dim);
    }

    std::size_t state_dim() const noexcept { return n_; }
    std::size_t noise_dim() const noexcept { return m_; }

    // Builders. Each returns *this so fields can be set fluently.
    CoefficientField& with_drift(VectorFn fn, MatrixFn jacobian = {});
    CoefficientField& with_diffusion(MatrixFn fn, DiffusionJacobianFn jacobian = {},
                                     DiffusionHessianFn hessian = {});
    CoefficientField& with_jump(JumpFn fn, bool depends_on_state, JumpJacobianFn jacobian = {});
    CoefficientField& set_autonomous(bool autonomous);

    bool has_drift() const noexcept { return static_cast<bool>(drift_); }
    bool has_diffusion() const noexcept { return static_cast<bool>(diffusion_); }
    bool has_jump() const noexcept { return static_cast<bool>(jump_); }
    bool jump_depends_on_state() const noexcept { return jump_depends_on_state_; }
    /// True when no coefficient depends on t; grid solvers then cache them.
    bool autonomous() const noexcept { return autonomous_; }

    bool has_drift_jacobian() const noexcept { return static_cast<bool>(drift_jacobian_); }
    bool has_diffusion_jacobian() const noexcept { return static_cast<bool>(diffusion_jacobian_); }
    bool has_diffusion_hessian() const noexcept { return static_cast<bool>(diffusion_hessian_); }
    bool has_jump_jacobian() const noexcept { return static_cast<bool>(jump_jacobian_); }

    Vector drift(double t, const Vector& x) const;
    Matrix diffusion(double t, const Vector& x) const;
    Vector jump(double t, const Vector& x, const Vector& mark) const;

    Matrix drift_jacobian(double t, const Vector& x) const;
    std::vector<Matrix> diffusion_jacobian(double t, const Vector& x) const;
    std::vector<std::vector<Matrix>> diffusion_hessian(double t, const Vector& x) const;
    Matrix jump_jacobian(double t, const Vector& x, const Vector& mark) const;

    /// Finite-difference versions, bypassing analytic callbacks.
    Matrix drift_jacobian_fd(double t, const Vector& x) const;
    std::vector<Matrix> diffusion_jacobian_fd(double t, const Vector& x) const;
    std::vector<std::vector<Matrix>> diffusion_hessian_fd(double t, const Vector& x) const;
    Matrix jump_jacobian_fd(double t, const Vector& x, const Vector& mark) const;

private:
    std::size_t n_;
    std::size_t m_;
    VectorFn drift_;
    MatrixFn diffusion_;
    JumpFn jump_;
    bool jump_depends_on_state_ = false;
    bool autonomous_ = true;
    MatrixFn drift_jacobian_;
    DiffusionJacobianFn diffusion_jacobian_;
    DiffusionHessianFn diffusion_hessian_;
    JumpJacobianFn jump_jacobian_;
};

/// One atom of the mark measure: mark γ_j carried with rate λ_j.
struct MarkAtom {
    Vector mark;
    double rate = 0.0;
};

/// Finite atomic Poisson intensity Π = Σ_j λ_j δ_{γ_j}.
class MarkMeasure {
public:
    MarkMeasure() = default;
    explicit MarkMeasure(std::vector<MarkAtom> atoms);

    static MarkMeasure none() { return MarkMeasure{}; }
    static MarkMeasure single(Vector mark, double rate) { return MarkMeasure({{std::move(mark), rate}}); }

    const std::vector<MarkAtom>& atoms() const noexcept { return atoms_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    bool empty() const noexcept { return atoms_.empty(); }
    double total_rate() const noexcept { return total_rate_; }

    /// Index j with probability λ_j/Λ for u uniform on (0, 1).
    std::size_t select(double u) const;

private:
    std::vector<MarkAtom> atoms_;
    std::vector<double> cumulative_;
    double total_rate_ = 0.0;
};

/// Outcome of probing a CoefficientField for its declared invariants.
struct FieldCheckReport {
    bool pure = true;
    bool jump_state_independence_ok = true;
    bool derivatives_ok = true;
    double max_derivative_rel_error = 0.0;
    std::vector<std::string> failures;

    bool ok() const noexcept { return pure && jump_state_independence_ok && derivatives_ok; }
};

/// Probes purity, declared jump state-independence and agreement of analytic
/// derivative callbacks with central differences (relative `rel_tol`).
FieldCheckReport check_field(const CoefficientField& field, const MarkMeasure& measure,
                             std::span<const Vector> probes, double t = 0.0, double rel_tol = 1e-5);

/// Drift compensated for the jump mean: ā = a − Σ_j λ_j g(t, x, γ_j).
CoefficientField centered_drift(const CoefficientField& field, const MarkMeasure& measure);

} // namespace gsde
