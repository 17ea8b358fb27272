#pragma once

#include "hbr/grid.hpp"
#include "hbr/heat_kernel.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace hbr {

/// k = (k_1, ..., k_n) with k_j >= 0.
class MultiIndex {
public:
    explicit MultiIndex(std::vector<int> k);
    std::size_t dim() const { return k_.size(); }
    int operator[](std::size_t j) const { return k_[j]; }
    const std::vector<int>& values() const { return k_; }
    int order() const;

private:
    std::vector<int> k_;
};

enum class PlanTransform { log_uniform, double_exponential };

std::string to_string(PlanTransform t);
PlanTransform parse_plan_transform(const std::string& s);

/// Node of a quadrature for integrals of the form int g(t) dt / t.
struct TimeNode {
    double t;
    double w;
};

struct SubordinationPlan {
    double t_min = 1e-6;
    double t_max = 1e4;
    int nodes_per_decade = 24;
    PlanTransform transform = PlanTransform::log_uniform;
    /// Relative tolerance above which a tail estimate is flagged.
    double tail_tolerance = 1e-8;
    /// Gaussian envelope C t^{-n/2} exp(-d^2/(c t)) used to bound the
    /// integrand below t_min.
    double envelope_C = 4.0;
    double envelope_c = 8.0;

    void validate() const;
    /// Quadrature for int_{t_min}^{t_max} g(t) dt/t.
    std::vector<TimeNode> nodes() const;
    /// Same plan over [lo, hi] (same density and transform).
    SubordinationPlan with_range(double lo, double hi) const;
    /// Doubles the node density.
    SubordinationPlan refined() const;

    nlohmann::json to_json() const;
    static SubordinationPlan from_json(const nlohmann::json& j);
};

/// Value of a subordinated kernel integral together with its error budget.
struct KernelEstimate {
    double value = 0.0;
    /// Bound on the part below t_lo plus the quadrature error of the part
    /// above t_hi.
    double tail_error = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    bool warning = false;
};

/// int_0^inf t^{|k|/2} delta^k p_t(x, y) dt/t / Gamma(|k|/2).
KernelEstimate riesz_kernel_estimate(const NuVector& nu, const MultiIndex& k, const Point& x, const Point& y,
                                     const SubordinationPlan& plan);
double riesz_kernel(const NuVector& nu, const MultiIndex& k, const Point& x, const Point& y,
                    const SubordinationPlan& plan);

/// Kernel of delta_nu^k Delta_nu^{-|k|/2} - delta_{nu+e_j}^k Delta_{nu+e_j}^{-|k|/2}.
KernelEstimate riesz_difference_estimate(const NuVector& nu, const MultiIndex& k, std::size_t axis,
                                         const Point& x, const Point& y, const SubordinationPlan& plan);
double riesz_difference_kernel(const NuVector& nu, const MultiIndex& k, std::size_t axis, const Point& x,
                               const Point& y, const SubordinationPlan& plan);

/// int_0^inf t^{k/2} |delta_nu^k p_t^nu(x, y) - delta_{nu+1}^k p_t^{nu+1}(x, y)| dt/t
/// for n = 1, without the 1/Gamma(k/2) factor.
KernelEstimate difference_abs_integral(double nu, int k, double x, double y, const SubordinationPlan& plan);

/// Explicit half-line kernel of delta_{1/2} Delta_{1/2}^{-1/2}, n = 1.
double dirichlet_riesz_kernel(double x, double y);

/// Diagnostics of a grid-level subordination.
struct ApplyDiagnostics {
    /// Times below t_head are replaced by the short-time expansion.
    double t_head = 0.0;
    /// Largest time integrated by quadrature.
    double t_last = 0.0;
    /// Sup-norm of the contribution treated analytically beyond t_last
    /// (fractional powers) or of the last integrated decade (Riesz).
    double tail = 0.0;
};

/// (1/Gamma(s)) int u^{s-1} e^{-u Delta_nu} f du on the grid of f.
GridFunction fractional_inverse_apply(const NuVector& nu, double s, const GridFunction& f,
                                      const SubordinationPlan& plan, ApplyDiagnostics* diag = nullptr);

/// delta_nu^k Delta_nu^{-|k|/2} f on the grid of f.
GridFunction riesz_apply(const NuVector& nu, const MultiIndex& k, const GridFunction& f,
                         const SubordinationPlan& plan, ApplyDiagnostics* diag = nullptr);

/// Dense matrix of riesz_apply on a one-dimensional grid, so that
/// riesz_apply(f) = A f. With adjoint = true the matrix of the operator
/// with transposed kernel R*(x, y) = R(y, x) is built from its own
/// expansion instead.
Eigen::MatrixXd riesz_matrix(double nu, int k, const Grid& grid, const SubordinationPlan& plan,
                             bool adjoint = false);

/// Applies a dense one-dimensional operator matrix.
GridFunction apply_matrix(const Eigen::MatrixXd& a, const GridFunction& f);

} // namespace hbr
