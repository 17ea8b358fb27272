#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace hbr {

using Point = std::vector<double>;

/// Orders nu = (nu_1, ..., nu_n) with every nu_j > -1/2.
class NuVector {
public:
    explicit NuVector(std::vector<double> nu);
    static NuVector uniform(std::size_t n, double nu) { return NuVector(std::vector<double>(n, nu)); }

    std::size_t dim() const { return nu_.size(); }
    double operator[](std::size_t j) const { return nu_[j]; }
    const std::vector<double>& values() const { return nu_; }
    double nu_min() const;
    /// nu_min + 1/2.
    double gamma_nu() const { return nu_min() + 0.5; }

private:
    std::vector<double> nu_;
};

/// (t, x, y) with t > 0 and x, y in the open positive orthant.
struct KernelPoint {
    double t;
    Point x;
    Point y;
    KernelPoint(double t_, Point x_, Point y_);
    std::size_t dim() const { return x.size(); }
};

/// Signed number stored as sign * exp(log_abs), for values that would
/// underflow or overflow when formed directly.
struct SignedLog {
    double log_abs = -std::numeric_limits<double>::infinity();
    int sign = 0;
    double value() const;
};

/// Critical radius rho(x) = min_j x_j / 16.
double critical_function(const Point& x);

/// One-dimensional Bessel heat kernel. Orders down to -1 (exclusive) are
/// accepted; operator-level code enforces nu > -1/2 through NuVector.
double heat_kernel_1d(double nu, double t, double x, double y);
double log_heat_kernel_1d(double nu, double t, double x, double y);
double heat_kernel_nd(const NuVector& nu, const KernelPoint& q);

/// Term coef * x^x_pow * y^y_pow * t^-tinv_pow * p_t^{nu + shift}(x, y).
struct ExpansionTerm {
    double coef;
    int x_pow;
    int y_pow;
    int tinv_pow;
    int shift;
};

/// Finite linear combination of shifted heat kernels with monomial
/// coefficients. Closed under d/dx, d/dy, multiplication by monomials and
/// therefore under delta_nu, its adjoint and Delta_nu acting in x.
class HeatKernelExpansion {
public:
    explicit HeatKernelExpansion(double base_nu, std::vector<ExpansionTerm> terms = {});
    /// coef * p^{base_nu + shift}
    static HeatKernelExpansion kernel(double base_nu, int shift = 0, double coef = 1.0);

    double base_nu() const { return base_nu_; }
    const std::vector<ExpansionTerm>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }
    int max_shift() const;

    HeatKernelExpansion d_dx() const;
    HeatKernelExpansion d_dy() const;
    HeatKernelExpansion times_monomial(double coef, int x_pow, int y_pow = 0, int tinv_pow = 0) const;
    HeatKernelExpansion operator+(const HeatKernelExpansion& other) const;
    HeatKernelExpansion operator-(const HeatKernelExpansion& other) const;
    HeatKernelExpansion scaled(double c) const;
    /// Same function written relative to base_nu - k (shifts grow by k).
    HeatKernelExpansion rebased(double new_base) const;

    /// delta_order = d/dx - (order + 1/2)/x.
    HeatKernelExpansion delta(double order) const;
    /// delta*_order = -d/dx - (order + 1/2)/x.
    HeatKernelExpansion delta_adjoint(double order) const;
    /// Delta_order = delta*_order delta_order in the x variable.
    HeatKernelExpansion bessel_operator(double order) const;

    /// Merges terms with equal monomials and shifts; drops exact zeros.
    HeatKernelExpansion simplified() const;

    double evaluate(double t, double x, double y) const;
    SignedLog evaluate_log(double t, double x, double y) const;
    /// Values at (x, y) and at (y, x), sharing the Bessel evaluations.
    std::pair<SignedLog, SignedLog> evaluate_log_pair(double t, double x, double y) const;

private:
    void fill_log_bessel(double z) const;
    SignedLog combine_log(double t, double x, double y, double lt, double lx, double ly) const;

    double base_nu_;
    std::vector<ExpansionTerm> terms_;
    std::vector<double> log_coef_;
};

/// delta_nu^ell p_t^nu as an expansion with base order nu.
HeatKernelExpansion delta_expansion(double nu, int ell);

/// delta_nu^k Delta_nu^M p_t^nu.
HeatKernelExpansion delta_laplacian_expansion(double nu, int k, int M);

/// Delta_nu^M (delta*_nu)^k p_t^{nu + k + 2M}, base order nu + k + 2M.
HeatKernelExpansion adjoint_laplacian_expansion(double nu, int k, int M);

/// delta_nu^ell p^nu - delta_{nu+1}^ell p^{nu+1}, base order nu.
HeatKernelExpansion delta_difference_expansion(double nu, int ell);

/// Coefficients c_j with d^k/dx^k = sum_j c_j x^-j delta_nu^(k-j).
std::vector<double> partial_to_delta_coefficients(double nu, int k);

/// d^k/dx^k delta_nu^ell p_t^nu as an expansion built from the
/// coefficient table.
HeatKernelExpansion mixed_partial_expansion(double nu, int k, int ell);
double mixed_partial_delta(double nu, int k, int ell, double t, double x, double y);

/// prod_j [delta_{nu_j}^{k_j} p_t^{nu_j}](x_j, y_j)
double delta_heat_kernel_nd(const NuVector& nu, const std::vector<int>& k, const KernelPoint& q);
SignedLog log_delta_heat_kernel_nd(const NuVector& nu, const std::vector<int>& k, const KernelPoint& q);

enum class BoundKind { thm21, thm24, thm25, prop29, prop210, cor26, cor211, prop27 };

BoundKind parse_bound_kind(const std::string& name);
std::string to_string(BoundKind kind);

/// Orders entering a bound. Unused fields are ignored by a given kind.
struct BoundOrders {
    std::vector<int> k;    // derivative orders (partial or delta, per kind)
    std::vector<int> ell;  // delta orders
    int M = 0;             // power of Delta
    bool y_variant = false; // use the y-side form where one exists
};

/// Right-hand side of the selected Gaussian-type bound with constant 1.
double bound_rhs(BoundKind kind, const NuVector& nu, const BoundOrders& orders,
                 const KernelPoint& q, double c);
double log_bound_rhs(BoundKind kind, const NuVector& nu, const BoundOrders& orders,
                     const KernelPoint& q, double c);

} // namespace hbr
