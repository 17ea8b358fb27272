#include "hbr/heat_kernel.hpp"

#include "hbr/errors.hpp"
#include "hbr/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <tuple>

namespace hbr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_positive(double v, const char* what) {
    if (!(v > 0.0) || std::isinf(v))
        throw DomainError(std::string(what) + " must be positive and finite");
}

// log(exp(a) + exp(b))
double log_add(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == kNegInf) return a;
    return a + std::log1p(std::exp(b - a));
}

} // namespace

NuVector::NuVector(std::vector<double> nu) : nu_(std::move(nu)) {
    if (nu_.empty()) throw DomainError("NuVector must have at least one component");
    for (double v : nu_)
        if (!(v > -0.5) || std::isinf(v))
            throw DomainError("every order must satisfy nu_j > -1/2, got " + std::to_string(v));
}

double NuVector::nu_min() const { return *std::min_element(nu_.begin(), nu_.end()); }

KernelPoint::KernelPoint(double t_, Point x_, Point y_) : t(t_), x(std::move(x_)), y(std::move(y_)) {
    check_positive(t, "t");
    if (x.empty() || x.size() != y.size()) throw DomainError("x and y must have equal, nonzero dimension");
    for (double v : x) check_positive(v, "x coordinate");
    for (double v : y) check_positive(v, "y coordinate");
}

double SignedLog::value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }

double critical_function(const Point& x) {
    if (x.empty()) throw DomainError("critical_function: empty point");
    for (double v : x) check_positive(v, "coordinate");
    return *std::min_element(x.begin(), x.end()) / 16.0;
}

double log_heat_kernel_1d(double nu, double t, double x, double y) {
    check_positive(t, "t");
    check_positive(x, "x");
    check_positive(y, "y");
    const double d = x - y;
    const double z = x * y / (2.0 * t);
    return 0.5 * std::log(x * y) - std::log(2.0 * t) - d * d / (4.0 * t) +
           log_besseli_scaled(BesselOrder(nu), z);
}

double heat_kernel_1d(double nu, double t, double x, double y) {
    check_positive(t, "t");
    check_positive(x, "x");
    check_positive(y, "y");
    const double d = x - y;
    const double z = x * y / (2.0 * t);
    const double gauss = std::exp(-d * d / (4.0 * t));
    const double scaled = besseli_scaled(BesselOrder(nu), z);
    if (scaled > 0.0 && std::isnormal(scaled)) return std::sqrt(x * y) / (2.0 * t) * gauss * scaled;
    return std::exp(log_heat_kernel_1d(nu, t, x, y));
}

double heat_kernel_nd(const NuVector& nu, const KernelPoint& q) {
    if (nu.dim() != q.dim()) throw DomainError("order and point dimensions differ");
    double out = 1.0;
    for (std::size_t j = 0; j < nu.dim(); ++j) out *= heat_kernel_1d(nu[j], q.t, q.x[j], q.y[j]);
    return out;
}

// ---------------------------------------------------------------------------
// HeatKernelExpansion

HeatKernelExpansion::HeatKernelExpansion(double base_nu, std::vector<ExpansionTerm> terms)
    : base_nu_(base_nu), terms_(std::move(terms)) {
    if (!(base_nu > -1.0)) throw DomainError("expansion base order must exceed -1");
    log_coef_.reserve(terms_.size());
    for (const auto& tm : terms_) {
        if (tm.shift < 0) throw DomainError("expansion shifts must be nonnegative");
        log_coef_.push_back(std::log(std::fabs(tm.coef)));
    }
}

HeatKernelExpansion HeatKernelExpansion::kernel(double base_nu, int shift, double coef) {
    return HeatKernelExpansion(base_nu, {{coef, 0, 0, 0, shift}});
}

int HeatKernelExpansion::max_shift() const {
    int m = 0;
    for (const auto& tm : terms_) m = std::max(m, tm.shift);
    return m;
}

HeatKernelExpansion HeatKernelExpansion::d_dx() const {
    std::vector<ExpansionTerm> out;
    out.reserve(3 * terms_.size());
    for (const auto& tm : terms_) {
        const double mu = base_nu_ + tm.shift;
        out.push_back({tm.coef * (tm.x_pow + mu + 0.5), tm.x_pow - 1, tm.y_pow, tm.tinv_pow, tm.shift});
        out.push_back({-0.5 * tm.coef, tm.x_pow + 1, tm.y_pow, tm.tinv_pow + 1, tm.shift});
        out.push_back({0.5 * tm.coef, tm.x_pow, tm.y_pow + 1, tm.tinv_pow + 1, tm.shift + 1});
    }
    return HeatKernelExpansion(base_nu_, std::move(out)).simplified();
}

HeatKernelExpansion HeatKernelExpansion::d_dy() const {
    std::vector<ExpansionTerm> out;
    out.reserve(3 * terms_.size());
    for (const auto& tm : terms_) {
        const double mu = base_nu_ + tm.shift;
        out.push_back({tm.coef * (tm.y_pow + mu + 0.5), tm.x_pow, tm.y_pow - 1, tm.tinv_pow, tm.shift});
        out.push_back({-0.5 * tm.coef, tm.x_pow, tm.y_pow + 1, tm.tinv_pow + 1, tm.shift});
        out.push_back({0.5 * tm.coef, tm.x_pow + 1, tm.y_pow, tm.tinv_pow + 1, tm.shift + 1});
    }
    return HeatKernelExpansion(base_nu_, std::move(out)).simplified();
}

HeatKernelExpansion HeatKernelExpansion::times_monomial(double coef, int x_pow, int y_pow,
                                                        int tinv_pow) const {
    std::vector<ExpansionTerm> out = terms_;
    for (auto& tm : out) {
        tm.coef *= coef;
        tm.x_pow += x_pow;
        tm.y_pow += y_pow;
        tm.tinv_pow += tinv_pow;
    }
    return HeatKernelExpansion(base_nu_, std::move(out));
}

HeatKernelExpansion HeatKernelExpansion::operator+(const HeatKernelExpansion& other) const {
    if (other.base_nu_ != base_nu_) throw DomainError("cannot add expansions with different base orders");
    std::vector<ExpansionTerm> out = terms_;
    out.insert(out.end(), other.terms_.begin(), other.terms_.end());
    return HeatKernelExpansion(base_nu_, std::move(out)).simplified();
}

HeatKernelExpansion HeatKernelExpansion::operator-(const HeatKernelExpansion& other) const {
    return *this + other.scaled(-1.0);
}

HeatKernelExpansion HeatKernelExpansion::scaled(double c) const { return times_monomial(c, 0, 0, 0); }

HeatKernelExpansion HeatKernelExpansion::rebased(double new_base) const {
    const double diff = base_nu_ - new_base;
    const double k = std::round(diff);
    if (std::fabs(diff - k) > 1e-12 || k < 0)
        throw DomainError("rebase requires a nonnegative integer order difference");
    std::vector<ExpansionTerm> out = terms_;
    for (auto& tm : out) tm.shift += static_cast<int>(k);
    return HeatKernelExpansion(new_base, std::move(out));
}

HeatKernelExpansion HeatKernelExpansion::delta(double order) const {
    return d_dx() - times_monomial(order + 0.5, -1);
}

HeatKernelExpansion HeatKernelExpansion::delta_adjoint(double order) const {
    return d_dx().scaled(-1.0) - times_monomial(order + 0.5, -1);
}

HeatKernelExpansion HeatKernelExpansion::bessel_operator(double order) const {
    return delta(order).delta_adjoint(order);
}

HeatKernelExpansion HeatKernelExpansion::simplified() const {
    std::map<std::tuple<int, int, int, int>, std::pair<double, double>> acc;
    for (const auto& tm : terms_) {
        auto& slot = acc[{tm.shift, tm.x_pow, tm.y_pow, tm.tinv_pow}];
        slot.first += tm.coef;
        slot.second = std::max(slot.second, std::fabs(tm.coef));
    }
    std::vector<ExpansionTerm> out;
    out.reserve(acc.size());
    for (const auto& [key, val] : acc) {
        // Cancellation down to rounding level means the exact coefficient is zero.
        if (val.first == 0.0 || std::fabs(val.first) <= 1e-13 * val.second) continue;
        const auto [shift, xp, yp, tp] = key;
        out.push_back({val.first, xp, yp, tp, shift});
    }
    return HeatKernelExpansion(base_nu_, std::move(out));
}

namespace {

// Scratch space reused across calls; expansions are evaluated in hot loops.
thread_local std::vector<double> tl_bessel;
thread_local std::vector<double> tl_logs;

} // namespace

void HeatKernelExpansion::fill_log_bessel(double z) const {
    const int top = max_shift();
    tl_bessel.assign(static_cast<std::size_t>(top) + 1, std::nan(""));
    for (const auto& tm : terms_) {
        double& slot = tl_bessel[static_cast<std::size_t>(tm.shift)];
        if (std::isnan(slot)) slot = log_besseli_scaled(BesselOrder(base_nu_ + tm.shift), z);
    }
    double& base = tl_bessel[0];
    if (std::isnan(base)) base = log_besseli_scaled(BesselOrder(base_nu_), z);
}

SignedLog HeatKernelExpansion::combine_log(double t, double x, double y, double lt, double lx, double ly) const {
    const double log_base = tl_bessel[0];
    tl_logs.resize(terms_.size());
    double peak = kNegInf;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        const auto& tm = terms_[i];
        tl_logs[i] = log_coef_[i] + tm.x_pow * lx + tm.y_pow * ly - tm.tinv_pow * lt +
                     (tl_bessel[static_cast<std::size_t>(tm.shift)] - log_base);
        peak = std::max(peak, tl_logs[i]);
    }
    if (peak == kNegInf) return {};
    double sum = 0.0;
    for (std::size_t i = 0; i < terms_.size(); ++i)
        sum += (terms_[i].coef > 0 ? 1.0 : -1.0) * std::exp(tl_logs[i] - peak);
    if (sum == 0.0) return {};
    const double d = x - y;
    const double log_p = 0.5 * (lx + ly) - std::numbers::ln2 - lt - d * d / (4.0 * t) + log_base;
    return {peak + std::log(std::fabs(sum)) + log_p, sum > 0 ? 1 : -1};
}

SignedLog HeatKernelExpansion::evaluate_log(double t, double x, double y) const {
    check_positive(t, "t");
    check_positive(x, "x");
    check_positive(y, "y");
    if (terms_.empty()) return {};
    fill_log_bessel(x * y / (2.0 * t));
    return combine_log(t, x, y, std::log(t), std::log(x), std::log(y));
}

std::pair<SignedLog, SignedLog> HeatKernelExpansion::evaluate_log_pair(double t, double x, double y) const {
    check_positive(t, "t");
    check_positive(x, "x");
    check_positive(y, "y");
    if (terms_.empty()) return {};
    // The Bessel factors depend on x and y only through xy.
    fill_log_bessel(x * y / (2.0 * t));
    const double lt = std::log(t), lx = std::log(x), ly = std::log(y);
    return {combine_log(t, x, y, lt, lx, ly), combine_log(t, y, x, lt, ly, lx)};
}

double HeatKernelExpansion::evaluate(double t, double x, double y) const {
    return evaluate_log(t, x, y).value();
}

// ---------------------------------------------------------------------------
// Named expansions

HeatKernelExpansion delta_expansion(double nu, int ell) {
    if (ell < 0) throw DomainError("delta order must be nonnegative");
    auto e = HeatKernelExpansion::kernel(nu);
    for (int i = 0; i < ell; ++i) e = e.delta(nu);
    return e;
}

HeatKernelExpansion delta_laplacian_expansion(double nu, int k, int M) {
    if (k < 0 || M < 0) throw DomainError("orders must be nonnegative");
    auto e = HeatKernelExpansion::kernel(nu);
    for (int i = 0; i < M; ++i) e = e.bessel_operator(nu);
    for (int i = 0; i < k; ++i) e = e.delta(nu);
    return e;
}

HeatKernelExpansion adjoint_laplacian_expansion(double nu, int k, int M) {
    if (k < 0 || M < 0) throw DomainError("orders must be nonnegative");
    auto e = HeatKernelExpansion::kernel(nu + k + 2 * M);
    for (int i = 0; i < k; ++i) e = e.delta_adjoint(nu);
    for (int i = 0; i < M; ++i) e = e.bessel_operator(nu);
    return e;
}

HeatKernelExpansion delta_difference_expansion(double nu, int ell) {
    return delta_expansion(nu, ell) - delta_expansion(nu + 1.0, ell).rebased(nu);
}

std::vector<double> partial_to_delta_coefficients(double nu, int k) {
    if (k < 0) throw DomainError("derivative order must be nonnegative");
    std::vector<double> c{1.0};
    for (int step = 0; step < k; ++step) {
        std::vector<double> next(c.size() + 1, 0.0);
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (j < c.size()) next[j] += c[j];
            if (j >= 1) next[j] += (nu + 0.5 - static_cast<double>(j - 1)) * c[j - 1];
        }
        c = std::move(next);
    }
    return c;
}

HeatKernelExpansion mixed_partial_expansion(double nu, int k, int ell) {
    const auto c = partial_to_delta_coefficients(nu, k);
    HeatKernelExpansion out(nu);
    for (int j = 0; j <= k; ++j) {
        if (c[j] == 0.0) continue;
        out = out + delta_expansion(nu, k + ell - j).times_monomial(c[j], -j);
    }
    return out;
}

double mixed_partial_delta(double nu, int k, int ell, double t, double x, double y) {
    return mixed_partial_expansion(nu, k, ell).evaluate(t, x, y);
}

SignedLog log_delta_heat_kernel_nd(const NuVector& nu, const std::vector<int>& k, const KernelPoint& q) {
    if (nu.dim() != q.dim() || k.size() != q.dim()) throw DomainError("dimension mismatch");
    SignedLog out{0.0, 1};
    for (std::size_t j = 0; j < nu.dim(); ++j) {
        const auto f = delta_expansion(nu[j], k[j]).evaluate_log(q.t, q.x[j], q.y[j]);
        if (f.sign == 0) return {};
        out.log_abs += f.log_abs;
        out.sign *= f.sign;
    }
    return out;
}

double delta_heat_kernel_nd(const NuVector& nu, const std::vector<int>& k, const KernelPoint& q) {
    return log_delta_heat_kernel_nd(nu, k, q).value();
}

// ---------------------------------------------------------------------------
// Bound right-hand sides

BoundKind parse_bound_kind(const std::string& name) {
    static const std::map<std::string, BoundKind> table{
        {"thm21", BoundKind::thm21},   {"thm24", BoundKind::thm24},   {"thm25", BoundKind::thm25},
        {"prop29", BoundKind::prop29}, {"prop210", BoundKind::prop210}, {"cor26", BoundKind::cor26},
        {"cor211", BoundKind::cor211}, {"prop27", BoundKind::prop27}};
    auto it = table.find(name);
    if (it == table.end()) throw DomainError("unknown bound kind: " + name);
    return it->second;
}

std::string to_string(BoundKind kind) {
    switch (kind) {
    case BoundKind::thm21: return "thm21";
    case BoundKind::thm24: return "thm24";
    case BoundKind::thm25: return "thm25";
    case BoundKind::prop29: return "prop29";
    case BoundKind::prop210: return "prop210";
    case BoundKind::cor26: return "cor26";
    case BoundKind::cor211: return "cor211";
    case BoundKind::prop27: return "prop27";
    }
    return "unknown";
}

namespace {

int order_at(const std::vector<int>& v, std::size_t j) { return j < v.size() ? v[j] : 0; }

int total(const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0); }

void require_1d(const KernelPoint& q, BoundKind kind) {
    if (q.dim() != 1) throw DomainError(to_string(kind) + " is a one-dimensional bound");
}

} // namespace

double log_bound_rhs(BoundKind kind, const NuVector& nu, const BoundOrders& o, const KernelPoint& q,
                     double c) {
    check_positive(c, "rate constant c");
    if (nu.dim() != q.dim()) throw DomainError("order and point dimensions differ");
    const double t = q.t;
    const double lt = std::log(t);
    const double st = std::sqrt(t);
    double d2 = 0.0;
    for (std::size_t j = 0; j < q.dim(); ++j) d2 += (q.x[j] - q.y[j]) * (q.x[j] - q.y[j]);
    const double gauss = -d2 / (c * t);
    auto weight_1d = [&] {
        const double a = nu[0] + 0.5;
        return -a * (std::log1p(st / q.x[0]) + std::log1p(st / q.y[0]));
    };
    auto weight_rho = [&] {
        const double rx = critical_function(q.x), ry = critical_function(q.y);
        return -nu.gamma_nu() * std::log1p(st / rx + st / ry);
    };
    const double n = static_cast<double>(q.dim());

    switch (kind) {
    case BoundKind::thm21:
        require_1d(q, kind);
        return -0.5 * lt + gauss + weight_1d();
    case BoundKind::thm24: {
        require_1d(q, kind);
        const int ell = order_at(o.ell, 0);
        return -0.5 * (ell + 1) * lt + gauss + weight_1d();
    }
    case BoundKind::thm25: {
        require_1d(q, kind);
        const int k = order_at(o.k, 0), ell = order_at(o.ell, 0);
        const double side = o.y_variant ? q.y[0] : q.x[0];
        const double front = log_add(-0.5 * k * lt, -k * std::log(side));
        return front - 0.5 * (ell + 1) * lt + gauss + weight_1d();
    }
    case BoundKind::cor26: {
        require_1d(q, kind);
        const int k = order_at(o.k, 0);
        return -0.5 * (k + 2 * o.M + 1) * lt + gauss;
    }
    case BoundKind::prop27: {
        require_1d(q, kind);
        const int ell = order_at(o.ell, 0);
        return -std::log(q.x[0]) - 0.5 * ell * lt + gauss;
    }
    case BoundKind::prop29:
        return -0.5 * (n + total(o.ell)) * lt + gauss + weight_rho();
    case BoundKind::prop210: {
        const int k = total(o.k);
        const double r = critical_function(o.y_variant ? q.y : q.x);
        const double front = log_add(-0.5 * k * lt, -k * std::log(r));
        return front - 0.5 * (n + total(o.ell)) * lt + gauss + weight_rho();
    }
    case BoundKind::cor211:
        return -0.5 * (total(o.k) + 2 * o.M + n) * lt + gauss;
    }
    throw DomainError("unknown bound kind");
}

double bound_rhs(BoundKind kind, const NuVector& nu, const BoundOrders& orders, const KernelPoint& q,
                 double c) {
    return std::exp(log_bound_rhs(kind, nu, orders, q, c));
}

} // namespace hbr
