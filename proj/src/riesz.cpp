#include "hbr/riesz.hpp"

#include "hbr/errors.hpp"
#include "hbr/parallel.hpp"
#include "hbr/special_functions.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace hbr {

MultiIndex::MultiIndex(std::vector<int> k) : k_(std::move(k)) {
    if (k_.empty()) throw DomainError("multi-index must be nonempty");
    for (int v : k_)
        if (v < 0) throw DomainError("multi-index entries must be nonnegative");
}

int MultiIndex::order() const { return std::accumulate(k_.begin(), k_.end(), 0); }

std::string to_string(PlanTransform t) {
    return t == PlanTransform::log_uniform ? "log-uniform" : "double-exponential";
}

PlanTransform parse_plan_transform(const std::string& s) {
    if (s == "log-uniform" || s == "log_uniform") return PlanTransform::log_uniform;
    if (s == "double-exponential" || s == "double_exponential") return PlanTransform::double_exponential;
    throw ConfigError("unknown subordination transform '" + s + "'");
}

// ---------------------------------------------------------------------------
// SubordinationPlan

void SubordinationPlan::validate() const {
    if (!(t_min > 0.0) || !(t_max > t_min) || std::isinf(t_max))
        throw ConfigError("subordination plan needs 0 < t_min < t_max < inf");
    if (nodes_per_decade < 1) throw ConfigError("subordination plan needs at least one node per decade");
    if (!(tail_tolerance > 0.0)) throw ConfigError("tail tolerance must be positive");
    if (!(envelope_C > 0.0) || !(envelope_c > 0.0)) throw ConfigError("envelope constants must be positive");
}

std::vector<TimeNode> SubordinationPlan::nodes() const {
    validate();
    const double sa = std::log(t_min), sb = std::log(t_max);
    const double decades = (sb - sa) / std::numbers::ln10;
    const auto intervals = static_cast<std::size_t>(std::max(2.0, std::ceil(decades * nodes_per_decade)));
    std::vector<TimeNode> out(intervals + 1);
    if (transform == PlanTransform::log_uniform) {
        const double h = (sb - sa) / static_cast<double>(intervals);
        for (std::size_t i = 0; i <= intervals; ++i) out[i] = {std::exp(sa + h * static_cast<double>(i)), h};
        out.front().w = out.back().w = 0.5 * h;
        out.front().t = t_min;
        out.back().t = t_max;
        return out;
    }
    // s = mid + half tanh(pi/2 sinh u), u in [-u_max, u_max]; the end nodes
    // carry zero weight to working precision. The node count is scaled so
    // that the spacing in s at the midpoint matches the log-uniform rule.
    constexpr double u_max = 3.0;
    const double mid = 0.5 * (sa + sb), half = 0.5 * (sb - sa);
    const auto de_intervals = static_cast<std::size_t>(std::ceil(intervals * u_max * 0.5 * std::numbers::pi));
    out.resize(de_intervals + 1);
    const double du = 2.0 * u_max / static_cast<double>(de_intervals);
    for (std::size_t i = 0; i <= de_intervals; ++i) {
        const double u = -u_max + du * static_cast<double>(i);
        const double q = 0.5 * std::numbers::pi * std::sinh(u);
        const double ch = std::cosh(q);
        out[i] = {std::exp(mid + half * std::tanh(q)), du * half * 0.5 * std::numbers::pi * std::cosh(u) / (ch * ch)};
    }
    return out;
}

SubordinationPlan SubordinationPlan::with_range(double lo, double hi) const {
    auto p = *this;
    p.t_min = lo;
    p.t_max = hi;
    p.validate();
    return p;
}

SubordinationPlan SubordinationPlan::refined() const {
    auto p = *this;
    p.nodes_per_decade *= 2;
    return p;
}

nlohmann::json SubordinationPlan::to_json() const {
    return {{"t_min", t_min},
            {"t_max", t_max},
            {"nodes_per_decade", nodes_per_decade},
            {"transform", to_string(transform)},
            {"tail_tolerance", tail_tolerance},
            {"envelope_C", envelope_C},
            {"envelope_c", envelope_c}};
}

SubordinationPlan SubordinationPlan::from_json(const nlohmann::json& j) {
    SubordinationPlan p;
    p.t_min = j.value("t_min", p.t_min);
    p.t_max = j.value("t_max", p.t_max);
    p.nodes_per_decade = j.value("nodes_per_decade", p.nodes_per_decade);
    p.transform = parse_plan_transform(j.value("transform", to_string(p.transform)));
    p.tail_tolerance = j.value("tail_tolerance", p.tail_tolerance);
    p.envelope_C = j.value("envelope_C", p.envelope_C);
    p.envelope_c = j.value("envelope_c", p.envelope_c);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Point kernels

namespace {

void check_points(const NuVector& nu, const MultiIndex& k, const Point& x, const Point& y) {
    if (nu.dim() != k.dim() || x.size() != nu.dim() || y.size() != nu.dim())
        throw DomainError("riesz kernel: dimension mismatch");
    if (k.order() < 1) throw DomainError("riesz kernel needs |k| >= 1");
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!(x[j] > 0.0) || !(y[j] > 0.0)) throw DomainError("riesz kernel: points must be positive");
    if (x == y) throw DomainError("riesz kernel is singular on the diagonal");
}

double outer_scale(const Point& x, const Point& y) {
    double m = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) m = std::max({m, x[j] * x[j], y[j] * y[j]});
    return m;
}

double squared_distance(const Point& x, const Point& y) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d2 += (x[j] - y[j]) * (x[j] - y[j]);
    return d2;
}

/// int_0^inf g(t) dt/t / Gamma(order/2), with g(t) = t^{|k|/2} times a product
/// of per-axis kernels whose Gaussian factor is exp(-d2/4t).
KernelEstimate subordinate_point(const std::function<double(double)>& g, double d2, double scale2, std::size_t n,
                                 int order, const SubordinationPlan& plan) {
    plan.validate();
    KernelEstimate out;
    out.t_lo = std::min(plan.t_min, d2 / 200.0);
    // The trapezoid's end correction is only negligible once the integrand
    // has entered its power-law decay, well past t ~ |x|^2 + |y|^2.
    out.t_hi = std::max(plan.t_max, 1e4 * scale2);
    double sum = 0.0;
    for (const auto& node : plan.with_range(out.t_lo, out.t_hi).nodes()) sum += node.w * g(node.t);

    // Upper tail in s = log t: the integrand decays exponentially in s.
    boost::math::quadrature::exp_sinh<double> tail_rule;
    double tail_err = 0.0;
    const double tail = tail_rule.integrate([&](double s) {
        const double t = std::exp(s);
        return std::isfinite(t) ? g(t) : 0.0;
    }, std::log(out.t_hi),
                                            std::numeric_limits<double>::infinity(), 1e-12, &tail_err);
    sum += tail;

    // Envelope C t^{-(n+|k|)/2} exp(-d2/(c t)) times t^{|k|/2}, integrated
    // over (0, t_lo) against dt/t.
    const double half_n = 0.5 * static_cast<double>(n);
    const double a = d2 / (plan.envelope_c * out.t_lo);
    const double head = plan.envelope_C * std::pow(plan.envelope_c / d2, half_n) * boost::math::tgamma(half_n, a);

    const double norm = 1.0 / gamma_fn(0.5 * order);
    out.value = sum * norm;
    out.tail_error = (head + tail_err) * norm;
    out.warning = out.tail_error > plan.tail_tolerance * std::max(std::fabs(out.value), 1e-300);
    return out;
}

std::vector<HeatKernelExpansion> axis_expansions(const NuVector& nu, const MultiIndex& k) {
    std::vector<HeatKernelExpansion> e;
    for (std::size_t j = 0; j < nu.dim(); ++j) e.push_back(delta_expansion(nu[j], k[j]).simplified());
    return e;
}

} // namespace

KernelEstimate riesz_kernel_estimate(const NuVector& nu, const MultiIndex& k, const Point& x, const Point& y,
                                     const SubordinationPlan& plan) {
    check_points(nu, k, x, y);
    const auto exps = axis_expansions(nu, k);
    const double half_k = 0.5 * k.order();
    auto g = [&](double t) {
        double log_abs = half_k * std::log(t);
        int sign = 1;
        for (std::size_t j = 0; j < exps.size(); ++j) {
            const auto v = exps[j].evaluate_log(t, x[j], y[j]);
            if (v.sign == 0) return 0.0;
            log_abs += v.log_abs;
            sign *= v.sign;
        }
        return sign * std::exp(log_abs);
    };
    return subordinate_point(g, squared_distance(x, y), outer_scale(x, y), nu.dim(), k.order(), plan);
}

double riesz_kernel(const NuVector& nu, const MultiIndex& k, const Point& x, const Point& y,
                    const SubordinationPlan& plan) {
    return riesz_kernel_estimate(nu, k, x, y, plan).value;
}

KernelEstimate riesz_difference_estimate(const NuVector& nu, const MultiIndex& k, std::size_t axis,
                                         const Point& x, const Point& y, const SubordinationPlan& plan) {
    check_points(nu, k, x, y);
    if (axis >= nu.dim()) throw DomainError("riesz difference: axis out of range");
    auto exps = axis_expansions(nu, k);
    // Only the chosen axis changes order; the difference is formed inside
    // one expansion so that it cancels symbolically where possible.
    exps[axis] = delta_difference_expansion(nu[axis], k[axis]).simplified();
    const double half_k = 0.5 * k.order();
    auto g = [&](double t) {
        double log_abs = half_k * std::log(t);
        int sign = 1;
        for (std::size_t j = 0; j < exps.size(); ++j) {
            const auto v = exps[j].evaluate_log(t, x[j], y[j]);
            if (v.sign == 0) return 0.0;
            log_abs += v.log_abs;
            sign *= v.sign;
        }
        return sign * std::exp(log_abs);
    };
    return subordinate_point(g, squared_distance(x, y), outer_scale(x, y), nu.dim(), k.order(), plan);
}

double riesz_difference_kernel(const NuVector& nu, const MultiIndex& k, std::size_t axis, const Point& x,
                               const Point& y, const SubordinationPlan& plan) {
    return riesz_difference_estimate(nu, k, axis, x, y, plan).value;
}

KernelEstimate difference_abs_integral(double nu, int k, double x, double y, const SubordinationPlan& plan) {
    const NuVector nv({nu});
    const MultiIndex kk({k});
    check_points(nv, kk, {x}, {y});
    const auto e = delta_difference_expansion(nu, k).simplified();
    auto g = [&](double t) {
        const auto v = e.evaluate_log(t, x, y);
        return v.sign == 0 ? 0.0 : std::exp(0.5 * k * std::log(t) + v.log_abs);
    };
    KernelEstimate out = subordinate_point(g, (x - y) * (x - y), std::max(x * x, y * y), 1, k, plan);
    const double gk = gamma_fn(0.5 * k);
    out.value *= gk;
    out.tail_error *= gk;
    return out;
}

double dirichlet_riesz_kernel(double x, double y) {
    if (!(x > 0.0) || !(y > 0.0) || x == y) throw DomainError("dirichlet_riesz_kernel: need x != y, both positive");
    const double l = std::log((x + y) / std::fabs(x - y));
    return (1.0 / (x + y) - 1.0 / (x - y) - l / x) / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Grid operators

namespace {

/// First time resolved by the grid: the Gaussian width sqrt(2t) equals the
/// largest node spacing.
double resolved_time(const Grid& g) {
    const double h = g.max_spacing();
    return 0.5 * h * h;
}

double largest_coordinate(const Grid& g) {
    double m = 0.0;
    for (const auto& ax : g.axes()) m = std::max(m, ax.b);
    return m;
}

/// Times past which every kernel on the box is in its large-time regime,
/// up to relative corrections of order 1/factor.
double saturation_time(const Grid& g, double factor) {
    const double L = largest_coordinate(g);
    return factor * L * L;
}

/// M(i, m) = e(t, x_i, x_m) w_m, or e(t, x_m, x_i) w_m with swap. Each
/// unordered pair is evaluated once.
AxisMatrix expansion_matrix(const Axis& axis, const HeatKernelExpansion& e, double t, bool swap) {
    const double reach = std::sqrt(4.0 * t * kGaussianCutoff);
    AxisMatrix m;
    const std::size_t n = axis.size();
    m.rows = m.cols = n;
    m.data.assign(n * n, 0.0);
    const auto& x = axis.nodes;
    const auto& w = axis.weights;
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t k = i; k < n && x[k] - x[i] <= reach; ++k) {
            const auto [fwd, back] = e.evaluate_log_pair(t, x[i], x[k]);
            const double a = fwd.value(), b = back.value();
            m.data[i * n + k] = (swap ? b : a) * w[k];
            m.data[k * n + i] = (swap ? a : b) * w[i];
        }
    });
    return m;
}

void axpy(std::vector<double>& acc, double c, const std::vector<double>& v) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * v[i];
}

double sup_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

} // namespace

GridFunction fractional_inverse_apply(const NuVector& nu, double s, const GridFunction& f,
                                      const SubordinationPlan& plan, ApplyDiagnostics* diag) {
    if (!(s > 0.0)) throw DomainError("fractional_inverse_apply: s must be positive");
    const Grid& g = f.grid();
    if (nu.dim() != g.dim()) throw DomainError("fractional_inverse_apply: dimension mismatch");
    plan.validate();

    double decay = 0.0; // sum_j (nu_j + 1)
    for (std::size_t j = 0; j < nu.dim(); ++j) decay += nu[j] + 1.0;
    if (!(decay > s))
        throw NumericalError("fractional_inverse_apply: s = " + std::to_string(s) +
                             " exceeds the large-time decay of the semigroup; the integral diverges");

    const double gs = gamma_fn(s);
    const double t_head = std::max(plan.t_min, resolved_time(g));
    // The tail past t_last is added in closed form, so a moderate factor suffices.
    const double t_last = std::max(plan.t_max, saturation_time(g, 1e2));
    std::vector<double> acc(f.size(), 0.0);

    // Below t_head the semigroup is the identity to grid accuracy.
    axpy(acc, std::pow(t_head, s) / (s * gs), f.values());

    for (const auto& node : plan.with_range(t_head, t_last).nodes()) {
        const auto u = apply_semigroup(nu, node.t, f);
        axpy(acc, node.w * std::pow(node.t, s) / gs, u.values());
    }

    // Past t_last every kernel is in its small-argument regime,
    // p_t(x, y) ~ prod (x_j y_j)^{nu_j + 1/2} / ((2t)^{nu_j + 1} Gamma(nu_j + 1)),
    // so the remaining integral is a rank-one term.
    double moment = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto y = g.node(i);
        double m = g.weight(i) * f[i];
        for (std::size_t j = 0; j < y.size(); ++j) m *= std::pow(y[j], nu[j] + 0.5);
        moment += m;
    }
    double scale = std::pow(t_last, s - decay) / ((decay - s) * gs) * moment;
    for (std::size_t j = 0; j < nu.dim(); ++j) scale /= std::pow(2.0, nu[j] + 1.0) * gamma_fn(nu[j] + 1.0);
    double tail = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto x = g.node(i);
        double v = scale;
        for (std::size_t j = 0; j < x.size(); ++j) v *= std::pow(x[j], nu[j] + 0.5);
        acc[i] += v;
        tail = std::max(tail, std::fabs(v));
    }
    if (diag) *diag = {t_head, t_last, tail};
    return GridFunction(g, std::move(acc));
}

GridFunction riesz_apply(const NuVector& nu, const MultiIndex& k, const GridFunction& f,
                         const SubordinationPlan& plan, ApplyDiagnostics* diag) {
    const Grid& g = f.grid();
    if (nu.dim() != g.dim() || k.dim() != g.dim()) throw DomainError("riesz_apply: dimension mismatch");
    if (k.order() < 1) throw DomainError("riesz_apply needs |k| >= 1");
    plan.validate();

    const double half_k = 0.5 * k.order();
    const double norm = 1.0 / gamma_fn(half_k);
    const double t_head = std::max(plan.t_min, resolved_time(g));
    const double t_last = std::max(plan.t_max, saturation_time(g, 1e4));
    const auto exps = axis_expansions(nu, k);
    const auto shape = g.shape();

    // Short times: delta^k e^{-t Delta} f ~ delta^k f, integrated exactly in t.
    GridFunction dk = f;
    for (std::size_t j = 0; j < g.dim(); ++j)
        for (int r = 0; r < k[j]; ++r) dk = apply_delta_fd(nu, j, dk);
    std::vector<double> acc(f.size(), 0.0);
    axpy(acc, std::pow(t_head, half_k) / half_k * norm, dk.values());

    const auto nodes = plan.with_range(t_head, t_last).nodes();
    const double last_decade = t_last / 10.0;
    std::vector<double> tail_part(f.size(), 0.0);
    for (const auto& node : nodes) {
        std::vector<double> v = f.values();
        for (std::size_t j = 0; j < g.dim(); ++j)
            v = apply_along_axis(shape, j, expansion_matrix(g.axis(j), exps[j], node.t, false), v);
        const double c = node.w * std::pow(node.t, half_k) * norm;
        axpy(acc, c, v);
        if (node.t >= last_decade) axpy(tail_part, c, v);
    }
    if (diag) *diag = {t_head, t_last, sup_norm(tail_part)};
    return GridFunction(g, std::move(acc));
}

Eigen::MatrixXd riesz_matrix(double nu, int k, const Grid& grid, const SubordinationPlan& plan, bool adjoint) {
    if (grid.dim() != 1) throw DomainError("riesz_matrix is one-dimensional");
    if (k < 1) throw DomainError("riesz_matrix needs k >= 1");
    if (!(nu > -0.5)) throw DomainError("riesz_matrix needs nu > -1/2");
    plan.validate();
    const Axis& ax = grid.axis(0);
    const std::size_t n = ax.size();
    const double half_k = 0.5 * k;
    const double norm = 1.0 / gamma_fn(half_k);
    const double t_head = std::max(plan.t_min, resolved_time(grid));
    const double t_last = std::max(plan.t_max, saturation_time(grid, 1e4));
    const auto e = delta_expansion(nu, k).simplified();

    // Short-time part: (delta)^k, or (delta*)^k for the adjoint, by the same
    // three-point differences as apply_delta_fd.
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    {
        const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        Eigen::MatrixXd one(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(n); ++c) {
            std::vector<double> unit(n, 0.0);
            unit[static_cast<std::size_t>(c)] = 1.0;
            const auto col = apply_delta_fd(NuVector({nu}), 0, GridFunction(grid, unit));
            for (std::size_t r = 0; r < n; ++r) one(static_cast<Eigen::Index>(r), c) = col[r];
        }
        if (adjoint) {
            // delta* = -delta - (2nu + 1)/x
            Eigen::MatrixXd adj = -one;
            for (std::size_t r = 0; r < n; ++r)
                adj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)) -= (2.0 * nu + 1.0) / ax.nodes[r];
            one = adj;
        }
        d = eye;
        for (int r = 0; r < k; ++r) d = one * d;
    }
    Eigen::MatrixXd a = d * (std::pow(t_head, half_k) / half_k * norm);

    for (const auto& node : plan.with_range(t_head, t_last).nodes()) {
        const auto m = expansion_matrix(ax, e, node.t, false);
        const double c = node.w * std::pow(node.t, half_k) * norm;
        if (!adjoint) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += c * m.data[i * n + j];
        } else {
            // Transposed kernel: entry (i, j) is R(y_j, x_i) w_j, and m holds
            // R(x_j, x_i) w_i at (j, i).
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
                        c * m.data[j * n + i] / ax.weights[i] * ax.weights[j];
        }
    }
    return a;
}

GridFunction apply_matrix(const Eigen::MatrixXd& a, const GridFunction& f) {
    if (a.rows() != static_cast<Eigen::Index>(f.size()) || a.cols() != a.rows())
        throw DomainError("apply_matrix: size mismatch");
    const Eigen::Map<const Eigen::VectorXd> v(f.values().data(), static_cast<Eigen::Index>(f.size()));
    const Eigen::VectorXd out = a * v;
    return GridFunction(f.grid(), std::vector<double>(out.data(), out.data() + out.size()));
}

} // namespace hbr
