#include "hbr/function_spaces.hpp"

#include "hbr/errors.hpp"
#include "hbr/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace hbr {

Ball::Ball(Point c, double r) : center(std::move(c)), radius(r) {
    if (center.empty()) throw DomainError("ball: empty center");
    for (double v : center)
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("ball: center must be strictly positive");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw DomainError("ball: radius must be positive");
}

double Ball::volume() const {
    const double n = static_cast<double>(dim());
    return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0) * std::pow(radius, n);
}

bool Ball::contains(const Point& x, double slack) const {
    double d2 = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) d2 += (x[j] - center[j]) * (x[j] - center[j]);
    const double r = radius + slack;
    return d2 <= r * r;
}

std::vector<std::size_t> nodes_in_shell(const Grid& grid, const Point& c, double inner, double outer) {
    const std::size_t n = grid.dim();
    if (c.size() != n) throw DomainError("nodes_in_shell: dimension mismatch");
    std::vector<std::size_t> lo(n), hi(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& x = grid.axis(j).nodes;
        lo[j] = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), c[j] - outer) - x.begin());
        hi[j] = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), c[j] + outer) - x.begin());
        if (lo[j] >= hi[j]) return {};
    }
    std::vector<std::size_t> out;
    std::vector<std::size_t> idx = lo;
    const double in2 = inner < 0.0 ? -1.0 : inner * inner;
    const double out2 = outer * outer;
    for (;;) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = grid.axis(j).nodes[idx[j]] - c[j];
            d2 += d * d;
        }
        if (d2 > in2 && d2 <= out2) out.push_back(grid.ravel(idx));
        std::size_t j = n;
        while (j > 0) {
            --j;
            if (++idx[j] < hi[j]) break;
            idx[j] = lo[j];
            if (j == 0) return out;
        }
    }
}

namespace {

bool ball_leaves_box(const Grid& grid, const Point& c, double r) {
    for (std::size_t j = 0; j < grid.dim(); ++j)
        if (c[j] - r < grid.axis(j).a || c[j] + r > grid.axis(j).b) return true;
    return false;
}

double monomial(const Point& x, const Point& c, double scale, const std::vector<int>& alpha) {
    double v = 1.0;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        for (int e = 0; e < alpha[j]; ++e) v *= (x[j] - c[j]) / scale;
    return v;
}

int order_of(const std::vector<int>& alpha) {
    int s = 0;
    for (int a : alpha) s += a;
    return s;
}

nlohmann::json point_json(const Point& x) { return nlohmann::json(x); }

} // namespace

double discrete_measure(const Grid& grid, const Ball& b, bool* clipped) {
    if (clipped) *clipped = ball_leaves_box(grid, b.center, b.radius);
    double m = 0.0;
    for (std::size_t i : nodes_in_shell(grid, b.center, -1.0, b.radius)) m += grid.weight(i);
    return m;
}

int moment_order(std::size_t n, double p) {
    if (!(p > 0.0) || p > 1.0) throw DomainError("moment_order: p must lie in (0, 1]");
    // Guard against 1/p - 1 landing just below an integer.
    return static_cast<int>(std::floor(static_cast<double>(n) * (1.0 / p - 1.0) + 1e-12));
}

namespace {

// Compositions of d into the slots a[j..], first slot largest first.
void compositions(std::vector<int>& a, std::size_t j, int d, std::vector<std::vector<int>>& out) {
    if (j + 1 == a.size()) {
        a[j] = d;
        out.push_back(a);
        return;
    }
    for (int e = d; e >= 0; --e) {
        a[j] = e;
        compositions(a, j + 1, d - e, out);
    }
}

} // namespace

std::vector<std::vector<int>> multi_indices(std::size_t n, int M) {
    if (n == 0) throw DomainError("multi_indices: n must be positive");
    if (M < 0) throw DomainError("multi_indices: M must be nonnegative");
    std::vector<std::vector<int>> out;
    std::vector<int> a(n, 0);
    for (int d = 0; d <= M; ++d) compositions(a, 0, d, out);
    return out;
}

// ---------------------------------------------------------------------------
// Atoms

nlohmann::json AtomVerdict::to_json() const {
    return {{"valid", valid()},
            {"p_admissible", p_admissible},
            {"support", support},
            {"size", size},
            {"cancellation", cancellation},
            {"cancellation_required", cancellation_required},
            {"radius_ok", radius_ok},
            {"sup_norm", sup_norm},
            {"size_bound", size_bound},
            {"moments", moments},
            {"moment_tolerance", moment_tolerance},
            {"failures", failures}};
}

AtomVerdict validate_p_rho_atom(const AtomCandidate& a, const NuVector& nu, const AtomOptions& opts) {
    AtomVerdict v;
    const Grid& grid = a.f.grid();
    const std::size_t n = grid.dim();
    if (a.ball.dim() != n || nu.dim() != n) throw DomainError("validate_p_rho_atom: dimension mismatch");

    const double gamma = std::min(1.0, nu.gamma_nu());
    const double p_lo = static_cast<double>(n) / (static_cast<double>(n) + gamma);
    v.p_admissible = a.p > p_lo && a.p <= 1.0;
    if (!v.p_admissible) v.failures.push_back("p outside (n/(n+gamma), 1]");

    const double r = a.ball.radius;
    v.support = true;
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.f.size(); ++i) {
        const double fi = a.f[i];
        if (fi == 0.0) continue;
        v.sup_norm = std::max(v.sup_norm, std::abs(fi));
        l1 += grid.weight(i) * std::abs(fi);
        if (!a.ball.contains(grid.node(i), 1e-12 * r)) v.support = false;
    }
    if (!v.support) v.failures.push_back("support not contained in the ball");

    const double vol = a.ball.volume();
    v.size_bound = std::pow(vol, -1.0 / a.p);
    v.size = v.sup_norm <= v.size_bound * (1.0 + 1e-12);
    if (!v.size) v.failures.push_back("sup norm exceeds |B|^{-1/p}");

    const double rho = critical_function(a.ball.center);
    v.cancellation_required = r < rho;
    if (opts.restricted) {
        v.radius_ok = r <= rho * (1.0 + 1e-12);
        if (!v.radius_ok) v.failures.push_back("radius exceeds rho(x_0) under the restricted convention");
    }

    v.moment_tolerance = 1e-10 * l1;
    v.cancellation = true;
    if (v.p_admissible) {
        const int omega = moment_order(n, a.p);
        for (const auto& alpha : multi_indices(n, omega)) {
            // Scale (x - x_0) by r so the tolerance 1e-10 ||a||_1 r^|alpha| is uniform.
            double m = 0.0;
            for (std::size_t i = 0; i < a.f.size(); ++i) {
                if (a.f[i] == 0.0) continue;
                m += grid.weight(i) * a.f[i] * monomial(grid.node(i), a.ball.center, r, alpha);
            }
            v.moments.push_back(m * std::pow(r, order_of(alpha)));
            if (std::abs(m) > v.moment_tolerance) v.cancellation = false;
        }
    }
    if (v.cancellation_required && !v.cancellation) v.failures.push_back("moments do not vanish although r < rho(x_0)");
    return v;
}

nlohmann::json FAtomVerdict::to_json() const {
    return {{"valid", valid()}, {"type_a", type_a}, {"type_b", type_b}, {"mean", mean},
            {"sup_norm", sup_norm}, {"interval", {interval.first, interval.second}}, {"notes", notes}};
}

FAtomVerdict validate_f_atom(const GridFunction& a, const std::pair<double, double>* interval) {
    const Grid& grid = a.grid();
    if (grid.dim() != 1) throw DomainError("validate_f_atom: one-dimensional grids only");
    const Axis& ax = grid.axis(0);
    const std::size_t N = ax.size();
    FAtomVerdict v;

    std::size_t first = N, last = 0;
    double l1 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (a[i] == 0.0) continue;
        first = std::min(first, i);
        last = i;
        v.sup_norm = std::max(v.sup_norm, std::abs(a[i]));
        l1 += ax.weights[i] * std::abs(a[i]);
    }
    if (first == N) {
        v.notes.push_back("zero function");
        return v;
    }
    auto half_cell = [&](std::size_t i, bool left) {
        if (left) return i == 0 ? 0.0 : 0.5 * (ax.nodes[i] - ax.nodes[i - 1]);
        return i + 1 == N ? 0.0 : 0.5 * (ax.nodes[i + 1] - ax.nodes[i]);
    };

    // (a): c chi_(0, 1/c), sampled. Nodes within half a cell of 1/c may go either way.
    {
        const double c = a[first];
        bool ok = c > 0.0;
        for (std::size_t i = 0; i < N && ok; ++i)
            if (a[i] != 0.0 && std::abs(a[i] - c) > 1e-12 * c) ok = false;
        const double delta = ok ? 1.0 / c : 0.0;
        for (std::size_t i = 0; i < N && ok; ++i) {
            const double x = ax.nodes[i];
            const double tol = std::max(half_cell(i, true), half_cell(i, false));
            const bool inside = a[i] != 0.0;
            if (x < delta - tol && !inside) ok = false;
            if (x > delta + tol && inside) ok = false;
        }
        v.type_a = ok;
        if (ok) v.notes.push_back("indicator of (0, " + std::to_string(delta) + ")");
    }

    // (b): mean zero on I with sup <= 1/|I|.
    if (interval) {
        v.interval = *interval;
    } else {
        v.interval = {ax.nodes[first] - half_cell(first, true), ax.nodes[last] + half_cell(last, false)};
    }
    const double len = v.interval.second - v.interval.first;
    bool inside = len > 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (a[i] == 0.0) continue;
        const double x = ax.nodes[i];
        if (x < v.interval.first - 1e-12 * len || x > v.interval.second + 1e-12 * len) inside = false;
        mean += ax.weights[i] * a[i];
    }
    v.mean = mean;
    const bool mean_zero = std::abs(mean) <= 1e-10 * l1;
    const bool bounded = len > 0.0 && v.sup_norm <= (1.0 / len) * (1.0 + 1e-9);
    v.type_b = inside && mean_zero && bounded;
    if (!inside) v.notes.push_back("support leaves I");
    if (!mean_zero) v.notes.push_back("nonzero mean on I");
    if (!bounded) v.notes.push_back("sup norm exceeds 1/|I|");
    return v;
}

AtomFixture AtomFixture::from_json(const nlohmann::json& j) {
    try {
        Grid grid = Grid::from_json(j.at("grid"));
        AtomFixture a{j.value("label", ""), j.at("kind").get<std::string>(),
                      GridFunction(grid, j.at("values").get<std::vector<double>>()),
                      std::nullopt, 1.0, std::nullopt, std::nullopt, std::nullopt, false};
        if (a.kind != "p_rho" && a.kind != "f_atom") throw ConfigError("atom kind must be p_rho or f_atom");
        if (j.contains("ball"))
            a.ball = Ball(j["ball"].at("center").get<Point>(), j["ball"].at("radius").get<double>());
        a.p = j.value("p", 1.0);
        if (j.contains("nu")) a.nu = NuVector(j["nu"].get<std::vector<double>>());
        if (j.contains("interval")) {
            const auto v = j["interval"].get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("interval needs two endpoints");
            a.interval = std::make_pair(v[0], v[1]);
        }
        if (j.contains("expected_valid")) a.expected_valid = j["expected_valid"].get<bool>();
        a.restricted = j.value("restricted", false);
        if (a.kind == "p_rho" && (!a.ball || !a.nu)) throw ConfigError("p_rho atom needs ball and nu");
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("atom file: ") + e.what());
    }
}

AtomFixture AtomFixture::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open atom file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("atom file " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json AtomFixture::to_json() const {
    nlohmann::json j{{"label", label}, {"kind", kind}, {"grid", f.grid().to_json()}, {"values", f.values()}, {"p", p}};
    if (ball) j["ball"] = {{"center", ball->center}, {"radius", ball->radius}};
    if (nu) j["nu"] = nu->values();
    if (interval) j["interval"] = {interval->first, interval->second};
    if (expected_valid) j["expected_valid"] = *expected_valid;
    if (restricted) j["restricted"] = true;
    return j;
}

nlohmann::json check_atom(const AtomFixture& a) {
    nlohmann::json out;
    if (a.kind == "p_rho") {
        out = validate_p_rho_atom({a.f, *a.ball, a.p}, *a.nu, {a.restricted}).to_json();
    } else {
        out = validate_f_atom(a.f, a.interval ? &*a.interval : nullptr).to_json();
    }
    out["label"] = a.label;
    out["kind"] = a.kind;
    return out;
}

// ---------------------------------------------------------------------------
// Polynomials

double PolyND::operator()(const Point& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < coef.size(); ++k) s += coef[k] * monomial(x, center, scale, exponents[k]);
    return s;
}

std::vector<double> PolyND::centred_coefficients() const {
    std::vector<double> out(coef.size());
    for (std::size_t k = 0; k < coef.size(); ++k) out[k] = coef[k] / std::pow(scale, order_of(exponents[k]));
    return out;
}

PolyND minimizing_polynomial(const GridFunction& g, const Ball& b, int M, ProjectionInfo* info) {
    const Grid& grid = g.grid();
    if (b.dim() != grid.dim()) throw DomainError("minimizing_polynomial: dimension mismatch");
    PolyND poly;
    poly.center = b.center;
    poly.scale = b.radius;
    poly.degree = M;
    poly.exponents = multi_indices(grid.dim(), M);
    const std::size_t K = poly.exponents.size();

    const auto nodes = nodes_in_shell(grid, b.center, -1.0, b.radius);
    if (nodes.size() < K)
        throw NumericalError("minimizing_polynomial: ball holds " + std::to_string(nodes.size()) +
                             " nodes, fewer than the " + std::to_string(K) + " unknowns");

    // Weighted least squares min sum w (g - P)^2 over B; its normal equations
    // are exactly the moment conditions.
    Eigen::MatrixXd A(nodes.size(), K);
    Eigen::VectorXd rhs(nodes.size());
    double g_l1 = 0.0;
    for (std::size_t r = 0; r < nodes.size(); ++r) {
        const std::size_t i = nodes[r];
        const double sw = std::sqrt(grid.weight(i));
        const Point x = grid.node(i);
        for (std::size_t k = 0; k < K; ++k) A(r, k) = sw * monomial(x, b.center, b.radius, poly.exponents[k]);
        rhs(r) = sw * g[i];
        g_l1 += grid.weight(i) * std::abs(g[i]);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(K).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    const double cond = sv(K - 1) > 0.0 ? sv(0) / sv(K - 1) : std::numeric_limits<double>::infinity();
    if (!(cond < 1e10)) throw NumericalError("minimizing_polynomial: moment system ill conditioned (ball under-resolved)");
    const Eigen::VectorXd c = qr.solve(rhs);
    poly.coef.assign(c.data(), c.data() + K);

    if (info) {
        info->condition = cond;
        info->nodes = nodes.size();
        info->clipped = ball_leaves_box(grid, b.center, b.radius);
        const Eigen::VectorXd res = A.transpose() * (rhs - A * c);
        info->residual = g_l1 > 0.0 ? res.cwiseAbs().maxCoeff() / g_l1 : res.cwiseAbs().maxCoeff();
    }
    return poly;
}

// ---------------------------------------------------------------------------
// BMO

std::vector<Ball> BallSampler::balls(const Grid& grid) const {
    const std::size_t n = grid.dim();
    if (radii < 1) throw DomainError("ball sampler: radii must be positive");
    if (!center_box.empty() && center_box.size() != n) throw DomainError("ball sampler: center box dimension");
    double diam2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) diam2 += std::pow(grid.axis(j).b - grid.axis(j).a, 2);
    const double r_max = max_radius > 0.0 ? max_radius : std::sqrt(diam2);

    std::vector<std::vector<std::size_t>> picks(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Axis& ax = grid.axis(j);
        const std::size_t stride =
            center_stride > 0 ? center_stride : std::max<std::size_t>(1, ax.size() / std::max<std::size_t>(1, centers_per_axis));
        for (std::size_t i = stride / 2; i < ax.size(); i += stride) {
            const double x = ax.nodes[i];
            if (!center_box.empty() && (x < center_box[j].first || x > center_box[j].second)) continue;
            picks[j].push_back(i);
        }
        if (picks[j].empty()) return {};
    }

    std::vector<Ball> out;
    std::vector<std::size_t> k(n, 0), idx(n);
    for (;;) {
        Point c(n);
        double h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const Axis& ax = grid.axis(j);
            idx[j] = picks[j][k[j]];
            c[j] = ax.nodes[idx[j]];
            const std::size_t i = idx[j];
            const double left = i > 0 ? ax.nodes[i] - ax.nodes[i - 1] : 0.0;
            const double right = i + 1 < ax.size() ? ax.nodes[i + 1] - ax.nodes[i] : 0.0;
            h = std::max({h, left, right});
        }
        const double rho = critical_function(c);
        const double r_min = min_radius_spacings * h;
        std::vector<double> rs;
        if (r_max > r_min) {
            for (std::size_t m = 0; m < radii; ++m) {
                const double f = radii == 1 ? 0.0 : static_cast<double>(m) / static_cast<double>(radii - 1);
                rs.push_back(r_min * std::pow(r_max / r_min, f));
            }
        }
        // Both branches always get a representative.
        rs.push_back(0.5 * rho);
        rs.push_back(rho);
        for (double r : rs) {
            if (small_only && r >= rho) continue;
            out.emplace_back(c, r);
        }

        std::size_t j = n;
        bool done = true;
        while (j > 0) {
            --j;
            if (++k[j] < picks[j].size()) {
                done = false;
                break;
            }
            k[j] = 0;
        }
        if (done) break;
    }
    return out;
}

BallSampler BallSampler::refined() const {
    BallSampler s = *this;
    if (s.center_stride > 1) s.center_stride /= 2;
    s.centers_per_axis *= 2;
    s.radii *= 2;
    return s;
}

nlohmann::json BmoEstimate::to_json() const {
    return {{"value", value},
            {"small_branch", small_branch},
            {"large_branch", large_branch},
            {"small_balls", small_balls},
            {"large_balls", large_balls},
            {"skipped", skipped},
            {"clipped", clipped},
            {"worst_center", point_json(worst_center)},
            {"worst_radius", worst_radius}};
}

BmoEstimate bmo_estimate(const GridFunction& f, double s, int M, const BallSampler& sampler) {
    if (!(s >= 0.0)) throw DomainError("bmo_norm: s must be nonnegative");
    if (M < static_cast<int>(std::floor(s))) throw DomainError("bmo_norm: M must be at least floor(s)");
    const Grid& grid = f.grid();
    const double n = static_cast<double>(grid.dim());
    const auto balls = sampler.balls(grid);

    struct Result {
        double value = -1.0;
        bool small = false;
        bool clipped = false;
    };
    std::vector<Result> res(balls.size());
    parallel_for(balls.size(), [&](std::size_t b) {
        const Ball& ball = balls[b];
        Result& r = res[b];
        r.small = ball.radius < critical_function(ball.center);
        r.clipped = ball_leaves_box(grid, ball.center, ball.radius);
        const auto nodes = nodes_in_shell(grid, ball.center, -1.0, ball.radius);
        if (nodes.size() < 3) return;
        double m = 0.0, sq = 0.0;
        if (r.small) {
            PolyND P;
            try {
                P = minimizing_polynomial(f, ball, M);
            } catch (const NumericalError&) {
                return;
            }
            for (std::size_t i : nodes) {
                const double d = f[i] - P(grid.node(i));
                sq += grid.weight(i) * d * d;
                m += grid.weight(i);
            }
        } else {
            for (std::size_t i : nodes) {
                sq += grid.weight(i) * f[i] * f[i];
                m += grid.weight(i);
            }
        }
        r.value = std::pow(ball.volume(), -s / n) * std::sqrt(sq / m);
    });

    BmoEstimate e;
    for (std::size_t b = 0; b < balls.size(); ++b) {
        const Result& r = res[b];
        if (r.value < 0.0) {
            ++e.skipped;
            continue;
        }
        if (r.clipped) ++e.clipped;
        if (r.small) {
            ++e.small_balls;
            e.small_branch = std::max(e.small_branch, r.value);
        } else {
            ++e.large_balls;
            e.large_branch = std::max(e.large_branch, r.value);
        }
        if (r.value > e.value || e.worst_center.empty()) {
            e.value = r.value;
            e.worst_center = balls[b].center;
            e.worst_radius = balls[b].radius;
        }
    }
    return e;
}

double bmo_norm(const GridFunction& f, double s, int M, const BallSampler& sampler) {
    return bmo_estimate(f, s, M, sampler).value;
}

} // namespace hbr
