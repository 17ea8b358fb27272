#include "hbr/campaign.hpp"

#include "hbr/errors.hpp"
#include "hbr/function_spaces.hpp"
#include "hbr/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hbr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDriftLimit = 0.05;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::size_t argmax(const std::vector<double>& v) {
    std::size_t a = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[a]) a = i;
    return a;
}

Eigen::Map<const Eigen::VectorXd> as_vector(const GridFunction& f) {
    return {f.values().data(), static_cast<Eigen::Index>(f.size())};
}

/// Parameters of one random atom.
struct AtomDraw {
    double center;
    double radius;
    std::vector<double> shape; // coefficients of the polynomial factor
};

AtomDraw draw_atom(SplitMix64& rng, const std::pair<double, double>& centers, int omega) {
    AtomDraw a;
    a.center = rng.uniform(centers.first, centers.second);
    const double rho = critical_function({a.center});
    a.radius = rng.log_uniform(0.5 * rho, 2.0 * rho);
    a.shape.resize(static_cast<std::size_t>(omega) + 3);
    for (double& c : a.shape) c = rng.uniform(-1.0, 1.0);
    a.shape[0] += 2.0; // keeps the large atoms away from zero mass
    return a;
}

/// (1 - u^2)^2 q(u) on B(center, radius); below the critical radius the
/// low-order coefficients of q are solved for so that the discrete moments
/// up to omega vanish. Scaled so that sup |a| = 0.99 |B|^{-1/p}.
GridFunction build_atom(const Grid& g, const AtomDraw& d, double p, int omega) {
    const Axis& ax = g.axis(0);
    const std::size_t n = ax.size();
    std::vector<double> q = d.shape;
    const bool cancel = d.radius < critical_function({d.center});
    auto u_of = [&](std::size_t i) { return (ax.nodes[i] - d.center) / d.radius; };
    auto env = [](double u) { return std::fabs(u) < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0; };
    if (cancel) {
        const auto K = static_cast<Eigen::Index>(omega + 1);
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K, K);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(K);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = u_of(i), e = env(u);
            if (e == 0.0) continue;
            const double w = ax.weights[i] * e;
            for (Eigen::Index al = 0; al < K; ++al) {
                const double ua = std::pow(u, static_cast<double>(al));
                for (Eigen::Index be = 0; be < K; ++be) A(al, be) += w * ua * std::pow(u, static_cast<double>(be));
                double high = 0.0;
                for (std::size_t m = static_cast<std::size_t>(K); m < q.size(); ++m)
                    high += q[m] * std::pow(u, static_cast<double>(m));
                b(al) -= w * ua * high;
            }
        }
        const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
        for (Eigen::Index al = 0; al < K; ++al) q[static_cast<std::size_t>(al)] = c(al);
    }
    std::vector<double> v(n, 0.0);
    double sup = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = u_of(i), e = env(u);
        if (e == 0.0) continue;
        double poly = 0.0;
        for (std::size_t m = q.size(); m-- > 0;) poly = poly * u + q[m];
        v[i] = e * poly;
        sup = std::max(sup, std::fabs(v[i]));
    }
    if (!(sup > 0.0)) throw NumericalError("atom generation failed: the ball holds no grid nodes");
    const double target = 0.99 * std::pow(2.0 * d.radius, -1.0 / p);
    for (double& x : v) x *= target / sup;
    return GridFunction(g, std::move(v));
}

/// max over the dyadic times of |e^{-t Delta_nu} F| for every column of F.
Eigen::MatrixXd maximal_columns(double nu, const Grid& g, const Eigen::MatrixXd& F) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(F.rows(), F.cols());
    for (double t : default_maximal_times()) {
        const double reach = std::sqrt(4.0 * t * kGaussianCutoff);
        const auto m = symmetric_axis_kernel_matrix(g.axis(0), [&](double x, double y) {
            return std::fabs(x - y) > reach ? 0.0 : heat_kernel_1d(nu, t, x, y);
        });
        const Eigen::Map<const RowMajor> K(m.data.data(), static_cast<Eigen::Index>(m.rows),
                                           static_cast<Eigen::Index>(m.cols));
        out = out.cwiseMax((K * F).cwiseAbs());
    }
    return out;
}

double lp_column(const Grid& g, const Eigen::MatrixXd& F, Eigen::Index c, double p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < F.rows(); ++i)
        s += g.weight(static_cast<std::size_t>(i)) * std::pow(std::fabs(F(i, c)), p);
    return std::pow(s, 1.0 / p);
}

Eigen::MatrixXd riesz_or_identity(double nu, int k, const Grid& g, const SubordinationPlan& plan) {
    if (k == 0) return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
    return riesz_matrix(nu, k, g, plan);
}

HardyReport hardy_with(const std::vector<AtomDraw>& draws, double nu, int k, double p, const HardyOptions& opts) {
    const NuVector nv({nu});
    const int omega = moment_order(1, p);
    const Grid g = Grid::uniform({opts.grid_range}, opts.grid_nodes);
    const auto N = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd A(N, static_cast<Eigen::Index>(draws.size()));
    HardyReport rep;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const auto& d = draws[i];
        const GridFunction a = build_atom(g, d, p, omega);
        const auto verdict = validate_p_rho_atom({a, Ball({d.center}, d.radius), p}, nv);
        if (!verdict.valid())
            throw NumericalError("hardy_spot_check: generated atom " + std::to_string(i) + " is invalid (" +
                                 verdict.failures.front() + ")");
        A.col(static_cast<Eigen::Index>(i)) = as_vector(a);
        rep.centers.push_back({d.center});
        rep.radii.push_back(d.radius);
    }
    const Eigen::MatrixXd RA = riesz_or_identity(nu, k, g, opts.plan) * A;
    const double nu_max = nu + k + 2.0 * opts.laplacian_power;
    const Eigen::MatrixXd MRA = maximal_columns(nu_max, g, RA);
    for (Eigen::Index c = 0; c < MRA.cols(); ++c) rep.norms.push_back(lp_column(g, MRA, c, p));
    rep.worst = argmax(rep.norms);
    rep.max = rep.norms[rep.worst];
    rep.median = median(rep.norms);
    rep.ratio = rep.median > 0.0 ? rep.max / rep.median : kInf;
    rep.uniform = rep.ratio <= opts.threshold;
    return rep;
}

void check_hardy_args(double nu, int k, double p, std::size_t atoms) {
    if (!(nu > -0.5)) throw DomainError("hardy_spot_check: nu must exceed -1/2");
    if (k < 0) throw DomainError("hardy_spot_check: k must be nonnegative");
    const double lo = 1.0 / (1.0 + NuVector({nu}).gamma_nu());
    if (!(p > lo) || !(p <= 1.0)) throw DomainError("hardy_spot_check: p must lie in (n/(n + gamma_nu), 1]");
    if (atoms == 0) throw DomainError("hardy_spot_check: need at least one atom");
}

/// Test function i of the BMO corpus: bumps, signed steps and wave packets.
struct CorpusDraw {
    int kind;
    double center;
    double width;
    double amplitude;
};

CorpusDraw draw_corpus(SplitMix64& rng, std::size_t i) {
    CorpusDraw d;
    d.kind = static_cast<int>(i % 3);
    d.center = rng.uniform(1.5, 7.0);
    d.width = rng.log_uniform(0.2, 1.5);
    d.amplitude = rng.uniform(0.5, 2.0);
    return d;
}

GridFunction build_corpus(const Grid& g, const CorpusDraw& d) {
    return GridFunction::sample(g, [&](const Point& x) {
        const double u = (x[0] - d.center) / d.width;
        if (std::fabs(u) >= 1.0) return 0.0;
        switch (d.kind) {
        case 0: return d.amplitude * (1.0 - u * u) * (1.0 - u * u);
        case 1: return d.amplitude * (u < 0.0 ? 1.0 : -0.5);
        default: return d.amplitude * std::sin(3.0 * std::numbers::pi * u) * (1.0 - u * u);
        }
    });
}

BallSampler corpus_sampler(const std::pair<double, double>& range) {
    BallSampler s;
    // Keep the balls away from the truncation of the half-line.
    s.center_box = {{range.first + 0.1 * (range.second - range.first), range.first + 0.8 * (range.second - range.first)}};
    s.max_radius = 0.1 * (range.second - range.first);
    return s;
}

BmoReport bmo_with(const std::vector<CorpusDraw>& draws, double nu, int k, double s, const BmoOptions& opts) {
    const Grid g = Grid::uniform({opts.grid_range}, opts.grid_nodes);
    const auto R = riesz_or_identity(nu, k, g, opts.plan);
    const BallSampler sampler = corpus_sampler(opts.grid_range);
    const int M = static_cast<int>(std::floor(s));
    BmoReport rep;
    for (const auto& d : draws) {
        const GridFunction f = build_corpus(g, d);
        const double below = bmo_norm(f, s, M, sampler);
        if (!(below > 0.0)) {
            ++rep.skipped;
            rep.ratios.push_back(kNaN);
            continue;
        }
        rep.ratios.push_back(bmo_norm(apply_matrix(R, f), s, M, sampler) / below);
    }
    std::vector<double> finite;
    for (double r : rep.ratios)
        if (!std::isnan(r)) finite.push_back(r);
    rep.max = finite.empty() ? kNaN : *std::max_element(finite.begin(), finite.end());
    rep.median = median(finite);
    return rep;
}

nlohmann::json number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double relative_drift(const std::vector<double>& C) {
    const double lo = *std::min_element(C.begin(), C.end());
    const double hi = *std::max_element(C.begin(), C.end());
    if (!std::isfinite(hi)) return kInf;
    if (lo == 0.0) return hi == 0.0 ? 0.0 : kInf;
    return (hi - lo) / lo;
}

SampleRecord record(std::size_t i, double x, double y, double lhs, double rhs) {
    SampleRecord r;
    r.index = i;
    r.t = kNaN;
    r.x = {x};
    r.y = {y};
    r.lhs = lhs;
    r.rhs = rhs;
    r.ratio = rhs > 0.0 ? lhs / rhs : kInf;
    return r;
}

void finish_levels(BoundReport& rep, const std::vector<double>& C) {
    rep.C_levels = C;
    rep.C_hat = C.back();
    rep.c_hat = kNaN;
    rep.drift = relative_drift(C);
    nlohmann::json Cs = nlohmann::json::array();
    for (double c : C) Cs.push_back(number(c));
    rep.fit.push_back({{"C", Cs}, {"drift", number(rep.drift)}});
}

BoundReport hardy_campaign(const CampaignConfig& cfg) {
    const double nu = cfg.nu[0];
    const int k = cfg.k[0];
    check_hardy_args(nu, k, cfg.p, cfg.samples);
    SplitMix64 rng(cfg.seed);
    HardyOptions opts;
    opts.grid_range = cfg.grid_range;
    opts.plan = cfg.plan;
    opts.laplacian_power = cfg.laplacian_power;
    std::vector<AtomDraw> draws;
    for (std::size_t i = 0; i < cfg.samples; ++i) draws.push_back(draw_atom(rng, opts.center_range, moment_order(1, cfg.p)));

    BoundReport rep;
    rep.id = cfg.id;
    std::vector<double> C;
    nlohmann::json levels = nlohmann::json::array();
    HardyReport last;
    for (int l = 0; l < cfg.refinement_levels; ++l) {
        opts.grid_nodes = cfg.grid_nodes << l;
        last = hardy_with(draws, nu, k, cfg.p, opts);
        C.push_back(last.max);
        rep.samples_per_level.push_back(cfg.samples);
        levels.push_back({{"grid_nodes", opts.grid_nodes}, {"max", last.max}, {"median", last.median}, {"ratio", last.ratio}});
    }
    finish_levels(rep, C);
    rep.extra["levels"] = levels;
    rep.extra["threshold"] = opts.threshold;
    rep.extra["maximal_order"] = nu + k + 2.0 * opts.laplacian_power;
    if (!last.uniform || !std::isfinite(rep.C_hat)) rep.verdict = Verdict::violated;
    else rep.verdict = rep.drift < kDriftLimit ? Verdict::stable : Verdict::unstable;
    rep.worst = record(last.worst, last.centers[last.worst][0], last.radii[last.worst], last.max, last.median);
    for (std::size_t i = 0; i < last.norms.size(); ++i)
        rep.samples.push_back(record(i, last.centers[i][0], last.radii[i], last.norms[i], last.median));
    rep.notes.push_back("samples: x is the atom centre, y its radius, lhs ||M(R a)||_p, rhs the median over atoms");
    return rep;
}

BoundReport bmo_campaign(const CampaignConfig& cfg) {
    SplitMix64 rng(cfg.seed);
    std::vector<CorpusDraw> draws;
    for (std::size_t i = 0; i < cfg.samples; ++i) draws.push_back(draw_corpus(rng, i));
    BmoOptions opts;
    opts.grid_range = cfg.grid_range;
    opts.plan = cfg.plan;
    BoundReport rep;
    rep.id = cfg.id;
    std::vector<double> C;
    nlohmann::json levels = nlohmann::json::array();
    BmoReport last;
    for (int l = 0; l < cfg.refinement_levels; ++l) {
        opts.grid_nodes = cfg.grid_nodes << l;
        last = bmo_with(draws, cfg.nu[0], cfg.k[0], cfg.s, opts);
        C.push_back(last.max);
        rep.samples_per_level.push_back(cfg.samples);
        levels.push_back({{"grid_nodes", opts.grid_nodes}, {"max", number(last.max)}, {"median", number(last.median)},
                          {"skipped", last.skipped}});
    }
    finish_levels(rep, C);
    rep.verdict = Verdict::advisory;
    rep.extra["levels"] = levels;
    rep.extra["drift_below_limit"] = rep.drift < kDriftLimit;
    const std::size_t w = argmax(last.ratios);
    rep.worst = record(w, draws[w].center, draws[w].width, last.ratios[w], 1.0);
    for (std::size_t i = 0; i < last.ratios.size(); ++i)
        if (!std::isnan(last.ratios[i])) rep.samples.push_back(record(i, draws[i].center, draws[i].width, last.ratios[i], 1.0));
    rep.notes.push_back("report only: the BMO estimate is a supremum over a finite ball family");
    rep.notes.push_back("samples: x is the centre, y the width of the test function, lhs bmo(R f)/bmo(f)");
    return rep;
}

struct SmoothDraw {
    double c[3];
    double w[3];
    double a[3];
};

BoundReport difference_campaign(const CampaignConfig& cfg) {
    const double nu = cfg.nu[0];
    const int k = cfg.k[0];
    SplitMix64 rng(cfg.seed);
    std::vector<SmoothDraw> draws(cfg.samples);
    const double lo = cfg.grid_range.first, hi = cfg.grid_range.second;
    for (auto& d : draws)
        for (int m = 0; m < 3; ++m) {
            d.c[m] = rng.uniform(lo + 0.1 * (hi - lo), lo + 0.8 * (hi - lo));
            d.w[m] = rng.log_uniform(0.2, 1.5);
            d.a[m] = rng.uniform(-1.0, 1.0);
        }

    BoundReport rep;
    rep.id = cfg.id;
    std::vector<double> C;
    nlohmann::json levels = nlohmann::json::array();
    std::vector<SampleRecord> finest;
    for (int l = 0; l < cfg.refinement_levels; ++l) {
        const Grid g = Grid::uniform({cfg.grid_range}, cfg.grid_nodes << l);
        const Eigen::MatrixXd D = riesz_matrix(nu, k, g, cfg.plan) - riesz_matrix(nu + 1.0, k, g, cfg.plan);
        const auto N = static_cast<Eigen::Index>(g.size());
        Eigen::MatrixXd F(N, static_cast<Eigen::Index>(draws.size()));
        for (std::size_t i = 0; i < draws.size(); ++i) {
            const auto& d = draws[i];
            const GridFunction f = GridFunction::sample(g, [&](const Point& x) {
                double v = 0.0;
                for (int m = 0; m < 3; ++m) v += d.a[m] * std::exp(-std::pow((x[0] - d.c[m]) / d.w[m], 2));
                return v;
            });
            F.col(static_cast<Eigen::Index>(i)) = as_vector(f);
        }
        const Eigen::MatrixXd DF = D * F;
        double best = 0.0;
        finest.clear();
        for (double q : cfg.lp_exponents)
            for (Eigen::Index c = 0; c < F.cols(); ++c) {
                const auto i = static_cast<std::size_t>(c);
                auto r = record(i, draws[i].c[0], draws[i].w[0], lp_column(g, DF, c, q), lp_column(g, F, c, q));
                best = std::max(best, r.ratio);
                finest.push_back(r);
            }
        C.push_back(best);
        rep.samples_per_level.push_back(cfg.samples * cfg.lp_exponents.size());
        levels.push_back({{"grid_nodes", g.size()}, {"max_ratio", best}});
    }
    finish_levels(rep, C);
    rep.extra["levels"] = levels;
    if (!std::isfinite(rep.C_hat)) rep.verdict = Verdict::violated;
    else rep.verdict = rep.drift < kDriftLimit ? Verdict::stable : Verdict::unstable;
    std::size_t w = 0;
    for (std::size_t i = 1; i < finest.size(); ++i)
        if (finest[i].ratio > finest[w].ratio) w = i;
    rep.worst = finest[w];
    rep.extra["worst_exponent"] = cfg.lp_exponents[w / draws.size()];
    rep.samples = std::move(finest);
    rep.notes.push_back("samples: x and y are the first centre and width of the test function, lhs ||D f||_p, rhs ||f||_p");
    return rep;
}

} // namespace

BoundReport run_spot_campaign(const CampaignConfig& cfg) {
    if (cfg.id == "thm1_6i") return hardy_campaign(cfg);
    if (cfg.id == "thm1_6ii") return bmo_campaign(cfg);
    if (cfg.id == "thm4_1") return difference_campaign(cfg);
    throw ConfigError("no spot check for '" + cfg.id + "'");
}

HardyReport hardy_spot_check(double nu, int k, double p, std::size_t atoms, std::uint64_t seed, const HardyOptions& opts) {
    check_hardy_args(nu, k, p, atoms);
    SplitMix64 rng(seed);
    std::vector<AtomDraw> draws;
    for (std::size_t i = 0; i < atoms; ++i) draws.push_back(draw_atom(rng, opts.center_range, moment_order(1, p)));
    return hardy_with(draws, nu, k, p, opts);
}

nlohmann::json HardyReport::to_json() const {
    return {{"norms", norms},
            {"max", max},
            {"median", median},
            {"ratio", number(ratio)},
            {"uniform", uniform},
            {"worst", {{"index", worst}, {"center", centers.empty() ? Point{} : centers[worst]},
                       {"radius", radii.empty() ? 0.0 : radii[worst]}}}};
}

BmoReport bmo_spot_check(double nu, int k, double s, std::size_t functions, std::uint64_t seed, const BmoOptions& opts) {
    if (!(nu > -0.5) || k < 0 || !(s >= 0.0)) throw DomainError("bmo_spot_check: invalid orders");
    SplitMix64 rng(seed);
    std::vector<CorpusDraw> draws;
    for (std::size_t i = 0; i < functions; ++i) draws.push_back(draw_corpus(rng, i));
    return bmo_with(draws, nu, k, s, opts);
}

nlohmann::json BmoReport::to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (double v : ratios) r.push_back(number(v));
    return {{"ratios", r}, {"skipped", skipped}, {"max", number(max)}, {"median", number(median)}, {"advisory", true}};
}

} // namespace hbr
