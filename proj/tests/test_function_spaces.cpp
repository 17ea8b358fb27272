#include "hbr/errors.hpp"
#include "hbr/function_spaces.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace hbr;

namespace {

const std::string kFixtures = std::string(HBR_SOURCE_DIR) + "/fixtures";

double centred_moment(const GridFunction& f, const Point& c, const std::vector<int>& alpha) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point x = f.grid().node(i);
        double v = f[i] * f.grid().weight(i);
        for (std::size_t j = 0; j < alpha.size(); ++j) v *= std::pow(x[j] - c[j], alpha[j]);
        m += v;
    }
    return m;
}

double l1_norm(const GridFunction& f) { return lp_norm(f, 1.0); }

// max_j ||a2_j||_inf |2^j B|^{1/p} over the a2 pieces of one decomposition
double a2_scaled_size(const Decomposition& d) {
    double worst = 0.0;
    for (std::size_t j = 0; j < d.a2.size(); ++j) {
        double s = 0.0;
        for (const auto& g : d.a2[j]) s = std::max(s, lp_norm(g, INFINITY));
        const double vol = d.ball.scaled(std::ldexp(1.0, static_cast<int>(j))).volume();
        worst = std::max(worst, s * std::pow(vol, 1.0 / d.p));
    }
    return worst;
}

} // namespace

TEST_CASE("critical function and local comparability") {
    CHECK(critical_function({16.0, 32.0, 48.0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(critical_function({8.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(critical_function({1.0, 0.0}), DomainError);

    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::uniform_real_distribution<double> L(std::log(1e-3), std::log(1e3));
    for (int trial = 0; trial < 2000; ++trial) {
        Point x{std::exp(L(gen)), std::exp(L(gen))};
        const double rho = critical_function(x);
        Point y = x;
        double d2 = 0.0;
        do {
            for (std::size_t j = 0; j < 2; ++j) y[j] = x[j] + rho * U(gen);
            d2 = std::pow(y[0] - x[0], 2) + std::pow(y[1] - x[1], 2);
        } while (d2 > rho * rho);
        const double ratio = critical_function(y) / rho;
        CHECK(ratio >= 0.5);
        CHECK(ratio <= 2.0);
    }
}

TEST_CASE("ball volume and multi-indices") {
    CHECK(Ball({1.0}, 0.5).volume() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(Ball({1.0, 1.0}, 2.0).volume() == doctest::Approx(4.0 * std::numbers::pi).epsilon(1e-14));
    CHECK(Ball({1.0, 1.0, 1.0}, 1.0).volume() == doctest::Approx(4.0 / 3.0 * std::numbers::pi).epsilon(1e-14));
    CHECK_THROWS_AS(Ball({-1.0}, 1.0), DomainError);
    CHECK_THROWS_AS(Ball({1.0}, 0.0), DomainError);

    const auto m = multi_indices(2, 2);
    REQUIRE(m.size() == 6);
    CHECK(m[0] == std::vector<int>{0, 0});
    CHECK(m[1] == std::vector<int>{1, 0});
    CHECK(m[2] == std::vector<int>{0, 1});
    CHECK(m[3] == std::vector<int>{2, 0});
    CHECK(multi_indices(3, 3).size() == 20);
    CHECK(multi_indices(1, 4).size() == 5);

    CHECK(moment_order(1, 1.0) == 0);
    CHECK(moment_order(2, 0.5) == 2);
    CHECK(moment_order(1, 0.4) == 1);
    CHECK(moment_order(3, 0.75) == 1);
}

TEST_CASE("bundled atom fixtures carry the expected verdicts") {
    int seen = 0;
    for (const auto& entry : std::filesystem::directory_iterator(kFixtures)) {
        if (entry.path().extension() != ".json") continue;
        const auto a = AtomFixture::load(entry.path().string());
        REQUIRE(a.expected_valid.has_value());
        const auto verdict = check_atom(a);
        INFO(entry.path().filename().string() << ": " << verdict.dump());
        CHECK(verdict.at("valid").get<bool>() == *a.expected_valid);
        ++seen;
    }
    CHECK(seen == 6);

    const auto crit = AtomFixture::load(kFixtures + "/p_rho_valid_critical.json");
    auto v = validate_p_rho_atom({crit.f, *crit.ball, crit.p}, *crit.nu);
    CHECK(v.valid());
    CHECK_FALSE(v.cancellation_required);
    CHECK_FALSE(v.cancellation);

    const auto mean = AtomFixture::load(kFixtures + "/p_rho_invalid_mean.json");
    v = validate_p_rho_atom({mean.f, *mean.ball, mean.p}, *mean.nu);
    CHECK(v.support);
    CHECK(v.size);
    CHECK(v.cancellation_required);
    CHECK_FALSE(v.cancellation);

    const auto size = AtomFixture::load(kFixtures + "/p_rho_invalid_size.json");
    v = validate_p_rho_atom({size.f, *size.ball, size.p}, *size.nu);
    CHECK(v.support);
    CHECK_FALSE(v.size);
    CHECK(v.sup_norm == doctest::Approx(2.0 * v.size_bound).epsilon(1e-12));

    const auto fa = AtomFixture::load(kFixtures + "/f_atom_a_valid.json");
    CHECK(validate_f_atom(fa.f).type_a);
    const auto haar = AtomFixture::load(kFixtures + "/f_atom_haar_valid.json");
    CHECK(validate_f_atom(haar.f).type_b); // inferred interval agrees with (1, 2)
    CHECK(validate_f_atom(haar.f, &*haar.interval).type_b);

    CHECK_THROWS_AS(AtomFixture::load(kFixtures + "/missing.json"), ConfigError);
}

TEST_CASE("p-rho atom validation is scale-equivariant and normalised") {
    const NuVector nu = NuVector::uniform(1, 0.5);
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> L(std::log(0.05), std::log(50.0));
    std::uniform_real_distribution<double> F(0.05, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const double x0 = std::exp(L(gen));
        const double rho = critical_function({x0});
        const double r = F(gen) * rho;
        const Grid g = Grid::uniform({{x0 - 1.5 * r, x0 + 1.5 * r}}, 601);
        // Odd bump: zero mean, |a| <= |B|^{-1}.
        const double vol = 2.0 * r;
        const auto a = GridFunction::sample(g, [&](const Point& x) {
            const double u = (x[0] - x0) / r;
            return std::abs(u) < 1.0 ? 2.5 * u * std::pow(1.0 - u * u, 2) / vol : 0.0;
        });
        for (double p : {1.0, 0.8}) {
            const auto v = validate_p_rho_atom({a, Ball({x0}, r), p}, nu);
            INFO("x0=" << x0 << " r=" << r << " p=" << p << " " << v.to_json().dump());
            CHECK(v.p_admissible);
            CHECK(v.cancellation);
            if (p == 1.0) {
                CHECK(v.valid());
                CHECK(l1_norm(a) <= std::pow(vol, 1.0 - 1.0 / p) * (1.0 + 1e-12));
            }
        }
    }
    // p below n/(n + gamma)
    const Grid g = Grid::uniform({{7.0, 9.0}}, 101);
    const auto zero = GridFunction::zeros(g);
    CHECK_FALSE(validate_p_rho_atom({zero, Ball({8.0}, 0.25), 0.4}, nu).p_admissible);

    // support
    const auto wide = GridFunction::sample(g, [](const Point& x) { return std::abs(x[0] - 8.0) < 0.5 ? 0.1 : 0.0; });
    CHECK_FALSE(validate_p_rho_atom({wide, Ball({8.0}, 0.25), 1.0}, nu).support);

    // restricted convention rejects r > rho(x_0)
    const auto small = GridFunction::sample(g, [](const Point& x) { return std::abs(x[0] - 8.0) < 0.5 ? 0.5 : 0.0; });
    CHECK(validate_p_rho_atom({small, Ball({8.0}, 0.9), 1.0}, nu).valid());
    CHECK_FALSE(validate_p_rho_atom({small, Ball({8.0}, 0.9), 1.0}, nu, {true}).valid());
}

TEST_CASE("F-atoms") {
    const Grid g = Grid::uniform({{0.01, 3.0}}, 300);
    const auto ind = GridFunction::sample(g, [](const Point& x) { return x[0] < 0.5 ? 2.0 : 0.0; });
    const auto va = validate_f_atom(ind);
    CHECK(va.type_a);
    CHECK(va.valid());

    const auto bad_height = GridFunction::sample(g, [](const Point& x) { return x[0] < 0.5 ? 3.0 : 0.0; });
    CHECK_FALSE(validate_f_atom(bad_height).type_a);

    const std::pair<double, double> I{1.0, 2.0};
    const Grid h = Grid::uniform({{0.505, 2.495}}, 200);
    const auto haar = GridFunction::sample(h, [](const Point& x) {
        if (x[0] > 1.0 && x[0] < 1.5) return 1.0;
        if (x[0] > 1.5 && x[0] < 2.0) return -1.0;
        return 0.0;
    });
    CHECK(validate_f_atom(haar, &I).type_b);
    CHECK_FALSE(validate_f_atom(haar, &I).type_a);
    const auto tall = haar * 1.5;
    CHECK_FALSE(validate_f_atom(tall, &I).valid());
    const std::pair<double, double> J{1.2, 2.0};
    CHECK_FALSE(validate_f_atom(haar, &J).valid());

    CHECK_THROWS_AS(validate_f_atom(GridFunction::zeros(Grid::uniform({{1.0, 2.0}, {1.0, 2.0}}, 5))), DomainError);
}

TEST_CASE("minimizing polynomial") {
    const Grid g2 = Grid::uniform({{1.0, 5.0}, {1.0, 5.0}}, 81);
    const Ball b({3.0, 3.2}, 0.6);

    SUBCASE("M = 0 is the mean over B") {
        const auto f = GridFunction::sample(g2, [](const Point& x) { return std::sin(x[0]) * x[1]; });
        const auto P = minimizing_polynomial(f, b, 0);
        double s = 0.0, m = 0.0;
        for (std::size_t i : nodes_in_shell(g2, b.center, -1.0, b.radius)) {
            s += g2.weight(i) * f[i];
            m += g2.weight(i);
        }
        CHECK(P.coef.size() == 1);
        CHECK(P.coef[0] == doctest::Approx(s / m).epsilon(1e-13));
    }

    SUBCASE("polynomials are reproduced") {
        // Q = 1.5 - 2 (x - c_1) + 0.5 (x - c_1)(x - c_2) + 3 (x - c_2)^2
        auto Q = [&](const Point& x) {
            const double u = x[0] - b.center[0], v = x[1] - b.center[1];
            return 1.5 - 2.0 * u + 0.5 * u * v + 3.0 * v * v;
        };
        const auto f = GridFunction::sample(g2, Q);
        const auto P = minimizing_polynomial(f, b, 2);
        const auto c = P.centred_coefficients();
        // graded order: 1, u, v, u^2, uv, v^2
        const std::vector<double> want{1.5, -2.0, 0.0, 0.0, 0.5, 3.0};
        for (std::size_t k = 0; k < want.size(); ++k) CHECK(c[k] == doctest::Approx(want[k]).epsilon(1e-10).scale(1.0));
    }

    SUBCASE("random data: residual moments and idempotence") {
        std::mt19937_64 gen(5);
        std::normal_distribution<double> N(0.0, 1.0);
        std::vector<double> vals(g2.size());
        for (double& v : vals) v = N(gen);
        const GridFunction f(g2, vals);
        ProjectionInfo info;
        const auto P = minimizing_polynomial(f, b, 2, &info);
        CHECK(info.residual <= 1e-10);
        CHECK(info.nodes > 6);
        CHECK_FALSE(info.clipped);
        // project g - P + P
        const auto Pf = GridFunction::sample(g2, [&](const Point& x) { return P(x); });
        const auto again = minimizing_polynomial(f - Pf + Pf, b, 2);
        for (std::size_t k = 0; k < P.coef.size(); ++k) CHECK(std::abs(again.coef[k] - P.coef[k]) <= 1e-10);
        // the projection of P itself is P
        const auto fixed = minimizing_polynomial(Pf, b, 2);
        for (std::size_t k = 0; k < P.coef.size(); ++k) CHECK(std::abs(fixed.coef[k] - P.coef[k]) <= 1e-10);
    }

    SUBCASE("under-resolved balls are rejected") {
        const auto f = GridFunction::zeros(g2);
        CHECK_THROWS_AS(minimizing_polynomial(f, Ball({3.0, 3.0}, 0.04), 2), NumericalError);
    }
}

TEST_CASE("BMO estimates") {
    const Grid g = Grid::uniform({{16.0, 48.0}}, 801);
    BallSampler small;
    small.small_only = true;

    SUBCASE("polynomials vanish on small balls, constants count on large ones") {
        const auto q = GridFunction::sample(g, [](const Point& x) { return 2.0 - 0.3 * x[0] + 0.01 * x[0] * x[0]; });
        const auto e = bmo_estimate(q, 1.5, 2, small);
        CHECK(e.small_balls > 100);
        CHECK(e.large_balls == 0);
        CHECK(e.value <= 1e-9);

        const auto one = GridFunction::sample(g, [](const Point&) { return 1.0; });
        CHECK(bmo_norm(one, 0.0, 0, small) <= 1e-12);
        BallSampler all;
        const auto both = bmo_estimate(one, 0.0, 0, all);
        CHECK(both.large_balls > 0);
        CHECK(both.value == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(both.clipped > 0);
    }

    SUBCASE("first branch is invariant under adding polynomials") {
        const auto f = GridFunction::sample(g, [](const Point& x) { return std::sin(0.7 * x[0]) + std::log(x[0]); });
        const auto fq = GridFunction::sample(g, [](const Point& x) {
            return std::sin(0.7 * x[0]) + std::log(x[0]) + 5.0 - 0.2 * x[0];
        });
        CHECK(std::abs(bmo_norm(f, 0.5, 1, small) - bmo_norm(fq, 0.5, 1, small)) <= 1e-9);
    }

    SUBCASE("log of the smallest coordinate is stable under refinement") {
        const Grid gl = Grid::logarithmic({{0.01, 10.0}}, 1200);
        const auto f = GridFunction::sample(gl, [](const Point& x) { return std::log(x[0]); });
        BallSampler s;
        const double v1 = bmo_norm(f, 0.0, 0, s);
        const double v2 = bmo_norm(f, 0.0, 0, s.refined());
        INFO(v1 << " " << v2);
        CHECK(std::isfinite(v1));
        CHECK(std::abs(v2 - v1) <= 0.1 * v1);
    }

    CHECK_THROWS_AS(bmo_norm(GridFunction::zeros(g), 2.5, 1, small), DomainError);
}

TEST_CASE("Vitali covering") {
    for (std::size_t n_axis : {40u, 80u, 160u}) {
        const Grid g = Grid::uniform({{0.5, 6.0}, {1.0, 4.0}}, n_axis);
        const auto cov = vitali_covering({{0.8, 5.5}, {1.2, 3.6}}, g);
        INFO(cov.to_json().dump());
        CHECK(cov.size() > 0);
        CHECK(cov.covers_box());
        CHECK(cov.fifth_balls_disjoint());
        CHECK(cov.partition_error() <= 1e-12);
        // disjoint rho/5 balls inside a ball of radius 6 rho/5: at most 6^n
        CHECK(cov.max_overlap() <= 36);

        // psi_i: support in the ball, values in [0, 1]
        for (std::size_t k = 0; k < cov.size(); k += 7) {
            const auto psi = cov.psi(k);
            for (std::size_t i = 0; i < psi.size(); ++i) {
                CHECK(psi[i] >= 0.0);
                CHECK(psi[i] <= 1.0);
                if (psi[i] > 0.0) CHECK(Ball(cov.centers[k], cov.radii[k]).contains(g.node(i), 1e-12));
            }
        }
        for (std::size_t k = 0; k < cov.size(); ++k)
            CHECK(cov.radii[k] == doctest::Approx(critical_function(cov.centers[k])).epsilon(1e-15));
    }

    // The overlap count does not grow with refinement in one dimension either.
    int prev = 0;
    for (std::size_t n_axis : {500u, 1000u, 2000u}) {
        const Grid g = Grid::logarithmic({{0.05, 50.0}}, n_axis);
        const auto cov = vitali_covering({{0.1, 40.0}}, g);
        CHECK(cov.covers_box());
        CHECK(cov.fifth_balls_disjoint());
        CHECK(cov.partition_error() <= 1e-12);
        if (prev > 0) CHECK(cov.max_overlap() <= prev + 1);
        prev = cov.max_overlap();
    }

    const Grid g = Grid::uniform({{0.5, 2.0}}, 50);
    CHECK_THROWS_AS(vitali_covering({{0.0, 1.0}}, g), DomainError);
    CHECK_THROWS_AS(vitali_covering({{1.0, 1.0}}, g), DomainError);
}

TEST_CASE("dual-basis decomposition of Laplacian atoms") {
    const double xB = 4.0;
    const double rho = critical_function({xB});

    SUBCASE("n = 1, p = 1") {
        const double r = rho / 16.0;
        const Grid g = Grid::uniform({{xB - 1.2 * rho, xB + 1.2 * rho}}, 3001);
        const auto a = laplacian_bump_atom(1.0, xB, r, 1.0, g);
        const auto d = atom_dual_decompose({a, Ball({xB}, r), 1.0});
        CHECK(d.omega == 0);
        CHECK(d.j0 == 4);
        CHECK(d.a2.size() == 3);
        CHECK(d.a3.size() == 1);
        CHECK(d.reconstruction_residual <= 1e-10);
        CHECK(d.a1_moment_residual <= 1e-10);
        for (const auto& c : d.annuli) {
            CHECK(c.dual_residual <= 1e-10);
            CHECK(c.dual_sup[0] == doctest::Approx(1.0).epsilon(1e-12));
        }
        for (std::size_t i = 0; i < g.size(); ++i)
            if (d.a1[i] != 0.0) CHECK(std::abs(g.node(i)[0] - xB) <= r * (1 + 1e-12));
        // a2 pieces are mean zero
        for (const auto& row : d.a2) CHECK(std::abs(centred_moment(row[0], {xB}, {0})) <= 1e-10 * l1_norm(a));
        CHECK(d.certificates().at("j0") == 4);
    }

    SUBCASE("n = 1, p = 0.4 needs linear moments") {
        const double r = rho / 8.0;
        const Grid g = Grid::uniform({{xB - 1.2 * rho, xB + 1.2 * rho}}, 2001);
        const auto a = laplacian_bump_atom(1.0, xB, r, 0.4, g);
        const auto d = atom_dual_decompose({a, Ball({xB}, r), 0.4});
        CHECK(d.omega == 1);
        CHECK(d.reconstruction_residual <= 1e-10 * lp_norm(a, INFINITY));
        CHECK(d.a1_moment_residual <= 1e-10);
        for (const auto& c : d.annuli) {
            CHECK(c.dual_residual <= 1e-10);
            for (double s : c.dual_sup) CHECK(s <= 20.0);
        }
        for (const auto& row : d.a2)
            for (const auto& alpha : d.alphas)
                CHECK(std::abs(centred_moment(row[0], {xB}, alpha)) <= 1e-9 * l1_norm(a) * std::pow(r, alpha[0]));
    }

    SUBCASE("n = 2, p = 1/2 uses the full quadratic dual basis") {
        const double r = rho / 4.0;
        const Grid g = Grid::uniform({{xB - 0.7 * rho, xB + 0.7 * rho}, {xB + 0.1 - 0.7 * rho, xB + 0.1 + 0.7 * rho}}, 161);
        const Point c{xB, xB + 0.1};
        const auto a = GridFunction::sample(g, [&](const Point& x) {
            const double u = std::hypot(x[0] - c[0], x[1] - c[1]) / r;
            return u < 1.0 ? (1.0 + x[0] - x[1] * x[1]) * std::pow(1.0 - u * u, 3) : 0.0;
        });
        const auto d = atom_dual_decompose({a, Ball(c, r), 0.5});
        CHECK(d.omega == 2);
        CHECK(d.alphas.size() == 6);
        CHECK(d.j0 == 2);
        CHECK(d.reconstruction_residual <= 1e-10 * lp_norm(a, INFINITY));
        CHECK(d.a1_moment_residual <= 1e-10);
        for (const auto& cert : d.annuli) {
            CHECK(cert.dual_residual <= 1e-10);
            CHECK(cert.gram_condition < 1e4);
        }
    }

    SUBCASE("scale family decay of the a2 pieces") {
        // max_j ||a2_j|| |2^j B| for r_J = rho 2^{-J} scales like 2^{-2J} (N = 1).
        // From J = 3 on every atom has a2 pieces beyond j = 0.
        std::vector<double> J, logq;
        for (int k = 3; k <= 6; ++k) {
            const double r = std::ldexp(rho, -k);
            const std::size_t nodes = static_cast<std::size_t>(2.4 * rho / (r / 200.0)) + 1;
            const Grid g = Grid::uniform({{xB - 1.2 * rho, xB + 1.2 * rho}}, nodes);
            const auto d = atom_dual_decompose({laplacian_bump_atom(1.0, xB, r, 1.0, g), Ball({xB}, r), 1.0});
            CHECK(d.j0 == k);
            J.push_back(k);
            logq.push_back(std::log2(a2_scaled_size(d)));
        }
        double mj = 0, mq = 0;
        for (std::size_t i = 0; i < J.size(); ++i) {
            mj += J[i] / J.size();
            mq += logq[i] / J.size();
        }
        double num = 0, den = 0;
        for (std::size_t i = 0; i < J.size(); ++i) {
            num += (J[i] - mj) * (logq[i] - mq);
            den += (J[i] - mj) * (J[i] - mj);
        }
        const double slope = num / den;
        INFO("slope " << slope);
        CHECK(slope <= -1.9);
    }

    SUBCASE("edge cases") {
        const Grid g = Grid::uniform({{3.5, 4.5}}, 401);
        // r >= rho: nothing to split
        const auto a = laplacian_bump_atom(1.0, xB, 0.3, 1.0, g);
        const auto d = atom_dual_decompose({a, Ball({xB}, 0.3), 1.0});
        CHECK(d.j0 == 0);
        CHECK(d.a2.empty());
        CHECK(d.a3.empty());
        // annuli beyond the grid
        const Grid tight = Grid::uniform({{3.95, 4.05}}, 401);
        const auto b = laplacian_bump_atom(1.0, xB, 0.02, 1.0, tight);
        CHECK_THROWS_AS(atom_dual_decompose({b, Ball({xB}, 0.02), 1.0}), NumericalError);
        // too few nodes per annulus
        const Grid coarse = Grid::uniform({{3.5, 4.5}}, 21);
        const auto c = laplacian_bump_atom(1.0, xB, 0.01, 1.0, coarse);
        CHECK_THROWS_AS(atom_dual_decompose({c, Ball({xB}, 0.01), 1.0}), NumericalError);
    }
}
