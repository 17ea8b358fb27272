#include "doctest.h"

#include "hbr/campaign.hpp"
#include "hbr/errors.hpp"
#include "hbr/rng.hpp"
#include "hbr/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace hbr;
using nlohmann::json;

namespace {

CampaignConfig small(const std::string& id, json extra = json::object()) {
    json j = {{"id", id}, {"samples", 200}, {"seed", 5}, {"refinement_levels", 2}};
    j.update(extra);
    return CampaignConfig::from_json(j);
}

} // namespace

TEST_CASE("SplitMix64 reference stream") {
    SplitMix64 r(0);
    CHECK(r.next() == 0xe220a8397b1dcdafull);
    CHECK(r.next() == 0x6e789e6aa1b965f4ull);
    CHECK(r.next() == 0x06c45d188009454full);

    SplitMix64 a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double v = b.log_uniform(1e-3, 1e2);
        CHECK(v >= 1e-3);
        CHECK(v <= 1e2);
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_1"}, {"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "nope"}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_1"}, {"samples", 10}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_1"}, {"samples", "many"}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_1"}, {"variant", "x"}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_1"}, {"nu", {0.3, 1.0}}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm1_5_size"}, {"k", 0}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm1_6i"}, {"nu", 1.0}, {"k", 1}, {"p", 0.2}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_1"}, {"refinement_levels", 1}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::load("/nonexistent/config.json"), ConfigError);

    // A part may not change the id or nest another sweep.
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_4"}, {"sweep", {{{"id", "thm2_1"}}}}}), ConfigError);
    CHECK_THROWS_AS(CampaignConfig::from_json({{"id", "thm2_4"}, {"sweep", {{{"sweep", json::array()}}}}}),
                    ConfigError);

    const auto c = CampaignConfig::from_json({{"id", "prop2_9"}, {"nu", {0.3, 1.2}}, {"ell", {1, 0}}});
    CHECK(c.dim() == 2);
    CHECK(c.k == std::vector<int>{0, 0});
    REQUIRE(c.box.size() == 2);
    CHECK(c.box[1].first == doctest::Approx(1e-2));
    CHECK(c.box[1].second == doctest::Approx(20.0));
    CHECK(CampaignConfig::from_json({{"id", "thm2_5"}}).variant == "x");
    CHECK(CampaignConfig::from_json({{"id", "cor2_11"}, {"nu", {0.3, 1.2}}, {"k", {1, 0}}}).variant == "a");

    // to_json round trip
    const auto back = CampaignConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
}

TEST_CASE("verdict ordering") {
    CHECK(worse(Verdict::stable, Verdict::advisory) == Verdict::advisory);
    CHECK(worse(Verdict::advisory, Verdict::unstable) == Verdict::unstable);
    CHECK(worse(Verdict::violated, Verdict::unstable) == Verdict::violated);
    CHECK(to_string(Verdict::stable) == "stable");
    CHECK(to_string(Verdict::violated) == "violated");
}

TEST_CASE("sample records serialise NaN as null and omit the polish flag when unset") {
    SampleRecord r;
    r.t = NAN;
    r.x = {1.0};
    r.y = {2.0};
    const json j = r.to_json();
    CHECK(j["t"].is_null());
    CHECK_FALSE(j.contains("polished"));
    r.polished = true;
    CHECK(r.to_json()["polished"] == true);
}

TEST_CASE("campaigns are deterministic and the local search never lowers C") {
    const auto cfg = small("thm2_4", {{"ell", 2}});
    const BoundReport a = run_campaign(cfg);
    const BoundReport b = run_campaign(cfg);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.verdict == Verdict::stable);
    CHECK(a.C_levels.size() == 2);
    CHECK(a.samples_per_level == std::vector<std::size_t>{200, 400});
    for (const auto& row : a.fit) {
        for (std::size_t l = 0; l < row["C"].size(); ++l) {
            // Unbounded columns serialise C as "inf".
            if (row["C"][l].is_string()) continue;
            REQUIRE(row["C_sampled"][l].is_number());
            CHECK(row["C"][l].get<double>() >= row["C_sampled"][l].get<double>());
        }
    }

    const BoundReport other = run_campaign(small("thm2_4", {{"ell", 2}, {"seed", 6}}));
    CHECK(other.to_json().dump() != a.to_json().dump());
}

TEST_CASE("sweeps run every part and report the worst verdict") {
    const auto cfg = small("thm2_4", {{"sweep", {{{"ell", 1}}, {{"ell", 3}}}}});
    const BoundReport r = run_campaign(cfg);
    REQUIRE(r.parts.size() == 2);
    CHECK(r.parts[0].params["ell"] == json::array({1}));
    CHECK(r.parts[1].params["ell"] == json::array({3}));
    Verdict v = Verdict::stable;
    for (const auto& p : r.parts) v = worse(v, p.verdict);
    CHECK(r.verdict == v);
}

TEST_CASE("CSV layout") {
    const BoundReport r = run_campaign(small("thm2_1"));
    std::ostringstream os;
    r.write_csv(os);
    const std::string s = os.str();
    CHECK(s.rfind("t,x1,y1,lhs,rhs,ratio\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(r.samples.size() + 1));

    const BoundReport r2 = run_campaign(small("prop2_9", {{"nu", {0.3, 1.2}}, {"ell", {1, 0}}}));
    std::ostringstream os2;
    r2.write_csv(os2);
    CHECK(os2.str().rfind("t,x1,x2,y1,y2,lhs,rhs,ratio\n", 0) == 0);
}

TEST_CASE("difference bound uses the three-region right-hand side") {
    const double eps = 0.5;
    const BoundReport r = run_campaign(small("prop2_8", {{"nu", 0.6}, {"k", 1}, {"samples", 100}, {"epsilon", eps}}));
    REQUIRE_FALSE(r.samples.empty());
    for (const auto& s : r.samples) {
        const double x = s.x[0], y = s.y[0];
        double rhs;
        if (x >= 2.0 * y) rhs = 1.0 / x;
        else if (y >= 2.0 * x) rhs = 1.0 / y;
        else rhs = 1.0 / x + std::pow(x / std::abs(x - y), eps) / x;
        CHECK(s.rhs == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(std::isnan(s.t));
    }
}

TEST_CASE("absolute difference integral dominates the signed kernel") {
    SubordinationPlan plan;
    SplitMix64 rng(3);
    for (int k = 1; k <= 2; ++k) {
        for (int i = 0; i < 10; ++i) {
            const double x = rng.log_uniform(0.05, 10.0);
            const double y = x * rng.log_uniform(0.3, 3.0);
            const double abs_int = difference_abs_integral(0.6, k, x, y, plan).value;
            const double signed_k = riesz_difference_kernel(NuVector({0.6}), MultiIndex({k}), 0, Point{x}, Point{y}, plan);
            CHECK(abs_int >= std::abs(signed_k) * gamma_fn(0.5 * k) * (1.0 - 1e-8));
        }
    }
}

TEST_CASE("Hardy spot check on the identity and the Riesz transform") {
    HardyOptions opts;
    opts.grid_nodes = 200;
    const HardyReport id = hardy_spot_check(1.0, 0, 1.0, 8, 4, opts);
    CHECK(id.norms.size() == 8);
    CHECK(id.uniform);
    CHECK(id.ratio == doctest::Approx(id.max / id.median));
    const HardyReport r = hardy_spot_check(1.0, 1, 1.0, 8, 4, opts);
    CHECK(r.centers == id.centers);
    CHECK(r.radii == id.radii);
    CHECK(r.max > 0.0);
    CHECK_THROWS_AS(hardy_spot_check(1.0, 1, 0.2, 8, 4, opts), DomainError);
}

TEST_CASE("BMO spot check reports one ratio per function") {
    BmoOptions opts;
    opts.grid_nodes = 150;
    const BmoReport b = bmo_spot_check(1.0, 1, 0.0, 6, 2, opts);
    CHECK(b.ratios.size() == 6);
    CHECK(b.skipped == 0);
    CHECK(std::isfinite(b.max));
    CHECK(b.max >= b.median);
    CHECK(b.median > 0.0);
}
