#include "hbr/campaign.hpp"

#include "hbr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace hbr {

const std::vector<std::string>& campaign_ids() {
    static const std::vector<std::string> ids{"thm2_1",  "thm2_4",     "thm2_5",        "cor2_6a",
                                              "cor2_6b", "prop2_7",    "prop2_8",       "prop2_9",
                                              "prop2_10", "cor2_11",   "thm1_5_size",   "thm1_5_smooth",
                                              "thm1_6i", "thm1_6ii",   "thm4_1"};
    return ids;
}

namespace {

bool one_dimensional_only(const std::string& id) {
    static const std::set<std::string> ids{"thm2_1",  "thm2_4",  "thm2_5",  "cor2_6a", "cor2_6b", "prop2_7",
                                           "prop2_8", "thm1_6i", "thm1_6ii", "thm4_1"};
    return ids.count(id) > 0;
}

template <class T>
std::vector<T> scalar_or_array(const nlohmann::json& j) {
    if (j.is_array()) return j.get<std::vector<T>>();
    return {j.get<T>()};
}

std::pair<double, double> interval(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be a pair [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

void fill_orders(std::vector<int>& v, std::size_t n, const char* what) {
    if (v.empty()) v.assign(n, 0);
    if (v.size() != n) throw ConfigError(std::string(what) + " needs one entry per axis");
    for (int e : v)
        if (e < 0) throw ConfigError(std::string(what) + " entries must be nonnegative");
}

int total(const std::vector<int>& v) {
    int s = 0;
    for (int e : v) s += e;
    return s;
}

} // namespace

void CampaignConfig::validate() {
    const auto& ids = campaign_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw ConfigError("unknown inequality id '" + id + "'");
    if (nu.empty()) throw ConfigError("nu must be nonempty");
    for (double v : nu)
        if (!(v > -0.5)) throw ConfigError("every nu_j must exceed -1/2");
    const std::size_t n = nu.size();
    if (one_dimensional_only(id) && n != 1) throw ConfigError(id + " is one-dimensional");
    fill_orders(k, n, "k");
    fill_orders(ell, n, "ell");
    if (M < 0) throw ConfigError("M must be nonnegative");

    if (id == "thm2_5" || id == "prop2_10") {
        if (variant.empty()) variant = "x";
        if (variant != "x" && variant != "y") throw ConfigError(id + ": variant must be \"x\" or \"y\"");
    } else if (id == "cor2_11") {
        if (variant.empty()) variant = "a";
        if (variant != "a" && variant != "b") throw ConfigError("cor2_11: variant must be \"a\" or \"b\"");
    } else if (!variant.empty()) {
        throw ConfigError(id + " takes no variant");
    }
    if ((id == "thm1_5_size" || id == "thm1_5_smooth" || id == "prop2_8" || id == "thm4_1") && total(k) < 1)
        throw ConfigError(id + " needs |k| >= 1");

    if (samples < 100) throw ConfigError("sample counts must be at least 100");
    if (refinement_levels < 2) throw ConfigError("at least two refinement levels are required");
    if (refinement_levels > 12) throw ConfigError("more than 12 refinement levels is not supported");
    if (c_grid.empty()) throw ConfigError("c_grid must be nonempty");
    for (double c : c_grid)
        if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("c_grid entries must be positive");
    if (!(t_range.first > 0.0) || !(t_range.second > t_range.first)) throw ConfigError("t_range needs 0 < lo < hi");

    if (box.empty()) box.assign(n, {1e-2, 20.0});
    if (box.size() == 1 && n > 1) box.assign(n, box.front());
    if (box.size() != n) throw ConfigError("box needs one interval per axis");
    for (const auto& [lo, hi] : box)
        if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("box intervals need 0 < lo < hi");

    plan.validate();
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(min_separation > 0.0) || !(min_separation < 1.0)) throw ConfigError("min_separation must lie in (0, 1)");
    if (id == "thm1_6i") {
        const double gamma = NuVector(nu).gamma_nu();
        const double lo = static_cast<double>(n) / (static_cast<double>(n) + gamma);
        if (!(p > lo) || !(p <= 1.0)) throw ConfigError("thm1_6i: p must lie in (n/(n + gamma_nu), 1]");
    }
    if (!(s >= 0.0)) throw ConfigError("s must be nonnegative");
    if (laplacian_power < 0) throw ConfigError("laplacian_power must be nonnegative");
    if (grid_nodes < 50) throw ConfigError("grid needs at least 50 nodes");
    if (!(grid_range.first > 0.0) || !(grid_range.second > grid_range.first))
        throw ConfigError("grid range needs 0 < lo < hi");
    if (lp_exponents.empty()) throw ConfigError("lp_exponents must be nonempty");
    for (double q : lp_exponents)
        if (!(q > 1.0) || !std::isfinite(q)) throw ConfigError("lp_exponents must lie in (1, inf)");
}

nlohmann::json CampaignConfig::to_json() const {
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& [lo, hi] : box) jb.push_back({lo, hi});
    nlohmann::json j{{"id", id},
                     {"nu", nu},
                     {"k", k},
                     {"ell", ell},
                     {"M", M},
                     {"samples", samples},
                     {"seed", seed},
                     {"c_grid", c_grid},
                     {"refinement_levels", refinement_levels},
                     {"t_range", {t_range.first, t_range.second}},
                     {"box", jb},
                     {"plan", plan.to_json()},
                     {"epsilon", epsilon},
                     {"min_separation", min_separation},
                     {"p", p},
                     {"s", s},
                     {"laplacian_power", laplacian_power},
                     {"grid", {{"nodes", grid_nodes}, {"range", {grid_range.first, grid_range.second}}}},
                     {"lp_exponents", lp_exponents},
                     {"report_runtime", report_runtime}};
    if (!variant.empty()) j["variant"] = variant;
    if (!sweep.empty()) j["sweep"] = sweep;
    return j;
}

CampaignConfig CampaignConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("campaign config must be a JSON object");
    CampaignConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "id") c.id = v.get<std::string>();
            else if (key == "description") (void)v.get<std::string>();
            else if (key == "nu") c.nu = scalar_or_array<double>(v);
            else if (key == "k") c.k = scalar_or_array<int>(v);
            else if (key == "ell") c.ell = scalar_or_array<int>(v);
            else if (key == "M") c.M = v.get<int>();
            else if (key == "variant") c.variant = v.get<std::string>();
            else if (key == "samples") {
                if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("samples must be a nonnegative integer");
                c.samples = v.get<std::size_t>();
            } else if (key == "seed") {
                if (!v.is_number_integer()) throw ConfigError("seed must be an unsigned 64-bit integer");
                c.seed = v.get<std::uint64_t>();
            } else if (key == "c_grid") c.c_grid = v.get<std::vector<double>>();
            else if (key == "refinement_levels") c.refinement_levels = v.get<int>();
            else if (key == "t_range") c.t_range = interval(v, "t_range");
            else if (key == "box") {
                c.box.clear();
                if (v.is_array() && !v.empty() && v[0].is_number()) c.box.push_back(interval(v, "box"));
                else
                    for (const auto& b : v) c.box.push_back(interval(b, "box"));
            } else if (key == "plan") c.plan = SubordinationPlan::from_json(v);
            else if (key == "epsilon") c.epsilon = v.get<double>();
            else if (key == "min_separation") c.min_separation = v.get<double>();
            else if (key == "p") c.p = v.get<double>();
            else if (key == "s") c.s = v.get<double>();
            else if (key == "laplacian_power") c.laplacian_power = v.get<int>();
            else if (key == "grid") {
                for (const auto& [gk, gv] : v.items()) {
                    if (gk == "nodes") c.grid_nodes = gv.get<std::size_t>();
                    else if (gk == "range") c.grid_range = interval(gv, "grid.range");
                    else throw ConfigError("unknown grid key '" + gk + "'");
                }
            } else if (key == "lp_exponents") c.lp_exponents = scalar_or_array<double>(v);
            else if (key == "report_runtime") c.report_runtime = v.get<bool>();
            else if (key == "sweep") c.sweep = v;
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed campaign config: ") + e.what());
    }
    if (c.id.empty()) throw ConfigError("campaign config needs an id");
    c.source = j;
    c.source.erase("sweep");
    if (!c.sweep.is_array()) throw ConfigError("sweep must be an array of objects");
    if (c.sweep.empty()) {
        c.validate();
        return c;
    }
    // The base alone may be incomplete; every merged part must validate.
    for (const auto& part : c.sweep) {
        if (!part.is_object()) throw ConfigError("sweep must be an array of objects");
        if (part.contains("sweep")) throw ConfigError("sweeps cannot nest");
        if (part.contains("id") && part["id"] != c.source["id"]) throw ConfigError("sweep entries cannot change the id");
        nlohmann::json merged = c.source;
        merged.update(part);
        (void)from_json(merged);
    }
    return c;
}

CampaignConfig CampaignConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

} // namespace hbr
