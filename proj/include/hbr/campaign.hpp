#pragma once

#include "hbr/riesz.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hbr {

/// Inequality ids understood by run_campaign.
const std::vector<std::string>& campaign_ids();

/// One verification campaign. Unset orders default to zero (one entry per
/// axis); the box defaults to [1e-2, 20] on every axis.
struct CampaignConfig {
    std::string id;
    std::vector<double> nu{0.3};
    std::vector<int> k;
    std::vector<int> ell;
    int M = 0;
    /// "x" or "y" for the mixed-derivative bounds, "a" or "b" for the
    /// n-dimensional Laplacian bound.
    std::string variant;
    /// Samples at the coarsest level; level l uses samples << l. For the
    /// spot checks this is the number of atoms or test functions.
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    std::vector<double> c_grid{2.0, 4.0, 8.0, 16.0, 32.0};
    int refinement_levels = 3;
    std::pair<double, double> t_range{1e-4, 1e2};
    std::vector<std::pair<double, double>> box;
    SubordinationPlan plan;
    /// Exponent in the near-diagonal factor of the difference bound.
    double epsilon = 0.5;
    /// Smallest |x - y| relative to max(|x|, |y|) for kernel samples.
    double min_separation = 1e-3;
    /// Spot checks: atom exponent, BMO order, power M in nu' = nu + k + 2M.
    double p = 1.0;
    double s = 0.0;
    int laplacian_power = 1;
    /// Spot checks: nodes and range of the coarsest one-dimensional grid.
    std::size_t grid_nodes = 500;
    std::pair<double, double> grid_range{0.02, 10.0};
    /// Exponents of the L^p ratios in thm4_1.
    std::vector<double> lp_exponents{1.5, 2.0, 3.0};
    bool report_runtime = false;
    /// Partial configs run in turn, each merged over this one.
    nlohmann::json sweep = nlohmann::json::array();
    /// Keys as given, before defaults; sweep entries are merged over these.
    nlohmann::json source = nlohmann::json::object();

    std::size_t dim() const { return nu.size(); }
    /// Checks ranges and fills per-id defaults. Throws ConfigError.
    void validate();
    nlohmann::json to_json() const;
    /// Unknown keys are rejected.
    static CampaignConfig from_json(const nlohmann::json& j);
    static CampaignConfig load(const std::string& path);
};

enum class Verdict { stable, unstable, violated, advisory };

std::string to_string(Verdict v);
/// Severity order used to combine parts: stable < advisory < unstable < violated.
Verdict worse(Verdict a, Verdict b);

struct SampleRecord {
    std::size_t index = 0;
    /// NaN when the inequality has no time variable.
    double t = 0.0;
    Point x;
    Point y;
    /// Second point of a smoothness triple, empty otherwise.
    Point y2;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    /// Found by the local search started at sample `index`.
    bool polished = false;
    nlohmann::json to_json() const;
};

struct BoundReport {
    std::string id;
    nlohmann::json params;
    std::vector<std::size_t> samples_per_level;
    /// C at the selected c for every refinement level.
    std::vector<double> C_levels;
    double C_hat = 0.0;
    /// NaN when the inequality has no Gaussian constant.
    double c_hat = 0.0;
    double drift = 0.0;
    Verdict verdict = Verdict::stable;
    std::optional<SampleRecord> worst;
    /// Per-c table: c, C per level, drift.
    nlohmann::json fit = nlohmann::json::array();
    std::size_t warnings = 0;
    std::vector<std::string> notes;
    nlohmann::json extra = nlohmann::json::object();
    std::vector<BoundReport> parts;
    /// Seconds, negative when not requested.
    double runtime = -1.0;
    /// Finest-level samples at the selected c, for CSV output.
    std::vector<SampleRecord> samples;

    nlohmann::json to_json() const;
    /// Header t,x1..xn,y1..yn,lhs,rhs,ratio; parts are appended in order.
    void write_csv(std::ostream& os) const;
};

/// Deterministic for a given config (including its seed), independent of
/// the thread count.
BoundReport run_campaign(const CampaignConfig& config);

/// thm1_5_size and thm1_5_smooth on the same orders, as one report with
/// two parts.
BoundReport cz_bound_check(const NuVector& nu, const MultiIndex& k, std::size_t samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Desk-scale operator checks (one dimension)

struct HardyOptions {
    /// Nodes and range of the grid carrying the atoms.
    std::size_t grid_nodes = 1000;
    std::pair<double, double> grid_range{0.02, 10.0};
    /// Atom centres are drawn uniformly from this interval.
    std::pair<double, double> center_range{2.0, 6.0};
    /// nu' = nu + k + 2M for the maximal function.
    int laplacian_power = 1;
    SubordinationPlan plan;
    /// Uniformity threshold on max / median.
    double threshold = 10.0;
};

struct HardyReport {
    std::vector<double> norms;
    std::vector<Point> centers;
    std::vector<double> radii;
    double max = 0.0;
    double median = 0.0;
    double ratio = 0.0;
    std::size_t worst = 0;
    bool uniform = false;
    nlohmann::json to_json() const;
};

/// ||M_{Delta_nu'} (R a)||_p^p over random (p, rho)-atoms a, with R the
/// Riesz transform of order k (the identity for k = 0).
HardyReport hardy_spot_check(double nu, int k, double p, std::size_t atoms, std::uint64_t seed,
                             const HardyOptions& opts = {});

struct BmoOptions {
    std::size_t grid_nodes = 500;
    std::pair<double, double> grid_range{0.02, 10.0};
    SubordinationPlan plan;
};

struct BmoReport {
    std::vector<double> ratios;
    /// Functions with zero BMO norm are skipped (0/0).
    std::size_t skipped = 0;
    double max = 0.0;
    double median = 0.0;
    nlohmann::json to_json() const;
};

/// bmo(R f) / bmo(f) over a corpus of bounded compactly supported bumps
/// and steps. Report-only.
BmoReport bmo_spot_check(double nu, int k, double s, std::size_t functions, std::uint64_t seed,
                         const BmoOptions& opts = {});

} // namespace hbr
