#pragma once

#include "hbr/grid.hpp"
#include "hbr/heat_kernel.hpp"

#include "json.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hbr {

struct Ball {
    Point center;
    double radius;
    Ball(Point c, double r);
    std::size_t dim() const { return center.size(); }
    /// Lebesgue measure of the Euclidean ball.
    double volume() const;
    bool contains(const Point& x, double slack = 0.0) const;
    Ball scaled(double factor) const { return Ball(center, radius * factor); }
};

/// Flat indices of grid nodes with inner < |x - c| <= outer.
std::vector<std::size_t> nodes_in_shell(const Grid& grid, const Point& c, double inner, double outer);

/// Sum of grid weights over B. Also reports whether B leaves the grid box.
double discrete_measure(const Grid& grid, const Ball& b, bool* clipped = nullptr);

// ---------------------------------------------------------------------------
// Atoms

struct AtomCandidate {
    GridFunction f;
    Ball ball;
    double p;
};

/// floor(n (1/p - 1)), the highest moment order an atom must cancel.
int moment_order(std::size_t n, double p);

struct AtomVerdict {
    bool p_admissible = false;
    bool support = false;
    bool size = false;
    bool cancellation = false;
    /// Cancellation is required only for r < rho(x_0).
    bool cancellation_required = false;
    /// Under the restricted convention every atom also needs r <= rho(x_0).
    bool radius_ok = true;
    double sup_norm = 0.0;
    double size_bound = 0.0;
    std::vector<double> moments; // centred moments, graded order
    double moment_tolerance = 0.0;
    std::vector<std::string> failures;
    bool valid() const { return failures.empty(); }
    nlohmann::json to_json() const;
};

struct AtomOptions {
    /// Remark-style convention: only balls with r <= rho(x_0).
    bool restricted = false;
};

AtomVerdict validate_p_rho_atom(const AtomCandidate& a, const NuVector& nu, const AtomOptions& opts = {});

struct FAtomVerdict {
    bool type_a = false;
    bool type_b = false;
    double mean = 0.0;
    double sup_norm = 0.0;
    std::pair<double, double> interval{0.0, 0.0};
    std::vector<std::string> notes;
    bool valid() const { return type_a || type_b; }
    nlohmann::json to_json() const;
};

/// One-dimensional F-atoms. Without an explicit interval the support hull
/// widened by half a cell on each side is used.
FAtomVerdict validate_f_atom(const GridFunction& a, const std::pair<double, double>* interval = nullptr);

/// Atom candidate stored as JSON: grid, values, label, kind ("p_rho" or
/// "f_atom"), and for p_rho also ball, p and nu. An optional interval fixes
/// I for F-atoms; expected_valid records the intended verdict.
struct AtomFixture {
    std::string label;
    std::string kind;
    GridFunction f;
    std::optional<Ball> ball;
    double p = 1.0;
    std::optional<NuVector> nu;
    std::optional<std::pair<double, double>> interval;
    std::optional<bool> expected_valid;
    bool restricted = false;

    static AtomFixture from_json(const nlohmann::json& j);
    static AtomFixture load(const std::string& path);
    nlohmann::json to_json() const;
};

/// Runs the validator selected by kind. The result always has "valid".
nlohmann::json check_atom(const AtomFixture& a);

// ---------------------------------------------------------------------------
// Polynomials

/// Multi-indices with |alpha| <= M in graded lexicographic order.
std::vector<std::vector<int>> multi_indices(std::size_t n, int M);

/// sum_alpha c_alpha ((x - center) / scale)^alpha
struct PolyND {
    Point center;
    double scale = 1.0;
    int degree = 0;
    std::vector<std::vector<int>> exponents;
    std::vector<double> coef;

    double operator()(const Point& x) const;
    /// Coefficients of the same polynomial in the unscaled powers (x - center)^alpha.
    std::vector<double> centred_coefficients() const;
};

struct ProjectionInfo {
    double condition = 0.0;
    /// max_alpha |int_B (g - P) u^alpha| / int_B |g|, u = (x - x_B) / r_B
    double residual = 0.0;
    std::size_t nodes = 0;
    bool clipped = false;
};

/// P in P_M with int_B (g - P) x^alpha = 0 for |alpha| <= M.
PolyND minimizing_polynomial(const GridFunction& g, const Ball& b, int M, ProjectionInfo* info = nullptr);

// ---------------------------------------------------------------------------
// BMO

struct BallSampler {
    /// Centres are every stride-th node along each axis. With 0 the stride
    /// is chosen to give about centers_per_axis centres per axis.
    std::size_t center_stride = 0;
    std::size_t centers_per_axis = 24;
    std::size_t radii = 16;
    /// Smallest radius in units of the local grid spacing.
    double min_radius_spacings = 2.0;
    /// Balls larger than this are not generated (0: box diameter).
    double max_radius = 0.0;
    /// Restrict to balls with r < rho(x_B).
    bool small_only = false;
    /// Centres restricted to this box when nonempty.
    std::vector<std::pair<double, double>> center_box;

    std::vector<Ball> balls(const Grid& grid) const;
    BallSampler refined() const;
};

struct BmoEstimate {
    double value = 0.0;
    double small_branch = 0.0;
    double large_branch = 0.0;
    std::size_t small_balls = 0;
    std::size_t large_balls = 0;
    std::size_t skipped = 0;
    std::size_t clipped = 0;
    Point worst_center;
    double worst_radius = 0.0;
    nlohmann::json to_json() const;
};

BmoEstimate bmo_estimate(const GridFunction& f, double s, int M, const BallSampler& sampler);
double bmo_norm(const GridFunction& f, double s, int M, const BallSampler& sampler);

// ---------------------------------------------------------------------------
// Covering

struct CoveringResult {
    Grid grid;
    std::vector<std::pair<double, double>> box;
    std::vector<Point> centers;
    std::vector<double> radii;
    /// Nodes (flat grid indices) inside the box.
    std::vector<std::size_t> box_nodes;
    /// CSR membership: nodes of ball i are members[offsets[i] .. offsets[i+1]).
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> members;
    /// Number of balls containing each grid node (0 outside the box).
    std::vector<int> counts;

    std::size_t size() const { return centers.size(); }
    /// psi_i = chi_{B_i} / sum_k chi_{B_k} on the box, 0 elsewhere.
    GridFunction psi(std::size_t i) const;
    double partition_error() const;
    bool covers_box() const;
    bool fifth_balls_disjoint() const;
    int max_overlap() const;
    nlohmann::json to_json() const;
};

CoveringResult vitali_covering(const std::vector<std::pair<double, double>>& box, const Grid& grid);

// ---------------------------------------------------------------------------
// Dual-basis decomposition

struct AnnulusCertificate {
    int j = 0;
    std::size_t nodes = 0;
    double measure = 0.0;
    double gram_condition = 0.0;
    /// max |<v_alpha, (x - x_B)^beta> - delta_{alpha beta}|
    double dual_residual = 0.0;
    /// ||v_alpha||_inf (2^j r_B)^{|alpha|}
    std::vector<double> dual_sup;
};

struct Decomposition {
    Ball ball;
    double p = 1.0;
    int omega = 0;
    int j0 = 0;
    std::vector<std::vector<int>> alphas;
    /// int a (x - x_B)^alpha
    std::vector<double> moments;
    GridFunction a1;
    /// a2[j][alpha] for j = 0 .. j0 - 2
    std::vector<std::vector<GridFunction>> a2;
    std::vector<GridFunction> a3;
    std::vector<AnnulusCertificate> annuli;
    double reconstruction_residual = 0.0;
    /// max_alpha |int a1 (x - x_B)^alpha| / (||a||_1 r^|alpha|)
    double a1_moment_residual = 0.0;
    nlohmann::json certificates() const;
};

Decomposition atom_dual_decompose(const AtomCandidate& a);

/// Delta_nu b for the bump b = r^2 |B|^{-1/p} (1 - u^2)^4, u = (x - x_B)/r,
/// sampled on a one-dimensional grid. Supported in B(x_B, r).
GridFunction laplacian_bump_atom(double nu, double x_B, double r, double p, const Grid& grid);

} // namespace hbr
