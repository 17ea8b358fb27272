#include "hbr/function_spaces.hpp"

#include "hbr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace hbr {

namespace {

double dist(const Point& a, const Point& b) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) d2 += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(d2);
}

/// Uniform hash of points into cubes of side `cell`.
class SpatialHash {
public:
    SpatialHash(std::size_t n, double cell) : n_(n), cell_(cell) {}

    void insert(const Point& x, std::size_t id) { cells_[key(cell_of(x))].push_back(id); }

    /// Ids in the 3^n cells around x.
    template <class F>
    void for_neighbours(const Point& x, F&& f) const {
        const auto c = cell_of(x);
        std::vector<long long> d(n_, -1);
        for (;;) {
            std::vector<long long> q(n_);
            for (std::size_t j = 0; j < n_; ++j) q[j] = c[j] + d[j];
            auto it = cells_.find(key(q));
            if (it != cells_.end())
                for (std::size_t id : it->second) f(id);
            std::size_t j = 0;
            while (j < n_ && ++d[j] > 1) d[j++] = -1;
            if (j == n_) return;
        }
    }

private:
    std::vector<long long> cell_of(const Point& x) const {
        std::vector<long long> c(n_);
        for (std::size_t j = 0; j < n_; ++j) c[j] = static_cast<long long>(std::floor(x[j] / cell_));
        return c;
    }
    static std::size_t key(const std::vector<long long>& c) {
        std::size_t h = 1469598103934665603ull;
        for (long long v : c) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
        return h;
    }

    std::size_t n_;
    double cell_;
    std::unordered_map<std::size_t, std::vector<std::size_t>> cells_;
};

} // namespace

CoveringResult vitali_covering(const std::vector<std::pair<double, double>>& box, const Grid& grid) {
    const std::size_t n = grid.dim();
    if (box.size() != n) throw DomainError("vitali_covering: box dimension does not match the grid");
    for (const auto& [lo, hi] : box) {
        if (!(lo > 0.0)) throw DomainError("vitali_covering: box must stay away from the coordinate hyperplanes");
        if (!(hi > lo)) throw DomainError("vitali_covering: empty box");
    }

    CoveringResult res{grid, box, {}, {}, {}, {}, {}, std::vector<int>(grid.size(), 0)};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Point x = grid.node(i);
        bool inside = true;
        for (std::size_t j = 0; j < n && inside; ++j) {
            const double tol = 1e-12 * (box[j].second - box[j].first);
            inside = x[j] >= box[j].first - tol && x[j] <= box[j].second + tol;
        }
        if (inside) res.box_nodes.push_back(i);
    }
    if (res.box_nodes.empty()) throw DomainError("vitali_covering: no grid nodes inside the box");

    // Candidates in order of decreasing rho, ties by flat index.
    std::vector<std::size_t> order = res.box_nodes;
    std::vector<double> rho(grid.size(), 0.0);
    double rho_max = 0.0;
    for (std::size_t i : order) {
        rho[i] = critical_function(grid.node(i));
        rho_max = std::max(rho_max, rho[i]);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rho[a] > rho[b]; });

    // Two 1/5-balls can only meet within distance 2 rho_max / 5.
    SpatialHash hash(n, 0.4 * rho_max);
    for (std::size_t i : order) {
        const Point x = grid.node(i);
        bool free = true;
        hash.for_neighbours(x, [&](std::size_t k) {
            if (free && dist(x, res.centers[k]) <= (rho[i] + res.radii[k]) / 5.0) free = false;
        });
        if (!free) continue;
        hash.insert(x, res.centers.size());
        res.centers.push_back(x);
        res.radii.push_back(rho[i]);
    }

    std::vector<char> in_box(grid.size(), 0);
    for (std::size_t i : res.box_nodes) in_box[i] = 1;
    res.offsets.push_back(0);
    for (std::size_t k = 0; k < res.centers.size(); ++k) {
        for (std::size_t i : nodes_in_shell(grid, res.centers[k], -1.0, res.radii[k])) {
            if (!in_box[i]) continue;
            res.members.push_back(i);
            ++res.counts[i];
        }
        res.offsets.push_back(res.members.size());
    }
    return res;
}

GridFunction CoveringResult::psi(std::size_t k) const {
    if (k >= size()) throw DomainError("covering: ball index out of range");
    GridFunction out = GridFunction::zeros(grid);
    for (std::size_t m = offsets[k]; m < offsets[k + 1]; ++m) {
        const std::size_t i = members[m];
        out.values()[i] = 1.0 / counts[i];
    }
    return out;
}

double CoveringResult::partition_error() const {
    std::vector<double> sum(grid.size(), 0.0);
    for (std::size_t k = 0; k < size(); ++k)
        for (std::size_t m = offsets[k]; m < offsets[k + 1]; ++m) sum[members[m]] += 1.0 / counts[members[m]];
    double err = 0.0;
    for (std::size_t i : box_nodes) err = std::max(err, std::abs(sum[i] - 1.0));
    return err;
}

bool CoveringResult::covers_box() const {
    return std::all_of(box_nodes.begin(), box_nodes.end(), [&](std::size_t i) { return counts[i] > 0; });
}

bool CoveringResult::fifth_balls_disjoint() const {
    // Sweep along the first coordinate; pairs further apart than 2 max(rho)/5
    // there cannot meet.
    std::vector<std::size_t> idx(size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return centers[a][0] < centers[b][0]; });
    const double reach = 0.4 * (radii.empty() ? 0.0 : *std::max_element(radii.begin(), radii.end()));
    for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto& ca = centers[idx[a]];
            const auto& cb = centers[idx[b]];
            if (cb[0] - ca[0] > reach) break;
            if (dist(ca, cb) <= (radii[idx[a]] + radii[idx[b]]) / 5.0) return false;
        }
    }
    return true;
}

int CoveringResult::max_overlap() const {
    int m = 0;
    for (std::size_t i : box_nodes) m = std::max(m, counts[i]);
    return m;
}

nlohmann::json CoveringResult::to_json() const {
    nlohmann::json balls = nlohmann::json::array();
    for (std::size_t k = 0; k < size(); ++k) balls.push_back({{"center", centers[k]}, {"radius", radii[k]}});
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& [lo, hi] : box) jb.push_back({lo, hi});
    return {{"box", jb},
            {"balls", balls},
            {"count", size()},
            {"box_nodes", box_nodes.size()},
            {"covers_box", covers_box()},
            {"fifth_balls_disjoint", fifth_balls_disjoint()},
            {"max_overlap", max_overlap()},
            {"partition_error", partition_error()}};
}

} // namespace hbr
