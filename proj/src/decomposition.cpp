#include "hbr/function_spaces.hpp"

#include "hbr/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace hbr {

namespace {

double scaled_monomial(const Point& x, const Point& c, double scale, const std::vector<int>& alpha) {
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

/// Dual basis of the monomials on one annulus, sampled on its nodes.
struct AnnulusBasis {
    std::vector<std::size_t> nodes;
    double measure = 0.0;
    /// dual[alpha][m]: v_{j,alpha} at nodes[m], unscaled.
    std::vector<std::vector<double>> dual;
    AnnulusCertificate cert;
};

AnnulusBasis annulus_basis(const Grid& grid, const Ball& ball, int j, const std::vector<std::vector<int>>& alphas) {
    AnnulusBasis out;
    const double r = ball.radius;
    const double outer = std::ldexp(r, j);
    const double inner = j == 0 ? -1.0 : std::ldexp(r, j - 1);
    for (std::size_t d = 0; d < grid.dim(); ++d)
        if (ball.center[d] - outer < grid.axis(d).a || ball.center[d] + outer > grid.axis(d).b)
            throw NumericalError("atom_dual_decompose: annulus S_" + std::to_string(j) + " leaves the grid box");
    out.nodes = nodes_in_shell(grid, ball.center, inner, outer);
    const std::size_t K = alphas.size();
    const std::size_t m = out.nodes.size();
    if (m < 2 * K)
        throw NumericalError("atom_dual_decompose: annulus S_" + std::to_string(j) + " holds only " +
                             std::to_string(m) + " nodes");
    for (std::size_t i : out.nodes) out.measure += grid.weight(i);

    // phi_beta = ((x - x_B) / (2^j r))^beta, averaged inner product on S_j.
    Eigen::MatrixXd phi(m, K);
    Eigen::VectorXd w(m);
    for (std::size_t q = 0; q < m; ++q) {
        const Point x = grid.node(out.nodes[q]);
        w(q) = grid.weight(out.nodes[q]) / out.measure;
        for (std::size_t k = 0; k < K; ++k) phi(q, k) = scaled_monomial(x, ball.center, outer, alphas[k]);
    }
    auto inner_prod = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (w.array() * a.array() * b.array()).sum(); };

    const Eigen::MatrixXd G = phi.transpose() * w.asDiagonal() * phi;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const double ev_min = es.eigenvalues().minCoeff();
    out.cert.j = j;
    out.cert.nodes = m;
    out.cert.measure = out.measure;
    out.cert.gram_condition = ev_min > 0.0 ? es.eigenvalues().maxCoeff() / ev_min : INFINITY;
    if (!(out.cert.gram_condition < 1e12))
        throw NumericalError("atom_dual_decompose: Gram matrix on S_" + std::to_string(j) + " is ill conditioned");

    // Modified Gram-Schmidt with one re-orthogonalisation pass. L holds the
    // coefficients q_k = sum_b L(k, b) phi_b and ends up lower triangular.
    Eigen::MatrixXd Q = phi;
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(K, K);
    for (std::size_t k = 0; k < K; ++k) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < k; ++i) {
                const double c = inner_prod(Q.col(i), Q.col(k));
                Q.col(k) -= c * Q.col(i);
                L.row(k) -= c * L.row(i);
            }
        }
        const double nrm = std::sqrt(inner_prod(Q.col(k), Q.col(k)));
        if (!(nrm > 0.0)) throw NumericalError("atom_dual_decompose: degenerate monomial on annulus");
        Q.col(k) /= nrm;
        L.row(k) /= nrm;
    }
    // With q = L phi orthonormal, G^{-1} = L^T L, and the dual basis of phi is
    // G^{-1} phi = L^T q.
    const Eigen::MatrixXd V = Q * L; // column alpha: dual of phi_alpha on the nodes

    const Eigen::MatrixXd pairing = V.transpose() * w.asDiagonal() * phi;
    out.cert.dual_residual = (pairing - Eigen::MatrixXd::Identity(K, K)).cwiseAbs().maxCoeff();
    out.dual.assign(K, std::vector<double>(m));
    for (std::size_t k = 0; k < K; ++k) {
        // Back to the unscaled monomials (x - x_B)^alpha.
        const double s = std::pow(outer, -order_of(alphas[k]));
        for (std::size_t q = 0; q < m; ++q) out.dual[k][q] = V(q, k) * s;
        out.cert.dual_sup.push_back(V.col(k).cwiseAbs().maxCoeff());
    }
    return out;
}

} // namespace

Decomposition atom_dual_decompose(const AtomCandidate& a) {
    const Grid& grid = a.f.grid();
    const std::size_t n = grid.dim();
    if (a.ball.dim() != n) throw DomainError("atom_dual_decompose: dimension mismatch");

    Decomposition d{a.ball, a.p, moment_order(n, a.p), 0, multi_indices(n, moment_order(n, a.p)), {}, a.f, {}, {}, {}, 0.0, 0.0};
    const double r = a.ball.radius;
    const Point& c = a.ball.center;
    const std::size_t K = d.alphas.size();

    double l1 = 0.0;
    for (std::size_t i = 0; i < a.f.size(); ++i) l1 += grid.weight(i) * std::abs(a.f[i]);
    d.moments.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.f.size(); ++i)
            if (a.f[i] != 0.0) m += grid.weight(i) * a.f[i] * scaled_monomial(grid.node(i), c, 1.0, d.alphas[k]);
        d.moments[k] = m;
    }

    // 2^{j0} r >= rho(x_B) > 2^{j0-1} r. Nothing to split when r >= rho.
    const double rho = critical_function(c);
    while (std::ldexp(r, d.j0) < rho) ++d.j0;
    if (d.j0 == 0) return d;

    std::vector<AnnulusBasis> basis;
    for (int j = 0; j < d.j0; ++j) {
        basis.push_back(annulus_basis(grid, a.ball, j, d.alphas));
        d.annuli.push_back(basis.back().cert);
    }

    // e_{j,alpha} = v_{j,alpha} chi_{S_j} / |S_j|
    auto add_e = [&](GridFunction& g, int j, std::size_t k, double coef) {
        const AnnulusBasis& b = basis[static_cast<std::size_t>(j)];
        for (std::size_t q = 0; q < b.nodes.size(); ++q) g.values()[b.nodes[q]] += coef * b.dual[k][q] / b.measure;
    };

    for (std::size_t k = 0; k < K; ++k) add_e(d.a1, 0, k, -d.moments[k]);
    for (int j = 0; j + 2 <= d.j0; ++j) {
        std::vector<GridFunction> row;
        for (std::size_t k = 0; k < K; ++k) {
            GridFunction g = GridFunction::zeros(grid);
            add_e(g, j, k, d.moments[k]);
            add_e(g, j + 1, k, -d.moments[k]);
            row.push_back(std::move(g));
        }
        d.a2.push_back(std::move(row));
    }
    for (std::size_t k = 0; k < K; ++k) {
        GridFunction g = GridFunction::zeros(grid);
        add_e(g, d.j0 - 1, k, d.moments[k]);
        d.a3.push_back(std::move(g));
    }

    std::vector<double> sum = d.a1.values();
    for (const auto& row : d.a2)
        for (const auto& g : row)
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    for (const auto& g : d.a3)
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    for (std::size_t i = 0; i < sum.size(); ++i)
        d.reconstruction_residual = std::max(d.reconstruction_residual, std::abs(sum[i] - a.f[i]));

    for (std::size_t k = 0; k < K; ++k) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.f.size(); ++i)
            if (d.a1[i] != 0.0) m += grid.weight(i) * d.a1[i] * scaled_monomial(grid.node(i), c, r, d.alphas[k]);
        d.a1_moment_residual = std::max(d.a1_moment_residual, l1 > 0.0 ? std::abs(m) / l1 : std::abs(m));
    }
    return d;
}

GridFunction laplacian_bump_atom(double nu, double x_B, double r, double p, const Grid& grid) {
    if (grid.dim() != 1) throw DomainError("laplacian_bump_atom: one-dimensional grids only");
    if (!(r > 0.0) || !(x_B - r > 0.0)) throw DomainError("laplacian_bump_atom: ball must lie in (0, inf)");
    const double A = r * r * std::pow(2.0 * r, -1.0 / p);
    return GridFunction::sample(grid, [&](const Point& x) {
        const double u = (x[0] - x_B) / r;
        if (std::abs(u) >= 1.0) return 0.0;
        const double s = 1.0 - u * u;
        // -b'' + (nu^2 - 1/4) b / x^2
        return 8.0 * A / (r * r) * s * s * (1.0 - 7.0 * u * u) + (nu * nu - 0.25) / (x[0] * x[0]) * A * s * s * s * s;
    });
}

nlohmann::json Decomposition::certificates() const {
    nlohmann::json ann = nlohmann::json::array();
    for (const auto& c : annuli)
        ann.push_back({{"j", c.j},
                       {"nodes", c.nodes},
                       {"measure", c.measure},
                       {"gram_condition", c.gram_condition},
                       {"dual_residual", c.dual_residual},
                       {"dual_sup_scaled", c.dual_sup}});
    nlohmann::json a2_sup = nlohmann::json::array();
    for (const auto& row : a2) {
        double s = 0.0;
        for (const auto& g : row)
            for (double v : g.values()) s = std::max(s, std::abs(v));
        a2_sup.push_back(s);
    }
    return {{"center", ball.center},
            {"radius", ball.radius},
            {"p", p},
            {"omega", omega},
            {"j0", j0},
            {"moments", moments},
            {"annuli", ann},
            {"a2_sup_norms", a2_sup},
            {"reconstruction_residual", reconstruction_residual},
            {"a1_moment_residual", a1_moment_residual}};
}

} // namespace hbr
