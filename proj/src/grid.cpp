#include "hbr/grid.hpp"

#include "hbr/errors.hpp"
#include "hbr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace hbr {

std::string to_string(Spacing s) { return s == Spacing::uniform ? "uniform" : "logarithmic"; }

Spacing parse_spacing(const std::string& s) {
    if (s == "uniform") return Spacing::uniform;
    if (s == "logarithmic" || s == "log") return Spacing::logarithmic;
    throw ConfigError("unknown spacing '" + s + "'");
}

// ---------------------------------------------------------------------------
// Axis

namespace {

void check_interval(double a, double b, std::size_t n) {
    if (!(a > 0.0) || !(b > a) || std::isinf(b))
        throw DomainError("axis interval must satisfy 0 < a < b < inf");
    if (n < 2) throw DomainError("axis needs at least two nodes");
}

} // namespace

Axis Axis::uniform(double a, double b, std::size_t n) {
    check_interval(a, b, n);
    Axis ax;
    ax.spacing = Spacing::uniform;
    ax.a = a;
    ax.b = b;
    ax.nodes.resize(n);
    ax.weights.resize(n);
    const double h = (b - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        ax.nodes[i] = a + h * static_cast<double>(i);
        ax.weights[i] = h;
    }
    ax.nodes.back() = b;
    ax.weights.front() = ax.weights.back() = 0.5 * h;
    return ax;
}

Axis Axis::logarithmic(double a, double b, std::size_t n) {
    check_interval(a, b, n);
    Axis ax;
    ax.spacing = Spacing::logarithmic;
    ax.a = a;
    ax.b = b;
    ax.nodes.resize(n);
    ax.weights.resize(n);
    const double la = std::log(a);
    const double h = (std::log(b) - la) / static_cast<double>(n - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ax.nodes[i] = std::exp(la + h * static_cast<double>(i));
        ax.weights[i] = h * ax.nodes[i];
    }
    ax.nodes.front() = a;
    ax.nodes.back() = b;
    ax.weights.front() = 0.5 * h * a;
    ax.weights.back() = 0.5 * h * b;
    for (double w : ax.weights) total += w;
    const double scale = (b - a) / total;
    for (double& w : ax.weights) w *= scale;
    return ax;
}

Axis Axis::custom(std::vector<double> nodes, std::vector<double> weights, Spacing spacing) {
    if (nodes.size() < 2 || nodes.size() != weights.size())
        throw DomainError("axis needs at least two nodes and one weight per node");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!(nodes[i] > 0.0)) throw DomainError("axis nodes must be positive");
        if (i > 0 && !(nodes[i] > nodes[i - 1])) throw DomainError("axis nodes must increase strictly");
        if (!(weights[i] > 0.0)) throw DomainError("axis weights must be positive");
    }
    Axis ax;
    ax.a = nodes.front();
    ax.b = nodes.back();
    ax.spacing = spacing;
    ax.nodes = std::move(nodes);
    ax.weights = std::move(weights);
    return ax;
}

double Axis::max_spacing() const {
    double h = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) h = std::max(h, nodes[i] - nodes[i - 1]);
    return h;
}

double Axis::min_spacing() const {
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < nodes.size(); ++i) h = std::min(h, nodes[i] - nodes[i - 1]);
    return h;
}

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw DomainError("grid needs at least one axis");
    size_ = 1;
    for (const auto& ax : axes_) {
        if (ax.nodes.size() < 2 || ax.nodes.size() != ax.weights.size())
            throw DomainError("malformed grid axis");
        size_ *= ax.nodes.size();
    }
}

Grid Grid::uniform(const std::vector<std::pair<double, double>>& box, std::size_t n) {
    std::vector<Axis> axes;
    for (const auto& [a, b] : box) axes.push_back(Axis::uniform(a, b, n));
    return Grid(std::move(axes));
}

Grid Grid::logarithmic(const std::vector<std::pair<double, double>>& box, std::size_t n) {
    std::vector<Axis> axes;
    for (const auto& [a, b] : box) axes.push_back(Axis::logarithmic(a, b, n));
    return Grid(std::move(axes));
}

std::vector<std::size_t> Grid::shape() const {
    std::vector<std::size_t> s;
    for (const auto& ax : axes_) s.push_back(ax.size());
    return s;
}

std::vector<std::size_t> Grid::unravel(std::size_t flat) const {
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t j = axes_.size(); j-- > 0;) {
        idx[j] = flat % axes_[j].size();
        flat /= axes_[j].size();
    }
    return idx;
}

std::size_t Grid::ravel(const std::vector<std::size_t>& idx) const {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < axes_.size(); ++j) flat = flat * axes_[j].size() + idx[j];
    return flat;
}

Point Grid::node(std::size_t flat) const {
    const auto idx = unravel(flat);
    Point p(axes_.size());
    for (std::size_t j = 0; j < axes_.size(); ++j) p[j] = axes_[j].nodes[idx[j]];
    return p;
}

double Grid::weight(std::size_t flat) const {
    const auto idx = unravel(flat);
    double w = 1.0;
    for (std::size_t j = 0; j < axes_.size(); ++j) w *= axes_[j].weights[idx[j]];
    return w;
}

double Grid::max_spacing() const {
    double h = 0.0;
    for (const auto& ax : axes_) h = std::max(h, ax.max_spacing());
    return h;
}

double Grid::min_spacing() const {
    double h = std::numeric_limits<double>::infinity();
    for (const auto& ax : axes_) h = std::min(h, ax.min_spacing());
    return h;
}

double Grid::box_volume() const {
    double v = 1.0;
    for (const auto& ax : axes_) v *= ax.b - ax.a;
    return v;
}

bool Grid::same_as(const Grid& other) const {
    if (other.dim() != dim()) return false;
    for (std::size_t j = 0; j < dim(); ++j)
        if (axes_[j].nodes != other.axes_[j].nodes || axes_[j].weights != other.axes_[j].weights) return false;
    return true;
}

nlohmann::json Grid::to_json() const {
    nlohmann::json out;
    out["axes"] = nlohmann::json::array();
    for (const auto& ax : axes_) {
        out["axes"].push_back({{"spacing", to_string(ax.spacing)},
                               {"a", ax.a},
                               {"b", ax.b},
                               {"nodes", ax.nodes},
                               {"weights", ax.weights}});
    }
    return out;
}

Grid Grid::from_json(const nlohmann::json& j) {
    std::vector<Axis> axes;
    for (const auto& a : j.at("axes")) {
        Axis ax = Axis::custom(a.at("nodes").get<std::vector<double>>(),
                               a.at("weights").get<std::vector<double>>(),
                               parse_spacing(a.value("spacing", "uniform")));
        ax.a = a.value("a", ax.nodes.front());
        ax.b = a.value("b", ax.nodes.back());
        axes.push_back(std::move(ax));
    }
    return Grid(std::move(axes));
}

// ---------------------------------------------------------------------------
// GridFunction

GridFunction::GridFunction(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size())
        throw DomainError("grid function has " + std::to_string(values_.size()) + " values for " +
                          std::to_string(grid_.size()) + " nodes");
}

GridFunction GridFunction::zeros(const Grid& grid) { return GridFunction(grid, std::vector<double>(grid.size())); }

GridFunction GridFunction::sample(const Grid& grid, const std::function<double(const Point&)>& f) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.node(i));
    return GridFunction(grid, std::move(v));
}

GridFunction GridFunction::operator+(const GridFunction& other) const {
    if (other.size() != size()) throw DomainError("grid mismatch");
    auto out = *this;
    for (std::size_t i = 0; i < size(); ++i) out.values_[i] += other.values_[i];
    return out;
}

GridFunction GridFunction::operator-(const GridFunction& other) const { return *this + other * -1.0; }

GridFunction GridFunction::operator*(double c) const {
    auto out = *this;
    for (double& v : out.values_) v *= c;
    return out;
}

void GridFunction::write_csv(std::ostream& out) const {
    for (std::size_t j = 0; j < grid_.dim(); ++j) out << 'x' << (j + 1) << ',';
    out << "value\n";
    std::ostringstream row;
    row.precision(17);
    for (std::size_t i = 0; i < size(); ++i) {
        row.str("");
        for (double c : grid_.node(i)) row << c << ',';
        row << values_[i] << '\n';
        out << row.str();
    }
}

GridFunction GridFunction::read_csv(std::istream& in, const Grid& grid) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty CSV input");
    std::vector<double> values;
    values.reserve(grid.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != grid.dim() + 1) throw ConfigError("CSV row has wrong number of columns");
        const Point expect = grid.node(values.size());
        for (std::size_t j = 0; j < grid.dim(); ++j)
            if (std::fabs(row[j] - expect[j]) > 1e-12 * std::max(1.0, std::fabs(expect[j])))
                throw ConfigError("CSV coordinates do not match the grid");
        values.push_back(row.back());
    }
    return GridFunction(grid, std::move(values));
}

// ---------------------------------------------------------------------------
// Axis operators

AxisMatrix axis_kernel_matrix(const Axis& axis, const std::function<double(double, double)>& kernel) {
    AxisMatrix m;
    m.rows = m.cols = axis.size();
    m.data.assign(m.rows * m.cols, 0.0);
    parallel_for(m.rows, [&](std::size_t i) {
        for (std::size_t k = 0; k < m.cols; ++k)
            m.data[i * m.cols + k] = kernel(axis.nodes[i], axis.nodes[k]) * axis.weights[k];
    });
    return m;
}

AxisMatrix symmetric_axis_kernel_matrix(const Axis& axis, const std::function<double(double, double)>& kernel) {
    AxisMatrix m;
    m.rows = m.cols = axis.size();
    m.data.assign(m.rows * m.cols, 0.0);
    const std::size_t n = m.rows;
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t k = i; k < n; ++k) {
            const double v = kernel(axis.nodes[i], axis.nodes[k]);
            m.data[i * n + k] = v * axis.weights[k];
            m.data[k * n + i] = v * axis.weights[i];
        }
    });
    return m;
}

std::vector<double> apply_along_axis(const std::vector<std::size_t>& shape, std::size_t axis,
                                     const AxisMatrix& m, const std::vector<double>& values) {
    const std::size_t n = shape[axis];
    if (m.rows != n || m.cols != n) throw DomainError("axis matrix does not match grid shape");
    std::size_t outer = 1, inner = 1;
    for (std::size_t j = 0; j < axis; ++j) outer *= shape[j];
    for (std::size_t j = axis + 1; j < shape.size(); ++j) inner *= shape[j];
    std::vector<double> out(values.size(), 0.0);
    parallel_for(outer * n, [&](std::size_t task) {
        const std::size_t o = task / n;
        const std::size_t i = task % n;
        const double* row = &m.data[i * n];
        double* dst = &out[(o * n + i) * inner];
        for (std::size_t k = 0; k < n; ++k) {
            const double c = row[k];
            if (c == 0.0) continue;
            const double* src = &values[(o * n + k) * inner];
            for (std::size_t q = 0; q < inner; ++q) dst[q] += c * src[q];
        }
    });
    return out;
}

GridFunction apply_semigroup(const NuVector& nu, double t, const GridFunction& f) {
    if (!(t > 0.0)) throw DomainError("apply_semigroup: t must be positive");
    const Grid& g = f.grid();
    if (nu.dim() != g.dim()) throw DomainError("apply_semigroup: order and grid dimensions differ");
    const double reach = std::sqrt(4.0 * t * kGaussianCutoff);
    std::vector<double> v = f.values();
    const auto shape = g.shape();
    for (std::size_t j = 0; j < g.dim(); ++j) {
        const double order = nu[j];
        auto m = symmetric_axis_kernel_matrix(g.axis(j), [&](double x, double y) {
            if (std::fabs(x - y) > reach) return 0.0;
            return heat_kernel_1d(order, t, x, y);
        });
        v = apply_along_axis(shape, j, m, v);
    }
    return GridFunction(g, std::move(v));
}

std::vector<double> default_maximal_times() {
    std::vector<double> ts;
    for (int m = -10; m <= 6; ++m) ts.push_back(std::ldexp(1.0, m));
    return ts;
}

GridFunction maximal_function(const NuVector& nu, const GridFunction& f, const std::vector<double>& t_grid) {
    if (t_grid.empty()) throw DomainError("maximal_function: empty time grid");
    auto out = GridFunction::zeros(f.grid());
    for (double t : t_grid) {
        const auto g = apply_semigroup(nu, t, f);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.values()[i] = std::max(out.values()[i], std::fabs(g[i]));
    }
    return out;
}

double lp_norm(const GridFunction& f, double p) {
    if (!(p > 0.0)) throw DomainError("lp_norm: p must be positive");
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : f.values()) m = std::max(m, std::fabs(v));
        return m;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f.grid().weight(i) * std::pow(std::fabs(f[i]), p);
    return std::pow(s, 1.0 / p);
}

// ---------------------------------------------------------------------------
// Eigenfunctions

EigenfunctionSpec::EigenfunctionSpec(Point l) : lambda(std::move(l)) {
    if (lambda.empty()) throw DomainError("eigenfunction frequency must be nonempty");
    for (double v : lambda)
        if (!(v > 0.0)) throw DomainError("eigenfunction frequencies must be positive");
}

double bessel_j(double nu, double z) {
    if (!(nu > -1.0)) throw DomainError("bessel_j: order must exceed -1");
    if (!(z >= 0.0)) throw DomainError("bessel_j: argument must be nonnegative");
    if (z == 0.0) return nu == 0.0 ? 1.0 : 0.0;
    if (nu >= 0.0) return std::cyl_bessel_j(nu, z);
    // libstdc++ rejects negative orders; reflect through Y.
    const double a = -nu;
    return std::cos(a * std::numbers::pi) * std::cyl_bessel_j(a, z) -
           std::sin(a * std::numbers::pi) * std::cyl_neumann(a, z);
}

double eigenfunction(const NuVector& nu, const EigenfunctionSpec& spec, const Point& x) {
    if (nu.dim() != spec.lambda.size() || x.size() != nu.dim())
        throw DomainError("eigenfunction: dimension mismatch");
    double out = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (!(x[j] > 0.0)) throw DomainError("eigenfunction: x must be positive");
        const double z = spec.lambda[j] * x[j];
        out *= std::sqrt(z) * bessel_j(nu[j], z);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference delta

GridFunction apply_delta_fd(const NuVector& nu, std::size_t j, const GridFunction& f) {
    const Grid& g = f.grid();
    if (j >= g.dim() || nu.dim() != g.dim()) throw DomainError("apply_delta_fd: bad axis or dimension");
    const auto& xs = g.axis(j).nodes;
    const std::size_t n = xs.size();
    if (n < 3) throw NumericalError("apply_delta_fd: axis needs at least three nodes");
    const auto shape = g.shape();
    std::size_t inner = 1;
    for (std::size_t a = j + 1; a < shape.size(); ++a) inner *= shape[a];
    const double s = nu[j] + 0.5;
    std::vector<double> out(f.size());
    const auto& v = f.values();
    for (std::size_t flat = 0; flat < f.size(); ++flat) {
        const std::size_t i = (flat / inner) % n;
        const std::size_t line_start = flat - i * inner;
        auto at = [&](std::size_t k) { return v[line_start + k * inner]; };
        // Three-point stencil on possibly nonuniform nodes i0 < i1 < i2,
        // differentiated at x_i.
        std::size_t i0 = i == 0 ? 0 : (i == n - 1 ? n - 3 : i - 1);
        const double x0 = xs[i0], x1 = xs[i0 + 1], x2 = xs[i0 + 2], x = xs[i];
        const double c0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
        const double c1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
        const double c2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
        const double d = c0 * at(i0) + c1 * at(i0 + 1) + c2 * at(i0 + 2);
        out[flat] = d - s / x * v[flat];
    }
    return GridFunction(g, std::move(out));
}

} // namespace hbr
