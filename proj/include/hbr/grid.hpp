#pragma once

#include "hbr/heat_kernel.hpp"

#include "json.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hbr {

enum class Spacing { uniform, logarithmic };

std::string to_string(Spacing s);
Spacing parse_spacing(const std::string& s);

/// One axis of a tensor grid on [a, b] with 0 < a < b.
struct Axis {
    std::vector<double> nodes;
    std::vector<double> weights;
    Spacing spacing = Spacing::uniform;
    double a = 0.0;
    double b = 0.0;

    /// Trapezoid rule on equally spaced nodes.
    static Axis uniform(double a, double b, std::size_t n);
    /// Trapezoid rule in s = log x. The weights are rescaled by one common
    /// factor so that constants integrate exactly over [a, b].
    static Axis logarithmic(double a, double b, std::size_t n);
    /// Validates an explicit node/weight set.
    static Axis custom(std::vector<double> nodes, std::vector<double> weights, Spacing spacing);

    std::size_t size() const { return nodes.size(); }
    double max_spacing() const;
    double min_spacing() const;
};

class Grid {
public:
    explicit Grid(std::vector<Axis> axes);
    static Grid uniform(const std::vector<std::pair<double, double>>& box, std::size_t n_per_axis);
    static Grid logarithmic(const std::vector<std::pair<double, double>>& box, std::size_t n_per_axis);

    std::size_t dim() const { return axes_.size(); }
    std::size_t size() const { return size_; }
    const Axis& axis(std::size_t j) const { return axes_[j]; }
    const std::vector<Axis>& axes() const { return axes_; }
    std::vector<std::size_t> shape() const;

    /// Row-major multi-index of a flat node index (last axis fastest).
    std::vector<std::size_t> unravel(std::size_t flat) const;
    std::size_t ravel(const std::vector<std::size_t>& idx) const;
    Point node(std::size_t flat) const;
    double weight(std::size_t flat) const;
    double max_spacing() const;
    double min_spacing() const;
    double box_volume() const;
    bool same_as(const Grid& other) const;

    nlohmann::json to_json() const;
    static Grid from_json(const nlohmann::json& j);

private:
    std::vector<Axis> axes_;
    std::size_t size_ = 0;
};

class GridFunction {
public:
    GridFunction(Grid grid, std::vector<double> values);
    static GridFunction zeros(const Grid& grid);
    static GridFunction sample(const Grid& grid, const std::function<double(const Point&)>& f);

    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t size() const { return values_.size(); }

    GridFunction operator+(const GridFunction& other) const;
    GridFunction operator-(const GridFunction& other) const;
    GridFunction operator*(double c) const;

    /// CSV with header x1,...,xn,value and one row per node.
    void write_csv(std::ostream& out) const;
    /// Reads values written by write_csv on the same grid.
    static GridFunction read_csv(std::istream& in, const Grid& grid);

private:
    Grid grid_;
    std::vector<double> values_;
};

/// Dense matrix stored row-major, used for per-axis operators.
struct AxisMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// M(i, m) = kernel(x_i, y_m) * w_m on one axis, in parallel over rows.
AxisMatrix axis_kernel_matrix(const Axis& axis, const std::function<double(double, double)>& kernel);

/// Same for a symmetric kernel, evaluated on the upper triangle only.
AxisMatrix symmetric_axis_kernel_matrix(const Axis& axis, const std::function<double(double, double)>& kernel);

/// Contracts values (with the grid's shape) along one axis with a square
/// matrix: out[.., i, ..] = sum_m M(i, m) values[.., m, ..].
std::vector<double> apply_along_axis(const std::vector<std::size_t>& shape, std::size_t axis,
                                     const AxisMatrix& m, const std::vector<double>& values);

/// Kernels separated by more than this many units of sqrt(4t) are skipped.
inline constexpr double kGaussianCutoff = 50.0;

/// g(x_i) = sum_j w_j p_t^nu(x_i, y_j) f(y_j)
GridFunction apply_semigroup(const NuVector& nu, double t, const GridFunction& f);

/// Default dyadic times 2^m, m = -10..6.
std::vector<double> default_maximal_times();

/// Pointwise max over t in t_grid of |e^{-t Delta_nu} f|.
GridFunction maximal_function(const NuVector& nu, const GridFunction& f, const std::vector<double>& t_grid);

/// (sum_i w_i |f_i|^p)^(1/p), or max |f_i| for p = infinity.
double lp_norm(const GridFunction& f, double p);

struct EigenfunctionSpec {
    Point lambda;
    explicit EigenfunctionSpec(Point l);
};

/// Bessel function J_nu for nu > -1 (std::cyl_bessel_j, with reflection
/// for negative orders).
double bessel_j(double nu, double z);

/// prod_j (lambda_j x_j)^{1/2} J_{nu_j}(lambda_j x_j)
double eigenfunction(const NuVector& nu, const EigenfunctionSpec& spec, const Point& x);

/// Central differences of f along axis j minus (nu_j + 1/2)/x_j f.
/// One-sided second-order stencils at the two ends of the axis.
GridFunction apply_delta_fd(const NuVector& nu, std::size_t j, const GridFunction& f);

} // namespace hbr
