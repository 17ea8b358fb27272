#pragma once

/// Modified Bessel functions of the first kind I_alpha for real order
/// alpha > -1 and nonnegative real argument.
///
/// Three normalisations are offered because the heat kernel needs them
/// in different regimes:
///   besseli         I_alpha(z)
///   besseli_scaled  exp(-z) I_alpha(z)     (never overflows)
///   besseli_ratio   z^-alpha I_alpha(z)    (finite at z = 0)

namespace hbr {

struct BesselOrder {
    double alpha;
    /// Throws DomainError unless alpha > -1.
    explicit BesselOrder(double a);
};

struct BesselEval {
    double value;        // +inf when I_alpha(z) overflows
    double scaled_value; // exp(-z) I_alpha(z)
    double ratio_value;  // z^-alpha I_alpha(z), +inf when it overflows
};

/// Gamma function. Poles and negative arguments are not needed here and
/// raise DomainError for x <= 0.
double gamma_fn(double x);
/// log Gamma(x) for x > 0, thread safe.
double log_gamma(double x);

double besseli(BesselOrder order, double z);
double besseli_scaled(BesselOrder order, double z);
double besseli_ratio(BesselOrder order, double z);
BesselEval besseli_eval(BesselOrder order, double z);

/// log(exp(-z) I_alpha(z)); finite for z > 0 even when the scaled value
/// underflows (large alpha, tiny z). Returns -inf at z = 0 for alpha > 0.
double log_besseli_scaled(BesselOrder order, double z);

/// Argument above which the asymptotic expansion replaces the series.
double besseli_switch_point(double alpha);

namespace detail {
/// Scaled value as mantissa * exp(log_scale), from the power series.
struct ScaledParts {
    double mantissa;
    double log_scale;
};
ScaledParts besseli_scaled_series(double alpha, double z);
ScaledParts besseli_scaled_asymptotic(double alpha, double z);
} // namespace detail

} // namespace hbr
