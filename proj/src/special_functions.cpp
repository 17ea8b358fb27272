#include "hbr/special_functions.hpp"

#include "hbr/errors.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace hbr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_argument(double z) {
    if (!(z >= 0.0) || std::isinf(z))
        throw DomainError("Bessel argument must be finite and nonnegative, got " +
                          std::to_string(z));
}

// Large enough that the series never has to sum more than a few hundred
// terms for the orders used by the kernels, small enough that the
// asymptotic expansion reaches full precision before its terms turn.
constexpr double kMinSwitch = 25.0;

} // namespace

BesselOrder::BesselOrder(double a) : alpha(a) {
    if (!(a > -1.0) || std::isinf(a))
        throw DomainError("Bessel order must satisfy alpha > -1, got " + std::to_string(a));
}

double gamma_fn(double x) {
    if (!(x > 0.0)) throw DomainError("gamma_fn: argument must be positive");
    return std::tgamma(x);
}

double log_gamma(double x) {
    if (!(x > 0.0)) throw DomainError("log_gamma: argument must be positive");
    if (x < 170.0) return std::log(std::tgamma(x));
    int sign = 0;
    return ::lgamma_r(x, &sign);
}

double besseli_switch_point(double alpha) {
    return std::max(kMinSwitch, 0.5 * alpha * alpha);
}

namespace detail {

namespace {

struct GammaPair {
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double log_g = 0.0;
    double g = 0.0;
};

// Kernel sweeps reuse a handful of orders; remember Gamma(alpha + 1) for
// the most recent ones.
const GammaPair& gamma_of_order(double alpha) {
    constexpr std::size_t slots = 8;
    thread_local std::array<GammaPair, slots> cache;
    thread_local std::size_t next = 0;
    for (const auto& c : cache)
        if (c.alpha == alpha) return c;
    auto& c = cache[next];
    next = (next + 1) % slots;
    c.alpha = alpha;
    c.log_g = log_gamma(alpha + 1.0);
    c.g = alpha + 1.0 < 170.0 ? gamma_fn(alpha + 1.0) : std::numeric_limits<double>::infinity();
    return c;
}

} // namespace

ScaledParts besseli_scaled_series(double alpha, double z) {
    if (z == 0.0) {
        if (alpha == 0.0) return {1.0, 0.0};
        return {1.0, alpha > 0.0 ? -kInf : kInf};
    }
    const double q = 0.25 * z * z;
    const int cap = std::max(500, static_cast<int>(2.0 * z) + 100);
    double term = 1.0;
    double sum = 1.0;
    double extra_log = 0.0;
    for (int k = 1; k <= cap; ++k) {
        term *= q / (k * (alpha + k));
        sum += term;
        if (term < 1e-17 * sum) break;
        if (sum > 1e280) {
            sum *= 1e-280;
            term *= 1e-280;
            extra_log += 280.0 * std::numbers::ln10;
        }
    }
    const auto& gp = gamma_of_order(alpha);
    const double log_pref = alpha * std::log(0.5 * z) - gp.log_g - z;
    if (extra_log == 0.0 && log_pref > -700.0 && log_pref < 700.0) {
        // Direct products are more accurate than exp of a long sum of logs.
        const double pref = std::exp(-z) * std::pow(0.5 * z, alpha) / gp.g;
        if (std::isnormal(pref)) return {sum * pref, 0.0};
    }
    return {sum, log_pref + extra_log};
}

ScaledParts besseli_scaled_asymptotic(double alpha, double z) {
    const double mu = 4.0 * alpha * alpha;
    double term = 1.0;
    double sum = 1.0;
    double prev = kInf;
    for (int k = 1; k < 200; ++k) {
        const double odd = 2.0 * k - 1.0;
        const double next = -term * (mu - odd * odd) / (8.0 * k * z);
        if (next == 0.0) break;
        if (std::fabs(next) >= prev) break;
        prev = std::fabs(next);
        term = next;
        sum += term;
        if (std::fabs(term) < 1e-17 * std::fabs(sum)) break;
    }
    return {sum / std::sqrt(2.0 * std::numbers::pi * z), 0.0};
}

} // namespace detail

namespace {

detail::ScaledParts scaled_parts(double alpha, double z) {
    if (z >= besseli_switch_point(alpha)) return detail::besseli_scaled_asymptotic(alpha, z);
    return detail::besseli_scaled_series(alpha, z);
}

} // namespace

double besseli_scaled(BesselOrder order, double z) {
    check_argument(z);
    const auto parts = scaled_parts(order.alpha, z);
    if (parts.log_scale == 0.0) return parts.mantissa;
    return parts.mantissa * std::exp(parts.log_scale);
}

double log_besseli_scaled(BesselOrder order, double z) {
    check_argument(z);
    const auto parts = scaled_parts(order.alpha, z);
    return std::log(parts.mantissa) + parts.log_scale;
}

double besseli(BesselOrder order, double z) {
    check_argument(z);
    const double log_value = log_besseli_scaled(order, z) + z;
    if (log_value > std::log(std::numeric_limits<double>::max()))
        throw OverflowError("besseli: I_alpha(z) overflows at z = " + std::to_string(z) +
                            "; use besseli_scaled");
    if (z < 700.0) return besseli_scaled(order, z) * std::exp(z);
    return std::exp(log_value);
}

double besseli_ratio(BesselOrder order, double z) {
    check_argument(z);
    const double alpha = order.alpha;
    if (z < besseli_switch_point(alpha)) {
        // z^-alpha I_alpha(z) = 2^-alpha / Gamma(alpha+1) * sum, no z power needed.
        const double q = 0.25 * z * z;
        double term = 1.0;
        double sum = 1.0;
        for (int k = 1; k <= 1000; ++k) {
            term *= q / (k * (alpha + k));
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        const double log_norm = -alpha * std::numbers::ln2 - log_gamma(alpha + 1.0);
        if (log_norm > -700.0 && log_norm < 700.0)
            return sum * std::pow(2.0, -alpha) / gamma_fn(alpha + 1.0);
        return sum * std::exp(log_norm);
    }
    const double log_value = log_besseli_scaled(order, z) + z - alpha * std::log(z);
    if (log_value > std::log(std::numeric_limits<double>::max())) return kInf;
    return std::exp(log_value);
}

BesselEval besseli_eval(BesselOrder order, double z) {
    check_argument(z);
    BesselEval out{};
    out.scaled_value = besseli_scaled(order, z);
    out.ratio_value = besseli_ratio(order, z);
    try {
        out.value = besseli(order, z);
    } catch (const OverflowError&) {
        out.value = kInf;
    }
    return out;
}

} // namespace hbr
