/* Log-domain arithmetic helpers.
 *
 * All probability computations in this library are carried out on log scale.
 * Conventions: -inf represents an exact zero; NaN is never a valid value and
 * any NaN encountered at a decision point raises numeric_contract_error.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace aar {

// Raised when a numerical contract is violated (NaN at a decision point,
// empty averages, total underflow of a weight row, ...).  The CLI maps this
// to a dedicated exit code so scripted callers can tell "bad numbers" from
// "bad usage".
struct numeric_contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Below this log-weight, exp() underflows to zero in double precision.  Rows
// whose entries have all fallen below the floor carry no usable information
// and are treated as a numerical failure rather than silently renormalised.
inline constexpr double kLogFloor = -708.0;

inline double require_not_nan(double x, const char* what) {
    if (std::isnan(x))
        throw numeric_contract_error(std::string("NaN encountered in ") + what);
    return x;
}

// log(exp(a) + exp(b)) without overflow; -inf operands behave as zeros.
inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log(sum_i exp(x_i)); empty input and all -inf both give -inf.
inline double log_sum_exp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) m = std::max(m, require_not_nan(x, "log_sum_exp"));
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// log((1/n) * sum_i exp(x_i)); empty input is a contract violation.
inline double log_mean_exp(std::span<const double> xs) {
    if (xs.empty())
        throw numeric_contract_error("log_mean_exp of empty range");
    return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

// Gaussian log density; sd must be positive.
inline double log_normal_pdf(double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return -0.5 * u * u - std::log(sd) - 0.9189385332046727;  // log sqrt(2 pi)
}

// Same density with log(sd) supplied by the caller.  Hot loops evaluate many
// densities against one fixed scale, and the redundant log dominates there.
inline double log_normal_pdf(double x, double mean, double sd, double log_sd) {
    const double u = (x - mean) / sd;
    return -0.5 * u * u - log_sd - 0.9189385332046727;  // log sqrt(2 pi)
}

// log(1 - exp(x)) for x <= 0, switching between expm1/log1p branches to keep
// full precision near both endpoints.
inline double log1m_exp(double x) {
    require_not_nan(x, "log1m_exp");
    if (x > 0.0)
        throw numeric_contract_error("log1m_exp requires a non-positive argument");
    if (x == 0.0) return kNegInf;
    return x > -0.6931471805599453  // -log(2)
               ? std::log(-std::expm1(x))
               : std::log1p(-std::exp(x));
}

}  // namespace aar
