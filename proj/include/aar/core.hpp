/* Building blocks shared by every kernel in the library.
 *
 * - accept_decision: the one place where a log acceptance ratio is turned
 *   into a coin flip, with hard NaN rejection.
 * - involution_check: numerical verification that a proposal scheme's pair
 *   mapping is self-inverse and that its log ratio changes sign under it.
 * - transition-matrix utilities for finite-state verification: empirical
 *   one-step matrices, reversibility and stationarity residuals, and a
 *   Jacobi eigensolver for spectral gaps of reversible kernels.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <tuple>
#include <utility>
#include <vector>

#include "aar/logspace.hpp"
#include "aar/rng.hpp"

namespace aar {

using Matrix = std::vector<std::vector<double>>;

// Accept with probability min(1, exp(log_r)).  Certain outcomes do not
// consume randomness; NaN is a contract violation, never a silent reject.
inline bool accept_decision(double log_r, Rng& rng) {
    require_not_nan(log_r, "accept_decision");
    if (log_r >= 0.0) return true;
    if (log_r == kNegInf) return false;
    return std::log(rng.uniform()) < log_r;
}

struct InvolutionReport {
    double max_roundtrip = 0.0;  // distance between a point and its double image
    double max_skew = 0.0;       // max |log r + log r on the image|
};

// Drives a proposal scheme through `samples` random points and measures how
// far the pair mapping is from being self-inverse, and how far the log
// ratio is from exact antisymmetry under it.  `gen(rng)` supplies
// (from, to, z) tuples; auxiliary variables are drawn from the scheme
// itself.  `zdist`/`udist` are metrics on the two component spaces.
template <class Scheme, class Gen, class ZDist, class UDist>
InvolutionReport involution_check(const Scheme& scheme, Gen&& gen, std::size_t samples, Rng& rng,
                                  ZDist&& zdist, UDist&& udist) {
    InvolutionReport rep;
    for (std::size_t s = 0; s < samples; ++s) {
        auto [from, to, z] = gen(rng);
        auto u = scheme.sample_u(from, to, z, rng);

        auto z1 = scheme.apply_z(from, to, z, u);
        auto u1 = scheme.apply_u(from, to, z, u);
        auto z2 = scheme.apply_z(to, from, z1, u1);
        auto u2 = scheme.apply_u(to, from, z1, u1);
        rep.max_roundtrip = std::max(rep.max_roundtrip, zdist(z, z2) + udist(u, u2));

        const double fwd = scheme.log_ratio(from, to, z, u);
        const double bwd = scheme.log_ratio(to, from, z1, u1);
        if (fwd == kNegInf || bwd == kNegInf) {
            // A zero ratio must be matched by an infinite one on the image;
            // both sides vanishing at once breaks antisymmetry.
            if (fwd == bwd) rep.max_skew = std::numeric_limits<double>::infinity();
        } else {
            rep.max_skew = std::max(rep.max_skew, std::abs(fwd + bwd));
        }
    }
    return rep;
}

// Empirical one-step transition matrix of a kernel on {0,...,n-1}.  Each
// (state, trial) cell runs on its own derived stream, so the estimate is
// independent of evaluation order.
template <class StepFn>
Matrix mc_transition_matrix(std::size_t n_states, StepFn&& step, std::size_t trials, Rng& rng) {
    Matrix p(n_states, std::vector<double>(n_states, 0.0));
    const std::uint64_t salt = rng.next_u64();
    for (std::size_t i = 0; i < n_states; ++i) {
        for (std::size_t t = 0; t < trials; ++t) {
            Rng sub = substream(salt, i * trials + t);
            const std::size_t j = step(i, sub);
            p[i][j] += 1.0;
        }
        for (double& v : p[i]) v /= static_cast<double>(trials);
    }
    return p;
}

// max_j |sum_i pi_i P_ij - pi_j|
inline double stationarity_residual(const Matrix& p, const std::vector<double>& pi) {
    const std::size_t n = pi.size();
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += pi[i] * p[i][j];
        worst = std::max(worst, std::abs(s - pi[j]));
    }
    return worst;
}

// max_{i,j} |pi_i P_ij - pi_j P_ji|
inline double detailed_balance_residual(const Matrix& p, const std::vector<double>& pi) {
    const std::size_t n = pi.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            worst = std::max(worst, std::abs(pi[i] * p[i][j] - pi[j] * p[j][i]));
    return worst;
}

// Largest standardised reversibility residual of an empirical matrix whose
// rows were estimated from `trials` one-step draws each.  Under the null
// both directed flows share one rate, so the variance uses the pooled
// estimate (score test).  A per-direction plug-in variance would collapse
// to zero whenever one direction happens to record no transitions, turning
// an ordinary finite-sample outcome into an arbitrarily large z; the pooled
// form stays calibrated there.  Values of a few units are expected noise.
inline double detailed_balance_zscore(const Matrix& p, const std::vector<double>& pi,
                                      std::size_t trials) {
    const std::size_t n = pi.size();
    const auto nd = static_cast<double>(trials);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double flow = pi[i] * p[i][j] - pi[j] * p[j][i];
            const double pooled = 0.5 * (pi[i] * p[i][j] + pi[j] * p[j][i]);
            const double var = pooled * (pi[i] + pi[j] - 2.0 * pooled) / nd;
            if (var <= 0.0) {
                if (flow != 0.0) return std::numeric_limits<double>::infinity();
                continue;
            }
            worst = std::max(worst, std::abs(flow) / std::sqrt(var));
        }
    }
    return worst;
}

// Largest standardised stationarity residual of an empirical matrix whose
// rows were estimated from `trials` one-step draws each: for kernels that
// preserve pi without being reversible, |pi P - pi| per column against its
// binomial standard error.  Values of a few units are expected noise.
inline double stationarity_zscore(const Matrix& p, const std::vector<double>& pi,
                                  std::size_t trials) {
    const std::size_t n = pi.size();
    const auto nd = static_cast<double>(trials);
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double flow = -pi[j];
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            flow += pi[i] * p[i][j];
            var += pi[i] * pi[i] * p[i][j] * (1.0 - p[i][j]) / nd;
        }
        if (var == 0.0) {
            if (flow != 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        worst = std::max(worst, std::abs(flow) / std::sqrt(var));
    }
    return worst;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

// Right spectral gap 1 - lambda_2 of a kernel reversible w.r.t. pi.  The
// similarity transform D^{1/2} P D^{-1/2} is symmetric under reversibility;
// it is symmetrised explicitly to absorb floating-point asymmetry.
inline double reversible_spectral_gap(const Matrix& p, const std::vector<double>& pi) {
    const std::size_t n = pi.size();
    Matrix s(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            s[i][j] = std::sqrt(pi[i] / pi[j]) * p[i][j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (s[i][j] + s[j][i]);
            s[i][j] = s[j][i] = m;
        }
    const auto ev = symmetric_eigenvalues(s);
    return 1.0 - ev[1];
}

// Total variation distance between two distributions on the same support.
inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return 0.5 * s;
}

inline std::vector<double> row_times_matrix(const std::vector<double>& v, const Matrix& p) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) out[j] += v[i] * p[i][j];
    return out;
}

}  // namespace aar
