/* Two-state benchmark with a fully analytic averaged kernel.
 *
 * The parameter lives on {-1,+1} with a uniform target and a symmetric
 * proposal that flips the sign with probability 1-alpha.  Each auxiliary
 * replicate takes the value a with probability 1/(1+a) and 1/a otherwise,
 * and the per-replicate ratio equals the drawn value itself.  Averaging N
 * replicates gives a kernel whose flip probability has a closed form in
 * terms of binomial sums, so spectral gaps, relaxation times and mixing
 * bounds are all exactly computable.  This makes the model the reference
 * instance for validating the generic engine end to end.
 */
#pragma once

#include <cmath>
#include <utility>

#include "aar/core.hpp"
#include "aar/mhaar.hpp"

namespace aar {

struct ToyParams {
    double a = 2.0;      // ratio spread; larger means noisier single-replicate ratios
    double alpha = 0.0;  // self-loop probability of the sign-flip proposal
    int n = 1;           // number of averaged replicates
};

namespace detail {

// log Binomial(n, p) pmf at k, via log-gamma.
inline double log_binom_pmf(int n, int k, double p) {
    if (k < 0 || k > n) return kNegInf;
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
           k * std::log(p) + (n - k) * std::log1p(-p);
}

}  // namespace detail

// Exact probability that one step flips the sign of the parameter.
inline double toy_kernel_prob(const ToyParams& par) {
    const double a = par.a;
    const int n = par.n;
    const double p = 1.0 / (1.0 + a);  // chance a replicate takes the value a

    if (n == 1) {
        const double acc =
            std::min(1.0, a) / (1.0 + a) + a * std::min(1.0, 1.0 / a) / (1.0 + a);
        return (1.0 - par.alpha) * acc;
    }

    // k counts replicates with value a; their mean ratio is w_k.
    double fwd = 0.0, bwd = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double frac = static_cast<double>(k) / n;
        const double w_k = frac * a + (1.0 - frac) / a;
        fwd += std::exp(detail::log_binom_pmf(n, k, p)) * std::min(1.0, w_k);
        // The realised slot contributes the inverse value, so a high count k
        // in the reverse vector arises from k-1 ordinary high draws when the
        // realised draw was low, or k ordinary high draws when it was high.
        const double tilt = (1.0 - p) * std::exp(detail::log_binom_pmf(n - 1, k - 1, p)) +
                            p * std::exp(detail::log_binom_pmf(n - 1, k, p));
        bwd += tilt * std::min(1.0, 1.0 / w_k);
    }
    return (1.0 - par.alpha) * 0.5 * (fwd + bwd);
}

// For a symmetric two-state chain the spectrum is {1, 1-2p}, so the right
// spectral gap is twice the flip probability.
inline double toy_spectral_gap(const ToyParams& par) { return 2.0 * toy_kernel_prob(par); }

inline double relaxation_time(const ToyParams& par) { return 1.0 / toy_spectral_gap(par); }

// Flip probability at N=1 relative to N replicates; the proposal self-loop
// cancels in the ratio.
inline double gamma_ratio(double a, int n) {
    ToyParams one{a, 0.0, 1};
    ToyParams many{a, 0.0, n};
    return toy_kernel_prob(one) / toy_kernel_prob(many);
}

// (lower, upper) bounds on the eps-mixing time implied by a relaxation time.
inline std::pair<double, double> mixing_time_bounds(double eps, double t_relax) {
    return {-(t_relax - 1.0) * std::log(2.0 * eps), -t_relax * std::log(eps / 2.0)};
}

inline Matrix toy_exact_matrix(const ToyParams& par) {
    const double f = toy_kernel_prob(par);
    return {{1.0 - f, f}, {f, 1.0 - f}};
}

// Scheme instance for the generic engine.  The parameter is +-1, there is
// no latent component, and the auxiliary variable is the replicate value.
struct ToyScheme {
    double a = 2.0;

    struct NoLatent {};

    double sample_u(int, int, NoLatent, Rng& rng) const {
        return rng.uniform() < 1.0 / (1.0 + a) ? a : 1.0 / a;
    }
    double log_ratio(int, int, NoLatent, double u) const { return std::log(u); }
    NoLatent apply_z(int, int, NoLatent, double) const { return {}; }
    double apply_u(int, int, NoLatent, double u) const { return 1.0 / u; }
};

// Sign-flip proposal with a self-loop.
struct ToyProposal {
    double alpha = 0.0;
    int sample(int theta, Rng& rng) const {
        if (alpha > 0.0 && rng.uniform() < alpha) return theta;
        return -theta;
    }
};

}  // namespace aar
