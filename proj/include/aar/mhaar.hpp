/* Acceptance-ratio averaging engine.
 *
 * A kernel built here targets a parameter/latent pair (theta, z).  One step:
 *   1. propose a parameter move theta -> prop,
 *   2. flip a direction coin c in {1,2} with state-dependent weights,
 *   3. c=1: draw N auxiliary replicates forward, accept against the MEAN of
 *      their per-replicate ratios, and on acceptance select which replicate
 *      realises the move with probability proportional to its ratio;
 *   3'. c=2: pick a replicate slot uniformly, realise the move through one
 *      forward draw in that slot, refill the other slots in the reverse
 *      direction from the proposed state, and accept against the inverse of
 *      the reverse-direction mean.
 * The two branches are mutual mirrors, which is what makes the composite
 * kernel reversible for any N while the averaging tames the variance of a
 * single noisy ratio.
 *
 * Scheme contract (see toy.hpp / exchange.hpp / rjmcmc.hpp for instances):
 *   Aux    sample_u(from, to, z, rng)   draw one auxiliary replicate
 *   double log_ratio(from, to, z, u)    full per-replicate log ratio: target,
 *                                       proposal, auxiliary densities, and -
 *                                       when direction weights are asymmetric
 *                                       - the weight ratio itself
 *   Latent apply_z(from, to, z, u)      state component of the pair map
 *   Aux    apply_u(from, to, z, u)      auxiliary component of the pair map
 * The pair map must be self-inverse with the roles of from/to swapped, and
 * log_ratio must change sign under it; involution_check verifies both.
 */
#pragma once

#include <cstddef>
#include <vector>

#include "aar/core.hpp"
#include "aar/logspace.hpp"
#include "aar/rng.hpp"

namespace aar {

// log of (w_bwd / w_fwd) * mean(exp(log_ratios)).  The weight arguments
// cover constant direction weights; state-dependent weights belong inside
// the per-replicate ratios instead.
inline double averaged_log_ratio(std::span<const double> log_ratios, double omega_fwd = 1.0,
                                 double omega_bwd = 1.0) {
    return std::log(omega_bwd) - std::log(omega_fwd) + log_mean_exp(log_ratios);
}

// Index k with probability proportional to exp(log_weights[k]), computed
// stably under a common shift.  A row with no mass is a contract violation.
inline std::size_t sample_proportional(std::span<const double> log_weights, Rng& rng) {
    double m = kNegInf;
    for (double w : log_weights) m = std::max(m, require_not_nan(w, "sample_proportional"));
    if (m == kNegInf)
        throw numeric_contract_error("sample_proportional: no weight carries mass");
    double total = 0.0;
    for (double w : log_weights) total += std::exp(w - m);
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < log_weights.size(); ++k) {
        acc += std::exp(log_weights[k] - m);
        if (u < acc) return k;
    }
    return log_weights.size() - 1;  // final bucket absorbs rounding residue
}

struct MhaarOptions {
    std::size_t n_replicates = 1;
    // With lazy selection the realised replicate is only drawn on
    // acceptance, so rejected steps cost no selection randomness.  The eager
    // mode draws it unconditionally; it exists for stream-accounting tests.
    bool lazy_selection = true;
};

template <class Theta, class Latent>
struct MhaarResult {
    Theta theta;
    Latent z;
    bool accepted = false;
    int coin = 1;
    double log_accept = 0.0;
};

// Direction weights that ignore the state and pick both coins equally.
struct SymmetricCoin {
    template <class Theta, class Latent>
    double operator()(const Theta&, const Theta&, const Latent&, int) const {
        return 0.5;
    }
};

template <class Theta, class Latent, class Prop, class Scheme, class Omega = SymmetricCoin>
MhaarResult<Theta, Latent> mhaar_step(const Theta& theta, const Latent& z, const Prop& propose,
                                      const Scheme& scheme, const MhaarOptions& opt, Rng& rng,
                                      const Omega& omega = {}) {
    const Theta prop = propose.sample(theta, rng);
    const std::size_t n = opt.n_replicates;

    const double w1 = omega(theta, prop, z, 1);
    int coin;
    if (w1 >= 1.0)
        coin = 1;
    else if (w1 <= 0.0)
        coin = 2;
    else
        coin = rng.uniform() < w1 ? 1 : 2;

    // Replicates draw from index-derived substreams so that a parallel map
    // over them would produce the same chain as this serial loop.
    const std::uint64_t salt = rng.next_u64();

    if (coin == 1) {
        using Aux = decltype(scheme.sample_u(theta, prop, z, rng));
        std::vector<Aux> us;
        us.reserve(n);
        std::vector<double> logr(n);
        for (std::size_t i = 0; i < n; ++i) {
            Rng sub = substream(salt, i);
            us.push_back(scheme.sample_u(theta, prop, z, sub));
            logr[i] = scheme.log_ratio(theta, prop, z, us[i]);
        }
        const double log_acc = log_mean_exp(logr);
        std::size_t k = 0;
        if (!opt.lazy_selection) k = sample_proportional(logr, rng);
        if (accept_decision(log_acc, rng)) {
            if (opt.lazy_selection) k = sample_proportional(logr, rng);
            return {prop, scheme.apply_z(theta, prop, z, us[k]), true, 1, log_acc};
        }
        return {theta, z, false, 1, log_acc};
    }

    // coin == 2: one forward draw realises the candidate move, the remaining
    // slots are refilled in the reverse direction from the candidate state.
    const std::size_t k = static_cast<std::size_t>(rng.uniform_int(n));
    Rng sub_k = substream(salt, k);
    const auto u_k = scheme.sample_u(theta, prop, z, sub_k);
    const Latent z_new = scheme.apply_z(theta, prop, z, u_k);
    const auto u_back = scheme.apply_u(theta, prop, z, u_k);

    std::vector<double> logr_rev(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == k) {
            logr_rev[i] = scheme.log_ratio(prop, theta, z_new, u_back);
        } else {
            Rng sub = substream(salt, i);
            const auto u_i = scheme.sample_u(prop, theta, z_new, sub);
            logr_rev[i] = scheme.log_ratio(prop, theta, z_new, u_i);
        }
    }
    const double log_acc = -log_mean_exp(logr_rev);
    if (accept_decision(log_acc, rng)) return {prop, z_new, true, 2, log_acc};
    return {theta, z, false, 2, log_acc};
}

}  // namespace aar
