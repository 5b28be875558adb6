/* Posterior sampling when the likelihood normaliser is unavailable.
 *
 * The model is a discrete exponential family g_theta(y) = exp(theta * S(y))
 * on an enumerable support.  Its normaliser C_theta never enters the
 * algorithm: each proposed parameter move is audited with synthetic
 * observations drawn from the proposed parameter, whose likelihood ratios
 * are unbiased for the intractable C ratio.  Averaging N such replicates
 * sharpens the acceptance probability toward the ideal ratio while keeping
 * the kernel exactly invariant for every N, by the same two-branch
 * construction as the generic engine.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "aar/logspace.hpp"
#include "aar/mhaar.hpp"
#include "aar/rng.hpp"

namespace aar {

// Finite-support family with sufficient statistic S: P(y) ~ exp(theta*S(y)).
struct DiscreteExpFamily {
    std::vector<double> stats;  // S(y) for y = 0..K-1

    double log_g(double theta, int y) const { return theta * stats[static_cast<std::size_t>(y)]; }

    double log_normalizer(double theta) const {
        std::vector<double> lw(stats.size());
        for (std::size_t y = 0; y < stats.size(); ++y) lw[y] = theta * stats[y];
        return log_sum_exp(lw);
    }

    std::vector<double> probs(double theta) const {
        const double lz = log_normalizer(theta);
        std::vector<double> p(stats.size());
        for (std::size_t y = 0; y < stats.size(); ++y) p[y] = std::exp(theta * stats[y] - lz);
        return p;
    }

    // Exact draw by inversion of the enumerated CDF.
    int sample_latent(double theta, Rng& rng) const {
        const auto p = probs(theta);
        const double u = rng.uniform();
        double acc = 0.0;
        for (std::size_t y = 0; y + 1 < p.size(); ++y) {
            acc += p[y];
            if (u < acc) return static_cast<int>(y);
        }
        return static_cast<int>(p.size()) - 1;
    }
};

struct GaussianPrior {
    double mean = 0.0;
    double sd = 1.0;
    double log_density(double x) const {
        const double z = (x - mean) / sd;
        return -0.5 * z * z - std::log(sd) - 0.9189385332046727;  // log sqrt(2 pi)
    }
};

// Per-replicate log ratio of the exchange move theta -> prop given one
// synthetic observation u; log_q_* are the proposal densities of the two
// directions (zero for symmetric walks).
template <class Family, class Prior>
double exchange_log_ratio(const Family& fam, const Prior& prior, double log_q_fwd,
                          double log_q_bwd, double theta, double prop, int y, int u) {
    return (log_q_bwd - log_q_fwd) + (prior.log_density(prop) - prior.log_density(theta)) +
           (fam.log_g(prop, y) - fam.log_g(theta, y)) + (fam.log_g(theta, u) - fam.log_g(prop, u));
}

template <class Theta>
struct ExchangeResult {
    Theta theta;
    bool accepted = false;
    int coin = 1;
    double log_accept = 0.0;
};

// Single-replicate exchange move: one synthetic dataset from the proposed
// parameter plugs the normaliser hole.  Identical in law to the averaged
// step with one replicate.
template <class Family, class Prior, class Prop, class Theta>
ExchangeResult<Theta> plain_exchange_step(Theta theta, int y, const Family& fam,
                                          const Prior& prior, const Prop& q, Rng& rng) {
    const Theta prop = q.sample(theta, rng);
    const int u = fam.sample_latent(q.value(prop), rng);
    const double logr =
        exchange_log_ratio(fam, prior, q.log_density(theta, prop), q.log_density(prop, theta),
                           q.value(theta), q.value(prop), y, u);
    if (accept_decision(logr, rng)) return {prop, true, 1, logr};
    return {theta, false, 1, logr};
}

// Averaged exchange move with N synthetic replicates.
//
// Forward branch: all replicates come from the proposed parameter and the
// acceptance ratio is their mean.  Reverse branch: the first replicate
// comes from the proposed parameter (it realises the reverse bridge) while
// the rest come from the current one, and acceptance is the inverse of the
// reverse-direction mean.  Replicates use index-derived substreams.
template <class Family, class Prior, class Prop, class Theta>
ExchangeResult<Theta> averaged_exchange_step(Theta theta, int y, std::size_t n,
                                             const Family& fam, const Prior& prior, const Prop& q,
                                             Rng& rng) {
    const Theta prop = q.sample(theta, rng);
    const double th = q.value(theta), ph = q.value(prop);
    const double lq_fwd = q.log_density(theta, prop), lq_bwd = q.log_density(prop, theta);
    const int coin = rng.uniform() < 0.5 ? 1 : 2;
    const std::uint64_t salt = rng.next_u64();

    std::vector<double> logr(n);
    if (coin == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            Rng sub = substream(salt, i);
            const int u = fam.sample_latent(ph, sub);
            logr[i] = exchange_log_ratio(fam, prior, lq_fwd, lq_bwd, th, ph, y, u);
        }
        const double log_acc = log_mean_exp(logr);
        if (accept_decision(log_acc, rng)) return {prop, true, 1, log_acc};
        return {theta, false, 1, log_acc};
    }

    for (std::size_t i = 0; i < n; ++i) {
        Rng sub = substream(salt, i);
        const int u = i == 0 ? fam.sample_latent(ph, sub) : fam.sample_latent(th, sub);
        logr[i] = exchange_log_ratio(fam, prior, lq_bwd, lq_fwd, ph, th, y, u);
    }
    const double log_acc = -log_mean_exp(logr);
    if (accept_decision(log_acc, rng)) return {prop, true, 2, log_acc};
    return {theta, false, 2, log_acc};
}

// Random walk over a fixed parameter grid; out-of-range proposals stay put,
// which keeps the proposal matrix symmetric.
struct GridWalkProposal {
    std::vector<double> grid;

    int sample(int i, Rng& rng) const {
        const int j = i + (rng.uniform() < 0.5 ? 1 : -1);
        if (j < 0 || j >= static_cast<int>(grid.size())) return i;
        return j;
    }
    double log_density(int, int) const { return std::log(0.5); }
    double value(int i) const { return grid[static_cast<std::size_t>(i)]; }
};

// Exact grid posterior over theta given one observation, using the
// enumerable normaliser; reference distribution for finite-state checks.
template <class Family, class Prior>
std::vector<double> exchange_grid_posterior(const Family& fam, const Prior& prior,
                                            const std::vector<double>& grid, int y) {
    std::vector<double> lp(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        lp[i] = prior.log_density(grid[i]) + fam.log_g(grid[i], y) - fam.log_normalizer(grid[i]);
    const double lz = log_sum_exp(lp);
    std::vector<double> p(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) p[i] = std::exp(lp[i] - lz);
    return p;
}

}  // namespace aar
