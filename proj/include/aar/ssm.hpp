/* Kernels for state-space models built on a conditional particle filter.
 *
 * Target: pi(theta, z) proportional to prior(theta) * p_theta(z, y) where z
 * is a latent Markov path and p_theta factorises into an initial density, a
 * transition density, and per-step observation densities.  One filter pass
 * (slot 0 pinned to the current path) yields a T x M particle pool through
 * which M^T candidate paths run; the kernels differ in how much of that pool
 * enters the acceptance decision:
 *
 *   mwpg_step           draws one path backward through the pool at theta
 *                       and accepts the parameter move on that path alone;
 *                       the drawn path is kept either way;
 *   mhaar_rb_ssm_step   accepts on the ratio marginalised over all M^T
 *                       paths, computed by a forward sum-product pass over
 *                       pairwise slot factors in O(M^2 T);
 *   mhaar_s_ssm_step    replaces the full marginalisation with the mean over
 *                       N backward-sampled paths in O(NMT).
 *
 * The averaged kernels carry the same direction coin as the product-model
 * kernels: heads runs the filter at zeta1(theta, prop) and scores forward,
 * tails runs it at zeta2(theta, prop) and scores the inverse of the reversed
 * ratio; the schedule constraint zeta1(a, b) == zeta2(b, a) makes the two
 * branches mirror images.  Running the filter at the current parameter
 * additionally allows free post-rejection path moves: a fresh backward draw
 * (mhaar_rb) or an exchangeable pre-decision swap (mhaar_s).
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "aar/core.hpp"
#include "aar/latent_rb.hpp"
#include "aar/logspace.hpp"
#include "aar/mhaar.hpp"
#include "aar/rng.hpp"

namespace aar {

// State-space model with scalar latent states.  All densities log-domain;
// the observation sequence is part of the model so per-step weights
// log_weight(theta, t, z) = log_g_obs(theta, z, y[t]) are self-contained.
struct SsmModel {
    int T = 0;
    std::vector<double> y;
    std::function<double(double theta)> log_prior;
    std::function<double(double theta, double z1)> log_f_init;
    std::function<double(double theta, Rng& rng)> sample_f_init;
    std::function<double(double theta, double z_prev, double z_next)> log_f_trans;
    std::function<double(double theta, double z_prev, Rng& rng)> sample_f_trans;
    std::function<double(double theta, double z, double y_t)> log_g_obs;

    double log_weight(double theta, int t, double z) const {
        return log_g_obs(theta, z, y[static_cast<std::size_t>(t)]);
    }
};

// log p_theta(z, y): initial + transition + observation terms along a path.
inline double log_path_joint(const SsmModel& model, double theta, const std::vector<double>& z) {
    double total = model.log_f_init(theta, z[0]) + model.log_weight(theta, 0, z[0]);
    for (int t = 1; t < model.T; ++t)
        total += model.log_f_trans(theta, z[static_cast<std::size_t>(t) - 1], z[static_cast<std::size_t>(t)]) +
                 model.log_weight(theta, t, z[static_cast<std::size_t>(t)]);
    return require_not_nan(total, "log_path_joint");
}

// Particle pool of one filter pass plus its cached observation log weights,
// tagged with the parameter the filter ran at.
struct CsmcOutput {
    double theta = 0.0;
    ParticleMatrix particles;
    Matrix log_weights;  // [t][i] = log_weight(theta, t, particles(t, i))
};

// Observation log weights of a pool at an arbitrary parameter; reproduces
// the cached matrix bit for bit when evaluated at the run parameter.
inline Matrix observation_log_weights(const ParticleMatrix& v, double theta,
                                      const SsmModel& model) {
    Matrix lw(static_cast<std::size_t>(v.rows()),
              std::vector<double>(static_cast<std::size_t>(v.slots())));
    for (int t = 0; t < v.rows(); ++t) {
        double best = kNegInf;
        for (int i = 0; i < v.slots(); ++i) {
            const double w = require_not_nan(model.log_weight(theta, t, v.at(t, i)),
                                             "observation_log_weights");
            lw[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = w;
            best = std::max(best, w);
        }
        if (best < kLogFloor)
            throw numeric_contract_error(
                "observation_log_weights: all weights vanished at a time step");
    }
    return lw;
}

namespace detail {

// Propagate the free slots of row t (slot `first_free` onward): ancestor by
// the previous row's weights, then one transition draw.  Each slot uses its
// own derived substream, so the fill is independent of evaluation order.
inline void propagate_row(ParticleMatrix& v, Matrix& lw, int t, int first_free, double theta,
                          const SsmModel& model, std::uint64_t salt) {
    const int m = v.slots();
    for (int i = first_free; i < m; ++i) {
        Rng sub = substream(salt, static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(m) +
                                      static_cast<std::uint64_t>(i));
        if (t == 0) {
            v.at(t, i) = model.sample_f_init(theta, sub);
        } else {
            const auto a = sample_proportional(lw[static_cast<std::size_t>(t) - 1], sub);
            v.at(t, i) = model.sample_f_trans(theta, v.at(t - 1, static_cast<int>(a)), sub);
        }
    }
}

inline void weigh_row(const ParticleMatrix& v, Matrix& lw, int t, double theta,
                      const SsmModel& model) {
    double best = kNegInf;
    for (int i = 0; i < v.slots(); ++i) {
        const double w = require_not_nan(model.log_weight(theta, t, v.at(t, i)), "csmc: weight");
        lw[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = w;
        best = std::max(best, w);
    }
    if (best < kLogFloor)
        throw numeric_contract_error("csmc: all weights vanished at a time step");
}

}  // namespace detail

// Conditional bootstrap particle filter: slot 0 of every row pinned to z,
// the remaining slots initialised from the model's initial law and then
// propagated by weight-proportional ancestor draws and the transition law.
inline CsmcOutput csmc(int m, double theta, const std::vector<double>& z, const SsmModel& model,
                       Rng& rng) {
    if (m < 2) throw numeric_contract_error("csmc: needs at least two particles");
    CsmcOutput out;
    out.theta = theta;
    out.particles = ParticleMatrix(model.T, m);
    out.log_weights.assign(static_cast<std::size_t>(model.T),
                           std::vector<double>(static_cast<std::size_t>(m)));
    const std::uint64_t salt = rng.next_u64();
    for (int t = 0; t < model.T; ++t) {
        out.particles.at(t, 0) = z[static_cast<std::size_t>(t)];
        detail::propagate_row(out.particles, out.log_weights, t, 1, theta, model, salt);
        detail::weigh_row(out.particles, out.log_weights, t, theta, model);
    }
    return out;
}

// Unconditional bootstrap filter over the same output type (no pinned slot).
inline CsmcOutput smc(int m, double theta, const SsmModel& model, Rng& rng) {
    if (m < 1) throw numeric_contract_error("smc: needs at least one particle");
    CsmcOutput out;
    out.theta = theta;
    out.particles = ParticleMatrix(model.T, m);
    out.log_weights.assign(static_cast<std::size_t>(model.T),
                           std::vector<double>(static_cast<std::size_t>(m)));
    const std::uint64_t salt = rng.next_u64();
    for (int t = 0; t < model.T; ++t) {
        detail::propagate_row(out.particles, out.log_weights, t, 0, theta, model, salt);
        detail::weigh_row(out.particles, out.log_weights, t, theta, model);
    }
    return out;
}

// log of the filter's evidence estimate: sum over rows of log of the mean
// observation weight.
inline double log_evidence_estimate(const CsmcOutput& out) {
    double total = 0.0;
    for (const auto& row : out.log_weights)
        total += log_sum_exp(row) - std::log(static_cast<double>(row.size()));
    return total;
}

namespace detail {

inline const Matrix& weights_for(const CsmcOutput& out, double theta, const SsmModel& model,
                                 Matrix& scratch) {
    if (theta == out.theta) return out.log_weights;
    scratch = observation_log_weights(out.particles, theta, model);
    return scratch;
}

}  // namespace detail

// One path through the pool drawn backward: the last index proportional to
// that row's weights, then each earlier index proportional to weight times
// transition density into the already-chosen successor.
inline IndexPath backward_sample(const CsmcOutput& out, double theta, const SsmModel& model,
                                 Rng& rng) {
    Matrix scratch;
    const Matrix& lw = detail::weights_for(out, theta, model, scratch);
    const int T = out.particles.rows();
    const int m = out.particles.slots();
    IndexPath k(static_cast<std::size_t>(T));
    k[static_cast<std::size_t>(T) - 1] =
        static_cast<int>(sample_proportional(lw[static_cast<std::size_t>(T) - 1], rng));
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int t = T - 2; t >= 0; --t) {
        const double next = out.particles.at(t + 1, k[static_cast<std::size_t>(t) + 1]);
        for (int i = 0; i < m; ++i)
            w[static_cast<std::size_t>(i)] = lw[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] +
                                             model.log_f_trans(theta, out.particles.at(t, i), next);
        k[static_cast<std::size_t>(t)] = static_cast<int>(sample_proportional(w, rng));
    }
    return k;
}

// Log probability that backward_sample draws exactly k: the product of the
// normalised per-row factors it sampled from.
inline double backward_log_prob(const CsmcOutput& out, double theta, const IndexPath& k,
                                const SsmModel& model) {
    Matrix scratch;
    const Matrix& lw = detail::weights_for(out, theta, model, scratch);
    const int T = out.particles.rows();
    const int m = out.particles.slots();
    for (int t = 0; t < T; ++t)
        if (k[static_cast<std::size_t>(t)] < 0 || k[static_cast<std::size_t>(t)] >= m)
            throw numeric_contract_error("backward_log_prob: slot index out of range");
    double total = lw[static_cast<std::size_t>(T) - 1][static_cast<std::size_t>(
                       k[static_cast<std::size_t>(T) - 1])] -
                   log_sum_exp(lw[static_cast<std::size_t>(T) - 1]);
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int t = T - 2; t >= 0; --t) {
        const double next = out.particles.at(t + 1, k[static_cast<std::size_t>(t) + 1]);
        for (int i = 0; i < m; ++i)
            w[static_cast<std::size_t>(i)] = lw[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] +
                                             model.log_f_trans(theta, out.particles.at(t, i), next);
        total += w[static_cast<std::size_t>(k[static_cast<std::size_t>(t)])] - log_sum_exp(w);
    }
    return require_not_nan(total, "backward_log_prob");
}

// Single-path ratio for moving (from, za) to (to, zb) with both paths scored
// through the bridge parameter zeta: prior and walk prefactor, target-vs-
// bridge joint at zb, bridge-vs-source joint at za.
template <typename ParamProposal>
double ssm_path_log_ratio(const std::vector<double>& za, const std::vector<double>& zb,
                          double from, double to, double zeta, const SsmModel& model,
                          const ParamProposal& q) {
    return q.log_density(to, from) - q.log_density(from, to) + model.log_prior(to) -
           model.log_prior(from) + log_path_joint(model, to, zb) -
           log_path_joint(model, zeta, zb) + log_path_joint(model, zeta, za) -
           log_path_joint(model, from, za);
}

namespace detail {

// Chain factorisation of (target-at-`to` joint / bridge joint)(v^(k)) times
// the backward path law at the bridge, over slot indices k_0..k_{T-1}:
// first(i) covers row 0, pair[t-1](i, j) couples rows t-1 and t, and
// log_norm is the row-(T-1) backward normaliser that closes the path law.
struct RatioChain {
    std::vector<double> first;
    std::vector<Matrix> pair;
    double log_norm = 0.0;
};

inline RatioChain ratio_chain(const CsmcOutput& out, double to, double zeta,
                              const SsmModel& model) {
    Matrix scratch;
    const Matrix& lw = weights_for(out, zeta, model, scratch);
    const ParticleMatrix& v = out.particles;
    const int T = v.rows();
    const int m = v.slots();
    RatioChain chain;
    chain.first.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        chain.first[static_cast<std::size_t>(i)] =
            require_not_nan(model.log_f_init(to, v.at(0, i)) - model.log_f_init(zeta, v.at(0, i)) +
                                model.log_weight(to, 0, v.at(0, i)),
                            "ratio_chain: first row");
    chain.pair.reserve(static_cast<std::size_t>(T) - 1);
    std::vector<double> den(static_cast<std::size_t>(m));
    for (int t = 1; t < T; ++t) {
        // The bridge's weight and transition cancel against the backward
        // law's numerator, so each pair factor keeps only the target-at-`to`
        // transition and weight over the backward normaliser D.
        Matrix pair(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m)));
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < m; ++i)
                den[static_cast<std::size_t>(i)] =
                    lw[static_cast<std::size_t>(t) - 1][static_cast<std::size_t>(i)] +
                    require_not_nan(model.log_f_trans(zeta, v.at(t - 1, i), v.at(t, j)),
                                    "ratio_chain: bridge transition");
            const double norm = log_sum_exp(den);
            const double w_to = model.log_weight(to, t, v.at(t, j));
            for (int i = 0; i < m; ++i) {
                double& cell = pair[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if (norm == kNegInf) {
                    cell = kNegInf;  // column unreachable under the backward law
                    continue;
                }
                cell = model.log_f_trans(to, v.at(t - 1, i), v.at(t, j)) + w_to - norm;
                require_not_nan(cell, "ratio_chain: pair factor");
            }
        }
        chain.pair.push_back(std::move(pair));
    }
    chain.log_norm = log_sum_exp(lw[static_cast<std::size_t>(T) - 1]);
    return chain;
}

// Forward messages of the chain, max-normalised per row with the shifts
// accumulated separately so long chains cannot underflow.
struct ForwardMessages {
    Matrix msg;          // [t][j], each row shifted to max zero
    double log_shift = 0.0;
};

inline ForwardMessages forward_messages(const RatioChain& chain) {
    ForwardMessages fm;
    fm.msg.push_back(chain.first);
    std::vector<double> col;
    for (const Matrix& pair : chain.pair) {
        const std::size_t m = pair.size();
        std::vector<double> next(m);
        const std::vector<double>& prev = fm.msg.back();
        col.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < m; ++i) col[i] = prev[i] + pair[i][j];
            next[j] = log_sum_exp(col);
        }
        double best = kNegInf;
        for (double x : next) best = std::max(best, x);
        if (best == kNegInf) {
            fm.msg.push_back(std::move(next));
            continue;  // ratio is -inf; later rows stay at -inf
        }
        for (double& x : next) x -= best;
        fm.log_shift += best;
        fm.msg.push_back(std::move(next));
    }
    return fm;
}

inline double chain_log_sum(const RatioChain& chain, const ForwardMessages& fm) {
    return fm.log_shift + log_sum_exp(fm.msg.back()) - chain.log_norm;
}

inline double chain_log_sum(const RatioChain& chain) {
    return chain_log_sum(chain, forward_messages(chain));
}

inline IndexPath chain_sample(const RatioChain& chain, const ForwardMessages& fm, Rng& rng) {
    const std::size_t T = fm.msg.size();
    IndexPath k(T);
    k[T - 1] = static_cast<int>(sample_proportional(fm.msg[T - 1], rng));
    std::vector<double> w;
    for (std::size_t t = T - 1; t-- > 0;) {
        const std::size_t m = fm.msg[t].size();
        w.resize(m);
        for (std::size_t i = 0; i < m; ++i)
            w[i] = fm.msg[t][i] + chain.pair[t][i][static_cast<std::size_t>(k[t + 1])];
        k[t] = static_cast<int>(sample_proportional(w, rng));
    }
    return k;
}

}  // namespace detail

// Log ratio for moving (from, v^(anchor)) to (to, .) marginalised over every
// path through the pool weighted by the bridge's backward law: prior and
// walk prefactor, the bridge-vs-source correction along the anchor path, and
// the sum-product total of the pairwise chain factors.  O(M^2 T).
template <typename ParamProposal>
double rb_log_ratio_ssm(const CsmcOutput& out, double from, double to, double zeta,
                        const SsmModel& model, const ParamProposal& q, const IndexPath& anchor) {
    const std::vector<double> za = out.particles.path(anchor);
    // Grouped so that zeta == from yields an exact zero correction and the
    // result is then bit-identical across anchors.
    const double correction =
        log_path_joint(model, zeta, za) - log_path_joint(model, from, za);
    const double total = q.log_density(to, from) - q.log_density(from, to) +
                         model.log_prior(to) - model.log_prior(from) + correction +
                         detail::chain_log_sum(detail::ratio_chain(out, to, zeta, model));
    if (std::isnan(total)) return kNegInf;  // -inf chain against -inf anchor correction
    return total;
}

template <typename ParamProposal>
double rb_log_ratio_ssm(const CsmcOutput& out, double from, double to, double zeta,
                        const SsmModel& model, const ParamProposal& q) {
    return rb_log_ratio_ssm(out, from, to, zeta, model, q,
                            IndexPath(static_cast<std::size_t>(out.particles.rows()), 0));
}

// Path selection for the heads branch: draws k with probability proportional
// to (target-at-`to` / bridge)(v^(k)) times the bridge's backward law, via
// forward filtering over the chain factors and backward sampling.  The
// anchor correction is constant in k, so the law needs only `to` and `zeta`.
inline IndexPath ffbs_sample_b1(const CsmcOutput& out, double to, double zeta,
                                const SsmModel& model, Rng& rng) {
    return detail::chain_sample(detail::ratio_chain(out, to, zeta, model), rng);
}

// Which intermediate parameter the filter runs at, by move direction.  The
// mirror constraint zeta1(a, b) == zeta2(b, a) holds for both presets.
enum class ZetaMode {
    current,   // zeta1 = theta: enables free post-rejection refreshment
    midpoint,  // zeta1 = (theta + prop) / 2
};

struct ZetaSchedule {
    ZetaMode mode = ZetaMode::current;

    double zeta1(double theta, double prop) const {
        return mode == ZetaMode::current ? theta : 0.5 * (theta + prop);
    }
    double zeta2(double theta, double prop) const {
        return mode == ZetaMode::current ? prop : 0.5 * (theta + prop);
    }
};

// One step of the single-path baseline: run the filter at the current
// parameter, draw one path backward, and accept the parameter move on that
// path's plain ratio.  The drawn path replaces z whether or not the
// parameter move is accepted, so the latent state refreshes every step.
template <typename ParamProposal>
LatentResult mwpg_step(double theta, const std::vector<double>& z, const SsmModel& model,
                       const ParamProposal& q, int m, Rng& rng) {
    LatentResult res;
    res.theta = theta;
    const double prop = q.sample(theta, rng);
    const CsmcOutput out = csmc(m, theta, z, model, rng);
    const IndexPath k = backward_sample(out, theta, model, rng);
    std::vector<double> z_new = out.particles.path(k);
    res.log_accept = q.log_density(prop, theta) - q.log_density(theta, prop) +
                     model.log_prior(prop) - model.log_prior(theta) +
                     log_path_joint(model, prop, z_new) - log_path_joint(model, theta, z_new);
    if (accept_decision(res.log_accept, rng)) {
        res.accepted = true;
        res.theta = prop;
    }
    res.z = std::move(z_new);
    return res;
}

// One step of the pool-marginalised kernel.  Heads: filter at zeta1, accept
// on the marginalised ratio, select the realised path by the ratio-weighted
// law only on acceptance.  Tails: filter at zeta2, draw the candidate path
// backward, accept on the inverse of the reversed marginalised ratio
// anchored at it.  A rejected move keeps (theta, z); with refreshment on
// (current-mode schedule only), a rejected heads move replaces z by a fresh
// backward draw at theta, which is always accepted.
template <typename ParamProposal>
LatentResult mhaar_rb_ssm_step(double theta, const std::vector<double>& z, const SsmModel& model,
                               const ParamProposal& q, int m, const ZetaSchedule& zetas,
                               bool refresh, Rng& rng) {
    if (refresh && zetas.mode != ZetaMode::current)
        throw numeric_contract_error(
            "mhaar_rb_ssm_step: refreshment requires the current-parameter schedule");
    LatentResult res;
    res.theta = theta;
    res.z = z;
    const double prop = q.sample(theta, rng);
    res.coin = rng.uniform() < 0.5 ? 1 : 2;
    if (res.coin == 1) {
        const double zeta = zetas.zeta1(theta, prop);
        const CsmcOutput out = csmc(m, zeta, z, model, rng);
        res.log_accept = rb_log_ratio_ssm(out, theta, prop, zeta, model, q);
        if (accept_decision(res.log_accept, rng)) {
            res.accepted = true;
            res.theta = prop;
            res.z = out.particles.path(ffbs_sample_b1(out, prop, zeta, model, rng));
            return res;
        }
        if (refresh) {
            res.refresh_attempted = true;
            res.refresh_accepted = true;
            res.z = out.particles.path(backward_sample(out, theta, model, rng));
        }
        return res;
    }
    const double zeta = zetas.zeta2(theta, prop);
    const CsmcOutput out = csmc(m, zeta, z, model, rng);
    const IndexPath k = backward_sample(out, zeta, model, rng);
    res.log_accept = -rb_log_ratio_ssm(out, prop, theta, zeta, model, q, k);
    if (accept_decision(res.log_accept, rng)) {
        res.accepted = true;
        res.theta = prop;
        res.z = out.particles.path(k);
    }
    return res;
}

// One step of the subsampled kernel: N paths drawn backward from one filter
// pass stand in for the full marginalisation.  Heads: accept on the mean of
// the N single-path ratios and select proportionally to them; with the swap
// enabled (current-mode schedule), z first trades places with a uniformly
// chosen replicate, which refreshes the latent state even on rejection.
// Tails: a uniformly chosen replicate becomes the candidate, z takes its
// slot, and the move accepts on the inverse of the reversed mean.  Each
// replicate runs on its own derived substream.
//
// With the swap off the kernel is reversible for the target.  The swap is a
// separate exchange move over the replicate set --- valid because current z
// and the backward draws share one exchangeable law when the filter runs at
// the current parameter --- composed with the ratio step, so the combined
// kernel preserves the target without being reversible, like the
// single-path baseline.
template <typename ParamProposal>
LatentResult mhaar_s_ssm_step(double theta, const std::vector<double>& z, const SsmModel& model,
                              const ParamProposal& q, int m, int n, const ZetaSchedule& zetas,
                              bool swap_refresh, Rng& rng) {
    if (n < 1)
        throw numeric_contract_error("mhaar_s_ssm_step: needs at least one path replicate");
    LatentResult res;
    res.theta = theta;
    res.z = z;
    const double prop = q.sample(theta, rng);
    res.coin = rng.uniform() < 0.5 ? 1 : 2;
    const double zeta = res.coin == 1 ? zetas.zeta1(theta, prop) : zetas.zeta2(theta, prop);
    const CsmcOutput out = csmc(m, zeta, z, model, rng);
    const std::uint64_t salt = rng.next_u64();
    std::vector<std::vector<double>> u(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng sub = substream(salt, static_cast<std::uint64_t>(i));
        u[static_cast<std::size_t>(i)] = out.particles.path(backward_sample(out, zeta, model, sub));
    }
    std::vector<double> logr(static_cast<std::size_t>(n));
    if (res.coin == 1) {
        std::vector<double> cur = z;
        if (swap_refresh && zetas.mode == ZetaMode::current) {
            res.refresh_attempted = true;
            res.refresh_accepted = true;
            std::swap(cur, u[rng.uniform_int(static_cast<std::uint64_t>(n))]);
        }
        for (int i = 0; i < n; ++i)
            logr[static_cast<std::size_t>(i)] =
                ssm_path_log_ratio(cur, u[static_cast<std::size_t>(i)], theta, prop, zeta, model, q);
        res.log_accept = log_mean_exp(logr);
        res.z = std::move(cur);  // rejection keeps the possibly swapped path
        if (accept_decision(res.log_accept, rng)) {
            res.accepted = true;
            res.theta = prop;
            res.z = u[sample_proportional(logr, rng)];
        }
        return res;
    }
    const auto k = static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    std::vector<double> z_new = std::move(u[k]);
    u[k] = z;
    for (int i = 0; i < n; ++i)
        logr[static_cast<std::size_t>(i)] =
            ssm_path_log_ratio(z_new, u[static_cast<std::size_t>(i)], prop, theta, zeta, model, q);
    res.log_accept = -log_mean_exp(logr);
    if (accept_decision(res.log_accept, rng)) {
        res.accepted = true;
        res.theta = prop;
        res.z = std::move(z_new);
    }
    return res;
}

}  // namespace aar
