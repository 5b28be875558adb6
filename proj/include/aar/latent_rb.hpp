/* Kernels for product-form latent models with per-coordinate candidate pools.
 *
 * Target: pi(theta, z) proportional to prior(theta) * prod_t gamma_t(theta, z_t),
 * where z has T conditionally independent coordinates.  A step proposes a
 * parameter move theta -> prop and fills, per coordinate, a pool of M values
 * from a bridging row proposal; slot 0 of every row pins the current path.
 * The kernels differ in how a path through the pool is chosen and scored:
 *
 *   ais_mcmc_step   selects a single path by the bridge weights and accepts
 *                   on that path's ratio alone;
 *   mhaar_rb_step   accepts on the ratio marginalised over all M^T paths,
 *                   which factorises into per-row weight sums and costs
 *                   O(MT), then selects the realised path only on acceptance;
 *   refresh_latent / delayed_rejection_general
 *                   after a rejected step, re-select the kept path from the
 *                   pool at no extra simulation cost (exact re-selection when
 *                   the bridge equals the current-parameter density, an
 *                   accept/reject second stage otherwise).
 *
 * Every kernel carries a direction coin: heads fills the pool toward the
 * proposed parameter and scores forward, tails fills toward the current
 * parameter and scores the inverse of the reversed ratio.  The two branches
 * are mirror images, which keeps the composite kernel reversible even when
 * the bridge density or row proposal treats the two parameters
 * asymmetrically; for symmetric bridges the branches coincide.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "aar/logspace.hpp"
#include "aar/mhaar.hpp"
#include "aar/rng.hpp"

namespace aar {

// How the bridging density gamma_mid interpolates between the two parameters.
enum class MidMode {
    current,   // gamma_mid(t, from, to, .) = gamma(t, from, .)
    midpoint,  // gamma_mid(t, from, to, .) = gamma(t, (from+to)/2, .)
};

// Product-form latent model.  All densities are unnormalised and log-domain;
// coordinates are indexed t in [0, T).  The row proposal q is allowed to
// depend on both the source and destination parameter of the move.
struct ProductLatentModel {
    int T = 0;
    std::function<double(int t, double theta, double z)> log_gamma;
    std::function<double(double theta)> log_prior;
    std::function<double(int t, double from, double to, Rng& rng)> sample_q;
    std::function<double(int t, double from, double to, double z)> log_q;
    MidMode mid = MidMode::current;
    // Optional override for the bridging density; when set it wins over `mid`.
    std::function<double(int t, double from, double to, double z)> log_mid_override;

    double log_gamma_mid(int t, double from, double to, double z) const {
        if (log_mid_override) return log_mid_override(t, from, to, z);
        return mid == MidMode::current ? log_gamma(t, from, z)
                                       : log_gamma(t, 0.5 * (from + to), z);
    }

    // True when the bridge is exactly the current-parameter density, the
    // case in which post-rejection re-selection needs no second accept test.
    bool mid_is_current() const { return !log_mid_override && mid == MidMode::current; }
};

// T x M pool of latent values; slot 0 of each row holds the conditioned path.
class ParticleMatrix {
  public:
    ParticleMatrix() = default;
    ParticleMatrix(int rows, int slots)
        : rows_(rows), slots_(slots),
          data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(slots)) {}

    int rows() const { return rows_; }
    int slots() const { return slots_; }
    double& at(int t, int i) { return data_[static_cast<std::size_t>(t) * slots_ + i]; }
    double at(int t, int i) const { return data_[static_cast<std::size_t>(t) * slots_ + i]; }

    // The latent vector read along one slot index per row.
    std::vector<double> path(const std::vector<int>& k) const {
        std::vector<double> out(static_cast<std::size_t>(rows_));
        for (int t = 0; t < rows_; ++t) out[static_cast<std::size_t>(t)] = at(t, k[static_cast<std::size_t>(t)]);
        return out;
    }

  private:
    int rows_ = 0;
    int slots_ = 0;
    std::vector<double> data_;
};

// One slot index per row, each in [0, slots).
using IndexPath = std::vector<int>;

// Which parameter ordering feeds the row proposal when filling the pool.
enum class FillDirection { forward, backward };

// Pool with slot 0 = z and slots 1..M-1 drawn iid per row from
// q(t, theta, prop, .) (forward) or q(t, prop, theta, .) (backward).  Each
// slot draws from its own derived substream so the result is independent of
// evaluation order.
inline ParticleMatrix fill_particles(const std::vector<double>& z, double theta, double prop,
                                     const ProductLatentModel& model, int m,
                                     FillDirection direction, Rng& rng) {
    const double from = direction == FillDirection::forward ? theta : prop;
    const double to = direction == FillDirection::forward ? prop : theta;
    ParticleMatrix v(model.T, m);
    const std::uint64_t salt = rng.next_u64();
    for (int t = 0; t < model.T; ++t) {
        v.at(t, 0) = z[static_cast<std::size_t>(t)];
        for (int i = 1; i < m; ++i) {
            Rng slot_rng = substream(salt, static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(m) + static_cast<std::uint64_t>(i));
            v.at(t, i) = model.sample_q(t, from, to, slot_rng);
        }
    }
    return v;
}

// Log ratio for moving (from, v^(l)) to (to, .) judged against the whole
// pool: parameter prior and walk prefactor, the bridge-vs-source correction
// along the reference path l, and per-row log of (sum of target-at-`to`
// weights) minus log of (sum of bridge weights), all weights relative to the
// fill density q(t, from, to, .).  The caller guarantees the pool was filled
// with that same density.  Returns -inf when some row's target weights carry
// no mass; a row whose bridge weights carry no mass breaks the selection
// laws' support contract and throws.
template <typename ParamProposal>
double rb_log_ratio(const ParticleMatrix& v, const IndexPath& l, double from, double to,
                    const ProductLatentModel& model, const ParamProposal& q) {
    double total = model.log_prior(to) - model.log_prior(from) + q.log_density(to, from) -
                   q.log_density(from, to);
    std::vector<double> w_target(static_cast<std::size_t>(v.slots()));
    std::vector<double> w_bridge(static_cast<std::size_t>(v.slots()));
    for (int t = 0; t < v.rows(); ++t) {
        const double ref = v.at(t, l[static_cast<std::size_t>(t)]);
        total += require_not_nan(model.log_gamma_mid(t, from, to, ref), "rb_log_ratio: bridge") -
                 require_not_nan(model.log_gamma(t, from, ref), "rb_log_ratio: source");
        for (int i = 0; i < v.slots(); ++i) {
            const double lq = require_not_nan(model.log_q(t, from, to, v.at(t, i)), "rb_log_ratio: fill");
            w_target[static_cast<std::size_t>(i)] =
                require_not_nan(model.log_gamma(t, to, v.at(t, i)), "rb_log_ratio: target") - lq;
            w_bridge[static_cast<std::size_t>(i)] =
                require_not_nan(model.log_gamma_mid(t, from, to, v.at(t, i)), "rb_log_ratio: bridge") - lq;
        }
        const double num = log_sum_exp(w_target);
        const double den = log_sum_exp(w_bridge);
        if (den == kNegInf)
            throw numeric_contract_error("rb_log_ratio: bridge weights carry no mass in a row");
        if (num == kNegInf) return kNegInf;
        total += num - den;
    }
    return require_not_nan(total, "rb_log_ratio");
}

// Single-path counterpart: the ratio for moving (from, v^(a)) to (to, v^(b))
// scored through the bridge, with no pool marginalisation.
template <typename ParamProposal>
double single_path_log_ratio(const ParticleMatrix& v, const IndexPath& a, const IndexPath& b,
                             double from, double to, const ProductLatentModel& model,
                             const ParamProposal& q) {
    double total = model.log_prior(to) - model.log_prior(from) + q.log_density(to, from) -
                   q.log_density(from, to);
    for (int t = 0; t < v.rows(); ++t) {
        const double za = v.at(t, a[static_cast<std::size_t>(t)]);
        const double zb = v.at(t, b[static_cast<std::size_t>(t)]);
        total += model.log_gamma_mid(t, from, to, za) - model.log_gamma(t, from, za) +
                 model.log_gamma(t, to, zb) - model.log_gamma_mid(t, from, to, zb);
    }
    return require_not_nan(total, "single_path_log_ratio");
}

namespace detail {

// One categorical draw per row with log weights supplied by law(t, i).
template <typename LawFn>
IndexPath sample_path(const ParticleMatrix& v, LawFn&& law, Rng& rng) {
    IndexPath k(static_cast<std::size_t>(v.rows()));
    std::vector<double> w(static_cast<std::size_t>(v.slots()));
    for (int t = 0; t < v.rows(); ++t) {
        for (int i = 0; i < v.slots(); ++i) w[static_cast<std::size_t>(i)] = law(t, i);
        k[static_cast<std::size_t>(t)] = static_cast<int>(sample_proportional(w, rng));
    }
    return k;
}

}  // namespace detail

// Path selection by target-at-`to` weights gamma(t, to, .) / q(t, from, to, .),
// the law under which the marginalised ratio is the mean of the single-path
// ratios.  Used by the forward branch of mhaar_rb_step upon acceptance.
inline IndexPath sample_path_b1(const ParticleMatrix& v, double from, double to,
                                const ProductLatentModel& model, Rng& rng) {
    return detail::sample_path(
        v,
        [&](int t, int i) {
            return model.log_gamma(t, to, v.at(t, i)) - model.log_q(t, from, to, v.at(t, i));
        },
        rng);
}

// Path selection by bridge weights gamma_mid(t, from, to, .) / q(t, from, to, .).
// With arguments (theta, prop) this is the forward selection of
// ais_mcmc_step; with arguments (prop, theta) on a backward-filled pool it is
// the reversed-direction selection shared by both kernels' tails branch.
inline IndexPath sample_path_mid(const ParticleMatrix& v, double from, double to,
                                 const ProductLatentModel& model, Rng& rng) {
    return detail::sample_path(
        v,
        [&](int t, int i) {
            return model.log_gamma_mid(t, from, to, v.at(t, i)) -
                   model.log_q(t, from, to, v.at(t, i));
        },
        rng);
}

// Post-rejection re-selection law: current-parameter weights
// gamma(t, cur, .) / q(t, from, to, .) where (from, to) names the fill
// density actually used by the rejected step's pool.
inline IndexPath sample_path_refresh(const ParticleMatrix& v, double cur, double from, double to,
                                     const ProductLatentModel& model, Rng& rng) {
    return detail::sample_path(
        v,
        [&](int t, int i) {
            return model.log_gamma(t, cur, v.at(t, i)) - model.log_q(t, from, to, v.at(t, i));
        },
        rng);
}

// Pool with slots 0 and l_t exchanged in every row.
inline ParticleMatrix swap_paths(const ParticleMatrix& v, const IndexPath& l) {
    ParticleMatrix out = v;
    for (int t = 0; t < v.rows(); ++t) {
        const int lt = l[static_cast<std::size_t>(t)];
        out.at(t, 0) = v.at(t, lt);
        out.at(t, lt) = v.at(t, 0);
    }
    return out;
}

// Where the slots named by k land after swap_paths(v, l): per row, 0 and l_t
// trade places and every other index stays put.  Self-inverse in k for fixed
// l, and path(swap_paths(v, l), relabel_after_swap(k, l)) == path(v, k).
inline IndexPath relabel_after_swap(const IndexPath& k, const IndexPath& l) {
    IndexPath out(k.size());
    for (std::size_t t = 0; t < k.size(); ++t) {
        if (k[t] == 0)
            out[t] = l[t];
        else if (k[t] == l[t])
            out[t] = 0;
        else
            out[t] = k[t];
    }
    return out;
}

// Result of one latent-model kernel step.  `accepted` refers to the
// parameter move; a refresh stage can replace z while keeping theta.
struct LatentResult {
    double theta = 0.0;
    std::vector<double> z;
    bool accepted = false;
    int coin = 1;
    double log_accept = 0.0;
    bool refresh_attempted = false;
    bool refresh_accepted = false;
};

// What to do with the pool after a rejected parameter move.
enum class RefreshMode {
    off,      // keep z as is
    simple,   // re-select z from the pool; exact only for current-mode bridges
    general,  // re-select with the second accept/reject stage; any bridge
};

struct LatentRbOptions {
    RefreshMode refresh = RefreshMode::off;
};

// Second-stage log ratio for re-selecting the kept path after a rejected
// step: with the pool's slot-0/slot-l paths exchanged and the step's
// realised selection relabelled accordingly, the stage-one ratio is
// re-evaluated literally at that image point, and the stage-two ratio is
// log(1 - min{1, image ratio}) - log(1 - min{1, original ratio}).  For
// current-mode bridges the image equals the original and the result is 0;
// in the tails branch the exchanged pool scores identically for any bridge,
// so the result is 0 there as well.  Calling this when the first stage
// could not have been rejected is a contract violation.
template <typename ParamProposal>
double dr_stage2_log_ratio(const ParticleMatrix& v, const IndexPath& k, const IndexPath& l,
                           double theta, double prop, int coin, const ProductLatentModel& model,
                           const ParamProposal& q) {
    const ParticleMatrix image = swap_paths(v, l);
    double stage1 = 0.0;
    double stage1_image = 0.0;
    if (coin == 1) {
        const IndexPath kept(static_cast<std::size_t>(v.rows()), 0);
        stage1 = rb_log_ratio(v, kept, theta, prop, model, q);
        stage1_image = rb_log_ratio(image, kept, theta, prop, model, q);
    } else {
        stage1 = -rb_log_ratio(v, k, prop, theta, model, q);
        stage1_image = -rb_log_ratio(image, relabel_after_swap(k, l), prop, theta, model, q);
    }
    if (stage1 >= 0.0)
        throw numeric_contract_error("dr_stage2_log_ratio: first stage cannot have been rejected");
    return log1m_exp(std::min(stage1_image, 0.0)) - log1m_exp(stage1);
}

// Post-rejection re-selection for any bridge: draw the candidate path from
// the current-parameter law and accept it with the second-stage ratio.
// Returns the (possibly unchanged) latent path and whether it moved.
template <typename ParamProposal>
std::pair<std::vector<double>, bool> delayed_rejection_general(
    const ParticleMatrix& v, const IndexPath& k, double theta, double prop, int coin,
    const ProductLatentModel& model, const ParamProposal& q, Rng& rng) {
    const double fill_from = coin == 1 ? theta : prop;
    const double fill_to = coin == 1 ? prop : theta;
    const IndexPath l = sample_path_refresh(v, theta, fill_from, fill_to, model, rng);
    const double log_acc = dr_stage2_log_ratio(v, k, l, theta, prop, coin, model, q);
    if (log_acc >= 0.0 || std::log(rng.uniform()) < log_acc) return {v.path(l), true};
    IndexPath kept(static_cast<std::size_t>(v.rows()), 0);
    return {v.path(kept), false};
}

// Post-rejection re-selection for current-mode bridges: the second-stage
// ratio is identically one, so the drawn path is returned unconditionally.
// Other bridges require delayed_rejection_general and throw here.
inline std::vector<double> refresh_latent(const ParticleMatrix& v, double theta, double prop,
                                          int coin, const ProductLatentModel& model, Rng& rng) {
    if (!model.mid_is_current())
        throw numeric_contract_error(
            "refresh_latent: exact re-selection requires a current-mode bridge");
    const double fill_from = coin == 1 ? theta : prop;
    const double fill_to = coin == 1 ? prop : theta;
    const IndexPath l = sample_path_refresh(v, theta, fill_from, fill_to, model, rng);
    return v.path(l);
}

namespace detail {

template <typename ParamProposal>
void apply_refresh(LatentResult& res, const ParticleMatrix& v, const IndexPath& k, double theta,
                   double prop, int coin, const ProductLatentModel& model, const ParamProposal& q,
                   RefreshMode mode, Rng& rng) {
    if (mode == RefreshMode::off) return;
    res.refresh_attempted = true;
    if (mode == RefreshMode::simple) {
        res.z = refresh_latent(v, theta, prop, coin, model, rng);
        res.refresh_accepted = true;
    } else {
        auto [z_new, moved] = delayed_rejection_general(v, k, theta, prop, coin, model, q, rng);
        res.z = std::move(z_new);
        res.refresh_accepted = moved;
    }
}

}  // namespace detail

// One step of the pool-marginalised kernel.  Heads: fill forward, accept on
// the marginalised ratio, and only then select the realised path by the
// target law.  Tails: fill backward, select by the reversed bridge law, and
// accept on the inverse of the reversed marginalised ratio anchored at the
// selected path.  A rejected move keeps (theta, z) up to the optional
// refresh stage.
template <typename ParamProposal>
LatentResult mhaar_rb_step(double theta, const std::vector<double>& z,
                           const ProductLatentModel& model, const ParamProposal& q, int m,
                           const LatentRbOptions& opt, Rng& rng) {
    LatentResult res;
    res.theta = theta;
    res.z = z;
    const double prop = q.sample(theta, rng);
    res.coin = rng.uniform() < 0.5 ? 1 : 2;
    const IndexPath kept(static_cast<std::size_t>(model.T), 0);
    if (res.coin == 1) {
        const ParticleMatrix v = fill_particles(z, theta, prop, model, m, FillDirection::forward, rng);
        res.log_accept = rb_log_ratio(v, kept, theta, prop, model, q);
        if (res.log_accept >= 0.0 || std::log(rng.uniform()) < res.log_accept) {
            res.accepted = true;
            res.theta = prop;
            res.z = v.path(sample_path_b1(v, theta, prop, model, rng));
            return res;
        }
        detail::apply_refresh(res, v, kept, theta, prop, 1, model, q, opt.refresh, rng);
        return res;
    }
    const ParticleMatrix v = fill_particles(z, theta, prop, model, m, FillDirection::backward, rng);
    const IndexPath k = sample_path_mid(v, prop, theta, model, rng);
    res.log_accept = -rb_log_ratio(v, k, prop, theta, model, q);
    if (res.log_accept >= 0.0 || std::log(rng.uniform()) < res.log_accept) {
        res.accepted = true;
        res.theta = prop;
        res.z = v.path(k);
        return res;
    }
    detail::apply_refresh(res, v, k, theta, prop, 2, model, q, opt.refresh, rng);
    return res;
}

// One step of the single-path baseline.  Heads: fill forward, select by the
// bridge law, accept on that path's ratio.  Tails: fill backward, select by
// the reversed bridge law, accept on the inverse of that path's reversed
// ratio.  For bridges and row proposals symmetric in the parameter pair the
// two branches coincide.
template <typename ParamProposal>
LatentResult ais_mcmc_step(double theta, const std::vector<double>& z,
                           const ProductLatentModel& model, const ParamProposal& q, int m,
                           Rng& rng) {
    LatentResult res;
    res.theta = theta;
    res.z = z;
    const double prop = q.sample(theta, rng);
    res.coin = rng.uniform() < 0.5 ? 1 : 2;
    const IndexPath kept(static_cast<std::size_t>(model.T), 0);
    if (res.coin == 1) {
        const ParticleMatrix v = fill_particles(z, theta, prop, model, m, FillDirection::forward, rng);
        const IndexPath k = sample_path_mid(v, theta, prop, model, rng);
        res.log_accept = single_path_log_ratio(v, kept, k, theta, prop, model, q);
        if (res.log_accept >= 0.0 || std::log(rng.uniform()) < res.log_accept) {
            res.accepted = true;
            res.theta = prop;
            res.z = v.path(k);
        }
        return res;
    }
    const ParticleMatrix v = fill_particles(z, theta, prop, model, m, FillDirection::backward, rng);
    const IndexPath k = sample_path_mid(v, prop, theta, model, rng);
    res.log_accept = -single_path_log_ratio(v, k, kept, prop, theta, model, q);
    if (res.log_accept >= 0.0 || std::log(rng.uniform()) < res.log_accept) {
        res.accepted = true;
        res.theta = prop;
        res.z = v.path(k);
    }
    return res;
}

// Symmetric Gaussian random walk on a scalar parameter.
struct GaussianWalk {
    double sd = 0.5;

    double sample(double from, Rng& rng) const { return rng.normal(from, sd); }

    double log_density(double from, double to) const { return log_normal_pdf(to, from, sd); }
};

}  // namespace aar
