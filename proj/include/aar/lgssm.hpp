/* Linear-Gaussian state-space instance with a location parameter.
 *
 *   Z_1 ~ N(0, sigma_z2)
 *   Z_t = phi * (Z_{t-1} - (1 - a) * theta) + (1 - a) * theta + V_t,
 *         V_t ~ N(0, (1 - phi^2) * sigma_z2)
 *   Y_t = Z_t + a * theta + W_t,   W_t ~ N(0, sigma_y2)
 *
 * The innovation variance keeps the latent chain stationary at sigma_z2, and
 * the split parameter a moves theta between the transition mean (a = 0) and
 * the observation shift (a = 1) without changing the law of Y.  Everything
 * the particle kernels need is packaged as an SsmModel; kalman_loglik gives
 * the exact marginal likelihood the particle estimates are tested against.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "aar/logspace.hpp"
#include "aar/rng.hpp"
#include "aar/ssm.hpp"

namespace aar {

struct LgssmParams {
    double phi = 0.95;
    double a = 1.0;
    double sigma_z2 = 1.0;
    double sigma_y2 = 0.1;
};

namespace detail {

inline void check_lgssm(const LgssmParams& p) {
    if (!(std::isfinite(p.phi) && std::isfinite(p.a) && std::isfinite(p.sigma_z2) &&
          std::isfinite(p.sigma_y2)))
        throw numeric_contract_error("lgssm: non-finite parameter");
    if (std::abs(p.phi) >= 1.0) throw numeric_contract_error("lgssm: |phi| must be below one");
    if (p.sigma_z2 <= 0.0 || p.sigma_y2 <= 0.0)
        throw numeric_contract_error("lgssm: variances must be positive");
}

}  // namespace detail

// Exact marginal log-likelihood log l_theta(y) by the standard predict /
// update recursion on the latent mean and variance.
inline double kalman_loglik(const LgssmParams& p, double theta, std::span<const double> y) {
    detail::check_lgssm(p);
    if (!std::isfinite(theta)) throw numeric_contract_error("kalman_loglik: non-finite theta");
    const double shift = (1.0 - p.a) * theta;
    const double innovation_var = (1.0 - p.phi * p.phi) * p.sigma_z2;
    double total = 0.0;
    double mean = 0.0;
    double var = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        if (!std::isfinite(y[t])) throw numeric_contract_error("kalman_loglik: non-finite observation");
        const double mean_pred = t == 0 ? 0.0 : p.phi * (mean - shift) + shift;
        const double var_pred = t == 0 ? p.sigma_z2 : p.phi * p.phi * var + innovation_var;
        const double obs_var = var_pred + p.sigma_y2;
        total += log_normal_pdf(y[t], mean_pred + p.a * theta, std::sqrt(obs_var));
        const double gain = var_pred / obs_var;
        mean = mean_pred + gain * (y[t] - (mean_pred + p.a * theta));
        var = (1.0 - gain) * var_pred;
    }
    return total;
}

// SsmModel view of the instance for a fixed observation sequence, with a
// zero-mean Gaussian prior on theta.
inline SsmModel make_lgssm_model(const LgssmParams& p, std::vector<double> y,
                                 double prior_sd = 100.0) {
    detail::check_lgssm(p);
    if (!(prior_sd > 0.0)) throw numeric_contract_error("make_lgssm_model: prior sd must be positive");
    SsmModel model;
    model.T = static_cast<int>(y.size());
    model.y = std::move(y);
    const double init_sd = std::sqrt(p.sigma_z2);
    const double trans_sd = std::sqrt((1.0 - p.phi * p.phi) * p.sigma_z2);
    const double obs_sd = std::sqrt(p.sigma_y2);
    const double log_init_sd = std::log(init_sd);
    const double log_trans_sd = std::log(trans_sd);
    const double log_obs_sd = std::log(obs_sd);
    model.log_prior = [prior_sd](double theta) { return log_normal_pdf(theta, 0.0, prior_sd); };
    model.log_f_init = [init_sd, log_init_sd](double, double z1) {
        return log_normal_pdf(z1, 0.0, init_sd, log_init_sd);
    };
    model.sample_f_init = [init_sd](double, Rng& rng) { return rng.normal(0.0, init_sd); };
    model.log_f_trans = [p, trans_sd, log_trans_sd](double theta, double z_prev, double z_next) {
        const double shift = (1.0 - p.a) * theta;
        return log_normal_pdf(z_next, p.phi * (z_prev - shift) + shift, trans_sd, log_trans_sd);
    };
    model.sample_f_trans = [p, trans_sd](double theta, double z_prev, Rng& rng) {
        const double shift = (1.0 - p.a) * theta;
        return rng.normal(p.phi * (z_prev - shift) + shift, trans_sd);
    };
    model.log_g_obs = [p, obs_sd, log_obs_sd](double theta, double z, double y_t) {
        return log_normal_pdf(y_t, z + p.a * theta, obs_sd, log_obs_sd);
    };
    return model;
}

// One latent path and observation sequence simulated from the instance.
struct LgssmSample {
    std::vector<double> z;
    std::vector<double> y;
};

inline LgssmSample simulate_lgssm(const LgssmParams& p, double theta, int T, Rng& rng) {
    detail::check_lgssm(p);
    if (!std::isfinite(theta)) throw numeric_contract_error("simulate_lgssm: non-finite theta");
    if (T < 0) throw numeric_contract_error("simulate_lgssm: negative length");
    LgssmSample sample;
    sample.z.reserve(static_cast<std::size_t>(T));
    sample.y.reserve(static_cast<std::size_t>(T));
    const double shift = (1.0 - p.a) * theta;
    const double init_sd = std::sqrt(p.sigma_z2);
    const double trans_sd = std::sqrt((1.0 - p.phi * p.phi) * p.sigma_z2);
    const double obs_sd = std::sqrt(p.sigma_y2);
    double z = 0.0;
    for (int t = 0; t < T; ++t) {
        z = t == 0 ? rng.normal(0.0, init_sd) : rng.normal(p.phi * (z - shift) + shift, trans_sd);
        sample.z.push_back(z);
        sample.y.push_back(rng.normal(z + p.a * theta, obs_sd));
    }
    return sample;
}

}  // namespace aar
