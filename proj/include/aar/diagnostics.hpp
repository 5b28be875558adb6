/* Chain output diagnostics.
 *
 * - iac: integrated autocorrelation time with the self-consistent window
 *   rule (smallest W such that W >= c * tau_hat(W)); the reported value is
 *   the factor by which correlated samples are worth less than independent
 *   ones, so estimator variance comparisons between kernels reduce to
 *   comparing their IACs on the same functional.
 * - batch_means_ci: confidence interval for the chain mean from
 *   non-overlapping batch means, robust to autocorrelation.
 * - ensemble_average: per-iteration mean and standard error across
 *   independent replicate chains, for transient/decay studies.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "aar/logspace.hpp"

namespace aar {

struct IacResult {
    double tau = 1.0;          // integrated autocorrelation time
    std::size_t window = 0;    // self-consistent truncation window
    std::size_t n_used = 0;    // points after burn-in
    bool constant_series = false;
    bool window_capped = false;     // no admissible window below the cap
    bool anticorrelated = false;    // tau below one (alternating behaviour)
};

inline IacResult iac(std::span<const double> series, double burn_in_fraction = 0.25,
                     double window_factor = 6.0) {
    IacResult res;
    const auto burn = static_cast<std::size_t>(burn_in_fraction * series.size());
    const auto xs = series.subspan(burn);
    const std::size_t n = xs.size();
    res.n_used = n;
    if (n < 4) {
        res.constant_series = true;
        return res;
    }

    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(n);

    auto autocov = [&](std::size_t t) {
        double s = 0.0;
        for (std::size_t i = 0; i + t < n; ++i) s += (xs[i] - mean) * (xs[i + t] - mean);
        return s / static_cast<double>(n);
    };

    // Relative threshold: a constant series leaves only rounding residue in
    // the autocovariance, which is perfectly correlated and would otherwise
    // masquerade as an extremely slow chain.
    const double var = autocov(0);
    if (var <= 1e-20 * (1.0 + mean * mean)) {
        res.constant_series = true;
        return res;
    }

    const std::size_t cap = n / 3;
    double tau = 1.0;
    std::size_t w = 0;
    for (w = 1; w <= cap; ++w) {
        tau += 2.0 * autocov(w) / var;
        if (static_cast<double>(w) >= window_factor * tau) break;
    }
    if (w > cap) {
        w = cap;
        res.window_capped = true;
    }
    res.tau = tau;
    res.window = w;
    res.anticorrelated = tau < 1.0;
    return res;
}

struct BatchMeansCi {
    double mean = 0.0;
    double se = 0.0;
    double half_width = 0.0;  // 1.96 * se
    std::size_t n_batches = 0;
};

inline BatchMeansCi batch_means_ci(std::span<const double> series,
                                   double burn_in_fraction = 0.25, std::size_t n_batches = 20) {
    const auto burn = static_cast<std::size_t>(burn_in_fraction * series.size());
    const auto xs = series.subspan(burn);
    const std::size_t n = xs.size();
    if (n_batches < 2 || n < 2 * n_batches)
        throw numeric_contract_error("batch_means_ci: series too short for the batch count");
    const std::size_t len = n / n_batches;

    BatchMeansCi out;
    out.n_batches = n_batches;
    std::vector<double> bm(n_batches, 0.0);
    for (std::size_t b = 0; b < n_batches; ++b) {
        for (std::size_t i = b * len; i < (b + 1) * len; ++i) bm[b] += xs[i];
        bm[b] /= static_cast<double>(len);
        out.mean += bm[b];
    }
    out.mean /= static_cast<double>(n_batches);
    double ss = 0.0;
    for (double m : bm) ss += (m - out.mean) * (m - out.mean);
    out.se = std::sqrt(ss / (n_batches - 1.0) / static_cast<double>(n_batches));
    out.half_width = 1.96 * out.se;
    return out;
}

struct EnsembleAverage {
    std::vector<double> mean;  // per-iteration mean over replicate chains
    std::vector<double> se;    // per-iteration standard error
};

inline EnsembleAverage ensemble_average(const std::vector<std::vector<double>>& chains) {
    EnsembleAverage out;
    if (chains.empty()) return out;
    const std::size_t r = chains.size();
    const std::size_t t_max = chains.front().size();
    for (const auto& c : chains)
        if (c.size() != t_max)
            throw numeric_contract_error("ensemble_average: ragged replicate lengths");
    out.mean.resize(t_max);
    out.se.resize(t_max);
    for (std::size_t t = 0; t < t_max; ++t) {
        double m = 0.0;
        for (const auto& c : chains) m += c[t];
        m /= static_cast<double>(r);
        double ss = 0.0;
        for (const auto& c : chains) ss += (c[t] - m) * (c[t] - m);
        out.mean[t] = m;
        out.se[t] = r > 1 ? std::sqrt(ss / (r - 1.0) / static_cast<double>(r)) : 0.0;
    }
    return out;
}

}  // namespace aar
