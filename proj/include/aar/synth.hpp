/* Synthetic dataset generation for the two data-driven experiments.
 *
 * Both generators emit a CSV whose leading '#' comment lines record every
 * generation parameter and the seed, so a dataset file carries its own
 * provenance and can be regenerated bit for bit.
 *
 *  - lgssm: a linear-Gaussian state-space path of length T observed with
 *    noise; columns t,y.  T = 0 yields a header-only file.
 *  - changepoint: a piecewise-constant-rate event stream on [0, length],
 *    one timestamp per line, simulated segment by segment from exponential
 *    interarrivals.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aar/lgssm.hpp"
#include "aar/rng.hpp"

namespace aar {

struct SynthParams {
    // lgssm
    LgssmParams lgssm;
    double theta_star = 1.0;
    int t_len = 100;
    // changepoint
    double length = 100.0;
    std::vector<double> changepoints;  // interior breakpoints, strictly ascending
    std::vector<double> heights;       // per-segment rates, changepoints.size() + 1 of them
};

// Event times of a Poisson process whose rate steps at the breakpoints.
std::vector<double> simulate_changepoint_events(const std::vector<double>& changepoints,
                                                const std::vector<double>& heights,
                                                double length, Rng& rng);

// Full dataset file body for kind in {changepoint, lgssm}; invalid kinds
// and inconsistent parameters raise config_error.
std::string generate_synthetic(const std::string& kind, const SynthParams& p,
                               std::uint64_t seed);

void write_synthetic(const std::string& kind, const SynthParams& p, std::uint64_t seed,
                     const std::filesystem::path& path);

}  // namespace aar
