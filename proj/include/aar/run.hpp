/* Experiment runner: one config in, a directory of artifacts out.
 *
 * ExperimentConfig is the single source of truth for a run.  It renders to
 * and parses from a flat JSON document, and (config, seed) determines every
 * output byte except the manifest's timing entry.  run() executes n_runs
 * independent chains -- scheduled over a worker pool but each owning an
 * index-derived random stream, so the artifacts do not depend on the thread
 * count -- and writes per-chain CSVs, a cross-chain ensemble average, a
 * summary JSON with acceptance and autocorrelation figures, and a manifest
 * listing every artifact with a content hash.
 *
 * Stream layout: master seed s -> Rng(s) is the root.  root.child(0) is
 * reserved for synthesising a dataset when no input file is given and
 * root.child(2 + r) drives chain r; kernels split further per step and per
 * replicate through the substream helper.  Publishing the layout lets an
 * independent implementation reproduce runs bit for bit.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aar {

// Malformed config, unknown key, or missing input file; the CLI maps this
// to exit code 1 (numeric_contract_error maps to 2).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything a run needs, in fixed fields plus a per-experiment numeric
// parameter map.  Defaults are usable for every experiment.
struct ExperimentConfig {
    std::string experiment = "toy";  // toy | exchange | changepoint | latent | ssm
    std::string kernel = "mhaar";    // experiment-specific kernel id
    int n_replicates = 1;            // N: ratio replicates of the averaged kernels
    int n_particles = 8;             // M: pool slots / particles per coordinate
    std::string bridge = "current";  // current | midpoint intermediate density
    std::string refresh = "off";     // off | simple | general | swap, per kernel
    std::int64_t chain_length = 1000;
    int n_runs = 1;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string output_dir = "out";
    std::string input;  // optional dataset CSV; empty means synthesise
    std::map<std::string, double> params;

    bool operator==(const ExperimentConfig&) const = default;
};

// JSON round-trip.  parse_config(render_config(cfg)) == cfg for any valid
// config; unknown keys, wrong types, and out-of-range values are rejected
// with a config_error naming the offender.
ExperimentConfig parse_config(const std::string& text);
std::string render_config(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// Validates fields against the per-experiment kernel and parameter tables;
// throws config_error with the allowed alternatives spelled out.
void validate_config(const ExperimentConfig& cfg);

// FNV-1a 64-bit content hash, rendered into manifests as fixed-width hex.
std::uint64_t fnv1a64(std::string_view bytes);

// Names of the files written by run(), relative to output_dir; the manifest
// is always last.
struct RunReport {
    std::filesystem::path output_dir;
    std::vector<std::string> artifacts;
};

RunReport run(const ExperimentConfig& cfg);

}  // namespace aar
