/* Experiment runner behind aar/run.hpp: config parsing and validation,
 * dataset loading or synthesis, one chain-runner per experiment, and
 * artifact emission with content hashes.
 *
 * Determinism contract: chains are scheduled over a worker pool but chain r
 * draws only from Rng(seed).child(2 + r), and every artifact is built in
 * memory and written in a fixed order after the pool joins, so output bytes
 * are independent of the thread count.
 */
#include "aar/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "aar/diagnostics.hpp"
#include "aar/exchange.hpp"
#include "aar/latent_rb.hpp"
#include "aar/lgssm.hpp"
#include "aar/mhaar.hpp"
#include "aar/parallel.hpp"
#include "aar/rjmcmc.hpp"
#include "aar/rng.hpp"
#include "aar/ssm.hpp"
#include "aar/synth.hpp"
#include "aar/toy.hpp"

namespace aar {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config tables: the kernels and parameter keys each experiment accepts.

const std::map<std::string, std::vector<std::string>>& kernel_table() {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"toy", {"mhaar"}},
        {"exchange", {"plain", "averaged"}},
        {"changepoint", {"rmj"}},
        {"latent", {"mhaar-rb", "ais"}},
        {"ssm", {"mwpg", "mhaar-rb", "mhaar-rb-r", "mhaar-s"}},
    };
    return table;
}

const std::map<std::string, std::map<std::string, double>>& param_table() {
    static const std::map<std::string, std::map<std::string, double>> table = {
        {"toy", {{"a", 5.0}, {"alpha", 0.0}}},
        {"exchange",
         {{"alphabet", 8.0},
          {"stat_scale", 1.0},
          {"y", 6.0},
          {"grid_min", -2.0},
          {"grid_max", 2.0},
          {"grid_points", 9.0},
          {"prior_mean", 0.0},
          {"prior_sd", 1.0}}},
        {"changepoint",
         {{"length", 100.0},
          {"segment_rate", 3.0},
          {"max_segments", 30.0},
          {"height_shape", 1.0},
          {"height_rate", 1.0},
          {"height_step", 0.5},
          {"position_step", 0.0}}},
        {"latent",
         {{"t", 10.0},
          {"eps", 0.3},
          {"q_sd", 0.9},
          {"w_from", 0.7},
          {"w_to", 0.3},
          {"theta_true", 0.0},
          {"theta_init", 0.0},
          {"prior_sd", 10.0},
          {"walk_sd", 0.25}}},
        {"ssm",
         {{"phi", 0.95},
          {"a", 1.0},
          {"sigma_z2", 1.0},
          {"sigma_y2", 0.1},
          {"t", 50.0},
          {"theta_true", 1.0},
          {"theta_init", 0.0},
          {"prior_sd", 100.0},
          {"walk_sd", 0.3}}},
    };
    return table;
}

std::string join(const std::vector<std::string>& xs) {
    std::string out;
    for (const auto& x : xs) {
        if (!out.empty()) out += ", ";
        out += x;
    }
    return out;
}

// Effective value of a tuning parameter: config override or table default.
double par(const ExperimentConfig& cfg, const std::string& key) {
    const auto it = cfg.params.find(key);
    if (it != cfg.params.end()) return it->second;
    return param_table().at(cfg.experiment).at(key);
}

int ipar(const ExperimentConfig& cfg, const std::string& key) {
    const double v = par(cfg, key);
    const double r = std::round(v);
    if (!(std::abs(v - r) < 1e-9))
        throw config_error("parameter '" + key + "' must be an integer, got " +
                           std::to_string(v));
    return static_cast<int>(r);
}

// ---------------------------------------------------------------------------
// Deterministic text formatting.  %.17g round-trips every double and never
// consults the locale (the process never calls setlocale).

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// Dataset input: comment lines start with '#', one leading header line is
// tolerated, and the last comma-separated field of each row is the value.

std::vector<double> read_series(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open input file: " + path.string());
    std::vector<double> out;
    std::string line;
    bool header_allowed = true;
    while (std::getline(in, line)) {
        std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos || line[begin] == '#') continue;
        const std::size_t comma = line.find_last_of(',');
        std::string field = line.substr(comma == std::string::npos ? begin : comma + 1);
        const char* s = field.c_str();
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        while (end && *end == ' ') ++end;
        if (end == s || (end && *end != '\0' && *end != '\r')) {
            if (header_allowed) {
                header_allowed = false;
                continue;
            }
            throw config_error("unparseable row in " + path.string() + ": '" + line + "'");
        }
        header_allowed = false;
        out.push_back(v);
    }
    return out;
}

// The one dataset shared by all chains of a run: events for changepoint,
// observations for latent/ssm, nothing for toy/exchange.
struct Dataset {
    std::vector<double> values;
};

Dataset prepare_dataset(const ExperimentConfig& cfg, Rng data_rng) {
    Dataset d;
    if (!cfg.input.empty()) {
        d.values = read_series(cfg.input);
        return d;
    }
    if (cfg.experiment == "changepoint") {
        // Default piecewise-constant instance: one step up at 0.4 of the
        // window, matching the synthetic generator's conventions.
        const double length = par(cfg, "length");
        d.values = simulate_changepoint_events({0.4 * length}, {1.0, 3.0}, length, data_rng);
    } else if (cfg.experiment == "latent") {
        const int t_len = ipar(cfg, "t");
        const double eps = par(cfg, "eps");
        const double theta_true = par(cfg, "theta_true");
        d.values.resize(static_cast<std::size_t>(t_len));
        for (double& y : d.values) {
            const double z = data_rng.normal(theta_true, 1.0);
            y = data_rng.normal(z, eps);
        }
    } else if (cfg.experiment == "ssm") {
        const LgssmParams p{par(cfg, "phi"), par(cfg, "a"), par(cfg, "sigma_z2"),
                            par(cfg, "sigma_y2")};
        d.values = simulate_lgssm(p, par(cfg, "theta_true"), ipar(cfg, "t"), data_rng).y;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Per-chain execution.  Each runner appends one CSV row per iteration and
// records the primary scalar series the diagnostics summarise.

struct ChainResult {
    std::string csv;
    std::vector<double> primary;
    std::int64_t accepted = 0;
    std::int64_t refresh_attempts = 0;
    std::int64_t refresh_accepts = 0;
};

ChainResult run_toy(const ExperimentConfig& cfg, Rng& rng) {
    ChainResult res;
    res.csv = "iter,theta,accepted\n";
    const ToyScheme scheme{par(cfg, "a")};
    const ToyProposal prop{par(cfg, "alpha")};
    const MhaarOptions opt{static_cast<std::size_t>(cfg.n_replicates), true};
    int theta = 1;
    for (std::int64_t i = 0; i < cfg.chain_length; ++i) {
        const auto step = mhaar_step(theta, ToyScheme::NoLatent{}, prop, scheme, opt, rng);
        theta = step.theta;
        res.accepted += step.accepted;
        res.csv += std::to_string(i) + ',' + std::to_string(theta) + ',' +
                   std::to_string(static_cast<int>(step.accepted)) + '\n';
        res.primary.push_back(theta);
    }
    return res;
}

ChainResult run_exchange(const ExperimentConfig& cfg, Rng& rng) {
    ChainResult res;
    res.csv = "iter,theta,accepted,coin\n";
    const int alphabet = ipar(cfg, "alphabet");
    DiscreteExpFamily fam;
    fam.stats.resize(static_cast<std::size_t>(alphabet));
    for (int k = 0; k < alphabet; ++k)
        fam.stats[static_cast<std::size_t>(k)] = par(cfg, "stat_scale") * k;
    const GaussianPrior prior{par(cfg, "prior_mean"), par(cfg, "prior_sd")};
    const int points = ipar(cfg, "grid_points");
    GridWalkProposal q;
    q.grid.resize(static_cast<std::size_t>(points));
    const double lo = par(cfg, "grid_min"), hi = par(cfg, "grid_max");
    for (int i = 0; i < points; ++i)
        q.grid[static_cast<std::size_t>(i)] =
            points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
    const int y = ipar(cfg, "y");
    int theta = points / 2;
    for (std::int64_t i = 0; i < cfg.chain_length; ++i) {
        const auto step =
            cfg.kernel == "plain"
                ? plain_exchange_step(theta, y, fam, prior, q, rng)
                : averaged_exchange_step(theta, y, static_cast<std::size_t>(cfg.n_replicates),
                                         fam, prior, q, rng);
        theta = step.theta;
        res.accepted += step.accepted;
        res.csv += std::to_string(i) + ',' + fmt(q.value(theta)) + ',' +
                   std::to_string(static_cast<int>(step.accepted)) + ',' +
                   std::to_string(step.coin) + '\n';
        res.primary.push_back(q.value(theta));
    }
    return res;
}

ChainResult run_changepoint(const ExperimentConfig& cfg, const Dataset& data, Rng& rng) {
    ChainResult res;
    res.csv = "iter,segments,log_posterior,accepted\n";
    ChangepointModel model;
    model.length = par(cfg, "length");
    model.events = data.values;
    std::sort(model.events.begin(), model.events.end());
    model.segment_rate = par(cfg, "segment_rate");
    model.max_segments = ipar(cfg, "max_segments");
    model.height_shape = par(cfg, "height_shape");
    model.height_rate = par(cfg, "height_rate");
    RmjOptions opt;
    opt.n_replicates = static_cast<std::size_t>(cfg.n_replicates);
    opt.within.height_step = par(cfg, "height_step");
    opt.within.position_step = par(cfg, "position_step");
    TransState st;
    st.cps = {0.0, model.length};
    st.heights = {std::max(1.0, static_cast<double>(model.events.size())) / model.length};
    for (std::int64_t i = 0; i < cfg.chain_length; ++i) {
        const auto step = rmj_step(st, model, opt, rng);
        st = step.z;
        res.accepted += step.accepted;
        res.csv += std::to_string(i) + ',' + std::to_string(st.segments()) + ',' +
                   fmt(model.log_target(st)) + ',' +
                   std::to_string(static_cast<int>(step.accepted)) + '\n';
        res.primary.push_back(st.segments());
    }
    return res;
}

ProductLatentModel build_latent_model(const ExperimentConfig& cfg, std::vector<double> y) {
    ProductLatentModel m;
    m.T = static_cast<int>(y.size());
    m.mid = cfg.bridge == "midpoint" ? MidMode::midpoint : MidMode::current;
    const double eps = par(cfg, "eps");
    const double prior_sd = par(cfg, "prior_sd");
    const double w_from = par(cfg, "w_from"), w_to = par(cfg, "w_to"), q_sd = par(cfg, "q_sd");
    m.log_gamma = [y = std::move(y), eps](int t, double theta, double z) {
        return log_normal_pdf(z, theta, 1.0) +
               log_normal_pdf(y[static_cast<std::size_t>(t)], z, eps);
    };
    m.log_prior = [prior_sd](double theta) { return log_normal_pdf(theta, 0.0, prior_sd); };
    m.sample_q = [w_from, w_to, q_sd](int, double from, double to, Rng& r) {
        return r.normal(w_from * from + w_to * to, q_sd);
    };
    m.log_q = [w_from, w_to, q_sd](int, double from, double to, double z) {
        return log_normal_pdf(z, w_from * from + w_to * to, q_sd);
    };
    return m;
}

ChainResult run_latent(const ExperimentConfig& cfg, const Dataset& data, Rng& rng) {
    ChainResult res;
    res.csv = "iter,theta,accepted,refreshed\n";
    const ProductLatentModel model = build_latent_model(cfg, data.values);
    const GaussianWalk walk{par(cfg, "walk_sd")};
    LatentRbOptions opt;
    opt.refresh = cfg.refresh == "simple"
                      ? RefreshMode::simple
                      : (cfg.refresh == "general" ? RefreshMode::general : RefreshMode::off);
    double theta = par(cfg, "theta_init");
    std::vector<double> z = data.values;
    for (std::int64_t i = 0; i < cfg.chain_length; ++i) {
        const LatentResult step =
            cfg.kernel == "ais"
                ? ais_mcmc_step(theta, z, model, walk, cfg.n_particles, rng)
                : mhaar_rb_step(theta, z, model, walk, cfg.n_particles, opt, rng);
        theta = step.theta;
        z = step.z;
        res.accepted += step.accepted;
        res.refresh_attempts += step.refresh_attempted;
        res.refresh_accepts += step.refresh_accepted;
        res.csv += std::to_string(i) + ',' + fmt(theta) + ',' +
                   std::to_string(static_cast<int>(step.accepted)) + ',' +
                   std::to_string(static_cast<int>(step.refresh_accepted)) + '\n';
        res.primary.push_back(theta);
    }
    return res;
}

ChainResult run_ssm(const ExperimentConfig& cfg, const Dataset& data, Rng& rng) {
    ChainResult res;
    res.csv = "iter,theta,accepted\n";
    const LgssmParams p{par(cfg, "phi"), par(cfg, "a"), par(cfg, "sigma_z2"),
                        par(cfg, "sigma_y2")};
    const SsmModel model = make_lgssm_model(p, data.values, par(cfg, "prior_sd"));
    const GaussianWalk walk{par(cfg, "walk_sd")};
    const ZetaSchedule zetas{cfg.bridge == "midpoint" ? ZetaMode::midpoint : ZetaMode::current};
    const int m = cfg.n_particles;
    double theta = par(cfg, "theta_init");
    std::vector<double> z = data.values;
    for (std::int64_t i = 0; i < cfg.chain_length; ++i) {
        LatentResult step;
        if (cfg.kernel == "mwpg")
            step = mwpg_step(theta, z, model, walk, m, rng);
        else if (cfg.kernel == "mhaar-rb")
            step = mhaar_rb_ssm_step(theta, z, model, walk, m, zetas, false, rng);
        else if (cfg.kernel == "mhaar-rb-r")
            step = mhaar_rb_ssm_step(theta, z, model, walk, m, zetas, true, rng);
        else
            step = mhaar_s_ssm_step(theta, z, model, walk, m, cfg.n_replicates, zetas,
                                    cfg.refresh == "swap", rng);
        theta = step.theta;
        z = step.z;
        res.accepted += step.accepted;
        res.refresh_attempts += step.refresh_attempted;
        res.refresh_accepts += step.refresh_accepted;
        res.csv += std::to_string(i) + ',' + fmt(theta) + ',' +
                   std::to_string(static_cast<int>(step.accepted)) + '\n';
        res.primary.push_back(theta);
    }
    return res;
}

ChainResult run_chain(const ExperimentConfig& cfg, const Dataset& data, Rng& rng) {
    if (cfg.experiment == "toy") return run_toy(cfg, rng);
    if (cfg.experiment == "exchange") return run_exchange(cfg, rng);
    if (cfg.experiment == "changepoint") return run_changepoint(cfg, data, rng);
    if (cfg.experiment == "latent") return run_latent(cfg, data, rng);
    return run_ssm(cfg, data, rng);
}

// ---------------------------------------------------------------------------
// Summaries.

json series_summary(const std::vector<ChainResult>& results, std::int64_t chain_length) {
    json s;
    s["acceptance_rate"] = json::array();
    s["iac"] = json::array();
    s["mean"] = json::array();
    s["se"] = json::array();
    for (const auto& r : results) {
        s["acceptance_rate"].push_back(
            chain_length > 0 ? static_cast<double>(r.accepted) / static_cast<double>(chain_length)
                             : 0.0);
        const IacResult t = iac(r.primary);
        s["iac"].push_back(t.tau);
        // Batch means need enough post-burn-in points to fill the batches;
        // short chains fall back to the plain mean.
        if (t.n_used >= 40) {
            const BatchMeansCi ci = batch_means_ci(r.primary);
            s["mean"].push_back(ci.mean);
            s["se"].push_back(ci.se);
        } else {
            double m = 0.0;
            for (double x : r.primary) m += x;
            s["mean"].push_back(r.primary.empty() ? 0.0
                                                  : m / static_cast<double>(r.primary.size()));
            s["se"].push_back(0.0);
        }
    }
    return s;
}

// Posterior segment-count histogram pooled over chains, burn-in discarded;
// normalised by construction.
json segment_histogram(const std::vector<ChainResult>& results) {
    std::map<int, std::int64_t> counts;
    std::int64_t total = 0;
    for (const auto& r : results) {
        const std::size_t burn = r.primary.size() / 4;
        for (std::size_t i = burn; i < r.primary.size(); ++i) {
            ++counts[static_cast<int>(r.primary[i])];
            ++total;
        }
    }
    json h = json::object();
    for (const auto& [m, c] : counts)
        h[std::to_string(m)] = static_cast<double>(c) / static_cast<double>(total);
    return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config serialisation.

std::string render_config(const ExperimentConfig& cfg) {
    json j;
    j["experiment"] = cfg.experiment;
    j["kernel"] = cfg.kernel;
    j["n_replicates"] = cfg.n_replicates;
    j["n_particles"] = cfg.n_particles;
    j["bridge"] = cfg.bridge;
    j["refresh"] = cfg.refresh;
    j["chain_length"] = cfg.chain_length;
    j["n_runs"] = cfg.n_runs;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["output_dir"] = cfg.output_dir;
    j["input"] = cfg.input;
    j["params"] = json::object();
    for (const auto& [k, v] : cfg.params) j["params"][k] = v;
    return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config root must be a JSON object");

    ExperimentConfig cfg;
    auto str = [&](const char* key, std::string& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_string()) throw config_error(std::string(key) + " must be a string");
        out = j[key].get<std::string>();
    };
    auto integer = [&](const char* key, auto& out, std::int64_t lo, std::int64_t hi) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer() && !j[key].is_number_unsigned())
            throw config_error(std::string(key) + " must be an integer");
        const std::int64_t v = j[key].get<std::int64_t>();
        if (v < lo || v > hi)
            throw config_error(std::string(key) + " out of range [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
        out = static_cast<std::remove_reference_t<decltype(out)>>(v);
    };
    static const std::vector<std::string> known = {
        "experiment", "kernel",  "n_replicates", "n_particles", "bridge",     "refresh",
        "chain_length", "n_runs", "seed",        "threads",     "output_dir", "input",
        "params"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw config_error("unknown config key '" + key + "'");
    }
    str("experiment", cfg.experiment);
    str("kernel", cfg.kernel);
    str("bridge", cfg.bridge);
    str("refresh", cfg.refresh);
    str("output_dir", cfg.output_dir);
    str("input", cfg.input);
    integer("n_replicates", cfg.n_replicates, 1, 1 << 20);
    integer("n_particles", cfg.n_particles, 1, 1 << 20);
    integer("chain_length", cfg.chain_length, 0, std::int64_t{1} << 40);
    integer("n_runs", cfg.n_runs, 1, 1 << 20);
    integer("threads", cfg.threads, 1, 4096);
    if (j.contains("seed")) {
        if (j["seed"].is_number_unsigned())
            cfg.seed = j["seed"].get<std::uint64_t>();
        else if (j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)
            cfg.seed = static_cast<std::uint64_t>(j["seed"].get<std::int64_t>());
        else
            throw config_error("seed must be a non-negative integer");
    }
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw config_error("params must be an object");
        for (const auto& [key, value] : j["params"].items()) {
            if (!value.is_number())
                throw config_error("param '" + key + "' must be a number");
            cfg.params[key] = value.get<double>();
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate_config(const ExperimentConfig& cfg) {
    const auto& kernels = kernel_table();
    const auto exp_it = kernels.find(cfg.experiment);
    if (exp_it == kernels.end()) {
        std::vector<std::string> names;
        for (const auto& [k, v] : kernels) names.push_back(k);
        throw config_error("unknown experiment '" + cfg.experiment + "' (expected one of " +
                           join(names) + ")");
    }
    const auto& allowed = exp_it->second;
    if (std::find(allowed.begin(), allowed.end(), cfg.kernel) == allowed.end())
        throw config_error("unknown kernel '" + cfg.kernel + "' for experiment " +
                           cfg.experiment + " (expected one of " + join(allowed) + ")");
    if (cfg.bridge != "current" && cfg.bridge != "midpoint")
        throw config_error("bridge must be 'current' or 'midpoint'");

    const auto& ptable = param_table().at(cfg.experiment);
    for (const auto& [key, value] : cfg.params) {
        (void)value;
        if (!ptable.contains(key)) {
            std::vector<std::string> names;
            for (const auto& [k, v] : ptable) names.push_back(k);
            throw config_error("unknown parameter '" + key + "' for experiment " +
                               cfg.experiment + " (expected among " + join(names) + ")");
        }
    }

    // Kernel-specific switches.  Averaging replicates only exist for the
    // kernels that average; bridges and refreshes only where defined.
    const bool takes_replicates = (cfg.experiment == "toy") ||
                                  (cfg.experiment == "changepoint") ||
                                  (cfg.kernel == "averaged") || (cfg.kernel == "mhaar-s");
    if (!takes_replicates && cfg.n_replicates != 1)
        throw config_error("kernel " + cfg.kernel + " does not take ratio replicates");
    const bool takes_bridge =
        cfg.experiment == "latent" || (cfg.experiment == "ssm" && cfg.kernel != "mwpg");
    if (!takes_bridge && cfg.bridge != "current")
        throw config_error("kernel " + cfg.kernel + " has no bridge choice");

    std::vector<std::string> refreshes = {"off"};
    if (cfg.experiment == "latent" && cfg.kernel == "mhaar-rb")
        refreshes = {"off", "simple", "general"};
    if (cfg.experiment == "ssm" && cfg.kernel == "mhaar-s") refreshes = {"off", "swap"};
    if (std::find(refreshes.begin(), refreshes.end(), cfg.refresh) == refreshes.end())
        throw config_error("refresh mode '" + cfg.refresh + "' not available for kernel " +
                           cfg.kernel + " (expected one of " + join(refreshes) + ")");
    if (cfg.refresh == "simple" && cfg.bridge != "current")
        throw config_error("the simple refresh needs the current-parameter bridge");
    if (cfg.refresh == "swap" && cfg.bridge != "current")
        throw config_error("the replicate swap needs the current-parameter bridge");
    if (cfg.experiment == "ssm" && cfg.kernel == "mhaar-rb-r" && cfg.bridge != "current")
        throw config_error("post-rejection refreshment needs the current-parameter bridge");

    if ((cfg.experiment == "latent" || cfg.experiment == "ssm") && cfg.n_particles < 2)
        throw config_error("experiment " + cfg.experiment + " needs n_particles >= 2");

    // Model-parameter sanity that should fail as a config error rather than
    // surface later as a numerical-contract violation.
    if (cfg.experiment == "ssm") {
        if (!(std::abs(par(cfg, "phi")) < 1.0)) throw config_error("ssm needs |phi| < 1");
        if (!(par(cfg, "sigma_z2") > 0.0) || !(par(cfg, "sigma_y2") > 0.0))
            throw config_error("ssm needs positive variances");
        if (!(par(cfg, "walk_sd") > 0.0) || !(par(cfg, "prior_sd") > 0.0))
            throw config_error("ssm needs positive walk_sd and prior_sd");
    }
    if (cfg.experiment == "latent") {
        if (!(par(cfg, "eps") > 0.0) || !(par(cfg, "q_sd") > 0.0))
            throw config_error("latent needs positive eps and q_sd");
        if (!(par(cfg, "walk_sd") > 0.0) || !(par(cfg, "prior_sd") > 0.0))
            throw config_error("latent needs positive walk_sd and prior_sd");
    }
    if (cfg.experiment == "changepoint") {
        if (!(par(cfg, "length") > 0.0)) throw config_error("changepoint needs a positive length");
        if (!(par(cfg, "segment_rate") > 0.0) || ipar(cfg, "max_segments") < 1)
            throw config_error("changepoint needs positive segment_rate and max_segments");
    }
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunReport run(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    const Dataset data = prepare_dataset(cfg, Rng(cfg.seed).child(0));
    if ((cfg.experiment == "latent" || cfg.experiment == "ssm") && data.values.empty())
        throw config_error("experiment " + cfg.experiment + " needs a non-empty dataset");

    std::vector<ChainResult> results(static_cast<std::size_t>(cfg.n_runs));
    parallel_for(results.size(), static_cast<unsigned>(cfg.threads), [&](std::size_t r) {
        Rng rng = Rng(cfg.seed).child(2 + r);
        results[r] = run_chain(cfg, data, rng);
    });

    std::filesystem::create_directories(cfg.output_dir);
    RunReport rep;
    rep.output_dir = cfg.output_dir;
    json artifact_list = json::array();
    auto emit = [&](const std::string& name, const std::string& body) {
        std::ofstream out(rep.output_dir / name, std::ios::binary);
        if (!out) throw config_error("cannot write artifact: " + (rep.output_dir / name).string());
        out << body;
        artifact_list.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(body))}});
        rep.artifacts.push_back(name);
    };

    std::vector<std::vector<double>> primaries;
    for (std::size_t r = 0; r < results.size(); ++r) {
        emit("chain_" + std::to_string(r) + ".csv", results[r].csv);
        primaries.push_back(results[r].primary);
    }

    const EnsembleAverage ens = ensemble_average(primaries);
    std::string ens_csv = "iter,mean,se\n";
    for (std::size_t i = 0; i < ens.mean.size(); ++i)
        ens_csv +=
            std::to_string(i) + ',' + fmt(ens.mean[i]) + ',' + fmt(ens.se[i]) + '\n';
    emit("ensemble.csv", ens_csv);

    json summary = series_summary(results, cfg.chain_length);
    if (cfg.experiment == "changepoint" && cfg.chain_length > 0)
        summary["p_m"] = segment_histogram(results);
    if (cfg.experiment == "latent" || cfg.experiment == "ssm") {
        summary["refresh_attempts"] = json::array();
        summary["refresh_accepts"] = json::array();
        for (const auto& r : results) {
            summary["refresh_attempts"].push_back(r.refresh_attempts);
            summary["refresh_accepts"].push_back(r.refresh_accepts);
        }
    }
    emit("summary.json", summary.dump(2) + "\n");

    const std::string rendered = render_config(cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json manifest;
    manifest["config"] = json::parse(rendered);
    manifest["config_hash"] = hex64(fnv1a64(rendered));
    manifest["versions"] = {{"aar", "0.1.0"}, {"artifact_format", 1}};
    manifest["artifacts"] = artifact_list;
    // The only nondeterministic bytes of the whole run live in this entry.
    manifest["timestamp"] = {
        {"unix_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count()},
        {"wall_seconds", wall}};
    std::ofstream out(rep.output_dir / "manifest.json", std::ios::binary);
    if (!out) throw config_error("cannot write manifest");
    out << manifest.dump(2) << "\n";
    rep.artifacts.push_back("manifest.json");
    return rep;
}

}  // namespace aar
