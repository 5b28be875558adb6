/* Synthetic dataset generators declared in aar/synth.hpp. */
#include "aar/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "aar/run.hpp"

namespace aar {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string joined(const std::vector<double>& xs) {
    std::string out;
    for (const double x : xs) {
        if (!out.empty()) out += ",";
        out += fmt(x);
    }
    return out;
}

void check_segments(const SynthParams& p) {
    if (p.heights.size() != p.changepoints.size() + 1)
        throw config_error("changepoint synthesis needs one height per segment (" +
                           std::to_string(p.changepoints.size() + 1) + " segments, " +
                           std::to_string(p.heights.size()) + " heights)");
    if (!(p.length > 0.0)) throw config_error("changepoint synthesis needs a positive length");
    double prev = 0.0;
    for (const double c : p.changepoints) {
        if (!(c > prev && c < p.length))
            throw config_error("changepoints must be strictly ascending inside (0, length)");
        prev = c;
    }
    for (const double h : p.heights)
        if (!(h >= 0.0) || !std::isfinite(h))
            throw config_error("segment heights must be finite and non-negative");
}

}  // namespace

std::vector<double> simulate_changepoint_events(const std::vector<double>& changepoints,
                                                const std::vector<double>& heights,
                                                double length, Rng& rng) {
    std::vector<double> events;
    double seg_start = 0.0;
    for (std::size_t j = 0; j < heights.size(); ++j) {
        const double seg_end = j < changepoints.size() ? changepoints[j] : length;
        const double h = heights[j];
        if (h > 0.0) {
            double t = seg_start;
            while (true) {
                t += -std::log(rng.uniform()) / h;
                if (t >= seg_end) break;
                events.push_back(t);
            }
        }
        seg_start = seg_end;
    }
    return events;
}

std::string generate_synthetic(const std::string& kind, const SynthParams& p,
                               std::uint64_t seed) {
    Rng rng(seed);
    std::string out;
    if (kind == "lgssm") {
        if (p.t_len < 0) throw config_error("lgssm synthesis needs t >= 0");
        if (!(std::isfinite(p.lgssm.phi) && std::abs(p.lgssm.phi) < 1.0))
            throw config_error("lgssm synthesis needs |phi| < 1");
        if (!(p.lgssm.sigma_z2 > 0.0) || !(p.lgssm.sigma_y2 > 0.0))
            throw config_error("lgssm synthesis needs positive variances");
        if (!std::isfinite(p.theta_star) || !std::isfinite(p.lgssm.a))
            throw config_error("lgssm synthesis needs finite theta_star and a");
        out += "# kind: lgssm\n";
        out += "# seed: " + std::to_string(seed) + "\n";
        out += "# theta_star: " + fmt(p.theta_star) + "\n";
        out += "# phi: " + fmt(p.lgssm.phi) + "\n";
        out += "# a: " + fmt(p.lgssm.a) + "\n";
        out += "# sigma_z2: " + fmt(p.lgssm.sigma_z2) + "\n";
        out += "# sigma_y2: " + fmt(p.lgssm.sigma_y2) + "\n";
        out += "# t: " + std::to_string(p.t_len) + "\n";
        out += "t,y\n";
        const LgssmSample sample = simulate_lgssm(p.lgssm, p.theta_star, p.t_len, rng);
        for (std::size_t t = 0; t < sample.y.size(); ++t)
            out += std::to_string(t) + "," + fmt(sample.y[t]) + "\n";
        return out;
    }
    if (kind == "changepoint") {
        check_segments(p);
        out += "# kind: changepoint\n";
        out += "# seed: " + std::to_string(seed) + "\n";
        out += "# length: " + fmt(p.length) + "\n";
        out += "# changepoints: " + joined(p.changepoints) + "\n";
        out += "# heights: " + joined(p.heights) + "\n";
        const std::vector<double> events =
            simulate_changepoint_events(p.changepoints, p.heights, p.length, rng);
        for (const double t : events) out += fmt(t) + "\n";
        return out;
    }
    throw config_error("unknown synthetic kind '" + kind +
                       "' (expected changepoint or lgssm)");
}

void write_synthetic(const std::string& kind, const SynthParams& p, std::uint64_t seed,
                     const std::filesystem::path& path) {
    const std::string body = generate_synthetic(kind, p, seed);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write dataset: " + path.string());
    out << body;
}

}  // namespace aar
