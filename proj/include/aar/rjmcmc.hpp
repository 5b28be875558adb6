/* Dimension-jumping inference for a piecewise-constant event-rate model.
 *
 * Data are event times on [0, L].  A state with m segments has ordered
 * breakpoints 0 = s_0 < ... < s_m = L and per-segment rates h_1..h_m; the
 * log likelihood is sum_j [count_j * ln h_j - h_j * (s_j - s_{j-1})].
 * Priors: truncated Poisson on the segment count, breakpoints distributed
 * as the even-numbered order statistics of 2m-1 uniforms, independent
 * Gamma rates.
 *
 * Births draw a new breakpoint uniformly and a new rate from its prior;
 * deaths remove a uniformly chosen interior breakpoint and merge segments,
 * keeping the left rate.  The pair (draw, removal index) forms the
 * self-inverse mapping consumed by the averaging engine, so the same step
 * code provides both the classic single-draw jump kernel (one replicate)
 * and the ratio-averaged variants (many replicates).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "aar/logspace.hpp"
#include "aar/mhaar.hpp"
#include "aar/rng.hpp"

namespace aar {

struct TransState {
    std::vector<double> cps;      // breakpoints incl. both ends, size m+1
    std::vector<double> heights;  // per-segment rates, size m

    int segments() const { return static_cast<int>(heights.size()); }
};

struct ChangepointModel {
    double length = 1.0;           // observation window [0, length]
    std::vector<double> events;    // sorted event times
    double segment_rate = 3.0;     // Poisson prior mean for the segment count
    int max_segments = 30;
    double height_shape = 1.0;     // Gamma prior on rates
    double height_rate = 1.0;

    int count_in(double a, double b) const {
        const auto lo = std::lower_bound(events.begin(), events.end(), a);
        const auto hi = std::lower_bound(events.begin(), events.end(), b);
        return static_cast<int>(hi - lo);
    }

    double log_lik(const TransState& st) const {
        double ll = 0.0;
        for (int j = 0; j < st.segments(); ++j) {
            const double a = st.cps[static_cast<std::size_t>(j)];
            const double b = st.cps[static_cast<std::size_t>(j) + 1];
            const double h = st.heights[static_cast<std::size_t>(j)];
            ll += count_in(a, b) * std::log(h) - h * (b - a);
        }
        return ll;
    }

    double log_height_prior(double h) const {
        return height_shape * std::log(height_rate) - std::lgamma(height_shape) +
               (height_shape - 1.0) * std::log(h) - height_rate * h;
    }

    double log_prior(const TransState& st) const {
        const int m = st.segments();
        if (m < 1 || m > max_segments) return kNegInf;
        // Truncated Poisson on the segment count (normalised over 1..max).
        double lz = kNegInf;
        for (int k = 1; k <= max_segments; ++k)
            lz = log_add(lz, k * std::log(segment_rate) - std::lgamma(k + 1.0));
        double lp = m * std::log(segment_rate) - std::lgamma(m + 1.0) - lz;
        // Breakpoints as even-numbered order statistics of 2m-1 uniforms.
        lp += std::lgamma(2.0 * m) - (2.0 * m - 1.0) * std::log(length);
        for (int j = 0; j < m; ++j) {
            const double gap =
                st.cps[static_cast<std::size_t>(j) + 1] - st.cps[static_cast<std::size_t>(j)];
            if (gap <= 0.0) return kNegInf;
            lp += std::log(gap);
        }
        for (double h : st.heights) lp += log_height_prior(h);
        return lp;
    }

    double log_target(const TransState& st) const {
        const double lp = log_prior(st);
        if (lp == kNegInf) return kNegInf;
        return lp + log_lik(st);
    }

    TransState sample_prior(Rng& rng) const {
        // Truncated Poisson by rejection.
        int m = 0;
        do {
            m = static_cast<int>(rng.poisson(segment_rate));
        } while (m < 1 || m > max_segments);
        std::vector<double> pts(static_cast<std::size_t>(2 * m - 1));
        for (double& p : pts) p = rng.uniform() * length;
        std::sort(pts.begin(), pts.end());
        TransState st;
        st.cps.push_back(0.0);
        for (int j = 1; j < m; ++j) st.cps.push_back(pts[static_cast<std::size_t>(2 * j - 1)]);
        st.cps.push_back(length);
        for (int j = 0; j < m; ++j)
            st.heights.push_back(rng.gamma(height_shape, 1.0 / height_rate));
        return st;
    }
};

// Auxiliary draw for one dimension jump: a birth carries the new breakpoint
// and rate, a death carries the interior breakpoint index to remove.
struct JumpU {
    double s = 0.0;
    double h = 0.0;
    int j = 0;  // interior breakpoint index 1..m-1 (death only)
};

// Self-inverse jump scheme between adjacent segment counts, consumed by the
// averaging engine.  The model index moves on {1..max_segments} by a
// reflecting unit walk; per-replicate ratios include target, walk and
// draw/removal densities.  Direction-weight ratios cancel for both
// supported coin conventions (symmetric, and up-moves-forward), so they do
// not appear here.
struct JumpScheme {
    const ChangepointModel* model = nullptr;

    double log_walk_density(int from, int to) const {
        // Reflecting unit walk on the segment-count range.
        if (std::abs(to - from) != 1 || to < 1 || to > model->max_segments) return kNegInf;
        if (from == 1 || from == model->max_segments) return 0.0;
        return std::log(0.5);
    }

    JumpU sample_u(int m, int m_to, const TransState&, Rng& rng) const {
        if (m_to == m + 1) {
            JumpU u;
            u.s = rng.uniform() * model->length;
            u.h = rng.gamma(model->height_shape, 1.0 / model->height_rate);
            return u;
        }
        if (m_to != m - 1 || m < 2)
            throw numeric_contract_error("jump scheme: removal requires an interior breakpoint");
        JumpU u;
        u.j = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m - 1)));
        return u;
    }

    TransState apply_z(int m, int m_to, const TransState& st, const JumpU& u) const {
        TransState out = st;
        if (m_to == m + 1) {
            // Split the segment containing u.s; the left part keeps its
            // rate, the right part takes the drawn one.
            const auto pos = std::upper_bound(out.cps.begin(), out.cps.end(), u.s);
            const auto seg = static_cast<std::size_t>(pos - out.cps.begin());  // 1-based segment
            out.cps.insert(pos, u.s);
            out.heights.insert(out.heights.begin() + static_cast<std::ptrdiff_t>(seg), u.h);
            return out;
        }
        // Merge the two segments around interior breakpoint u.j, keeping the
        // left rate.
        out.cps.erase(out.cps.begin() + u.j);
        out.heights.erase(out.heights.begin() + u.j);
        return out;
    }

    JumpU apply_u(int m, int m_to, const TransState& st, const JumpU& u) const {
        if (m_to == m + 1) {
            // The reverse draw removes the breakpoint just inserted.
            const auto pos = std::upper_bound(st.cps.begin(), st.cps.end(), u.s);
            JumpU back;
            back.j = static_cast<int>(pos - st.cps.begin());
            return back;
        }
        // The reverse draw re-inserts the removed breakpoint and right rate.
        JumpU back;
        back.s = st.cps[static_cast<std::size_t>(u.j)];
        back.h = st.heights[static_cast<std::size_t>(u.j)];
        return back;
    }

    double log_ratio(int m, int m_to, const TransState& st, const JumpU& u) const {
        const TransState next = apply_z(m, m_to, st, u);
        const double target = model->log_target(next) - model->log_target(st);
        const double walk = log_walk_density(m_to, m) - log_walk_density(m, m_to);
        if (m_to == m + 1) {
            // forward density: uniform breakpoint x prior rate; reverse
            // density: uniform removal among the m interior breakpoints of
            // the grown state.
            const double fwd = -std::log(model->length) + model->log_height_prior(u.h);
            const double bwd = -std::log(static_cast<double>(m));
            return target + walk + bwd - fwd;
        }
        const double fwd = -std::log(static_cast<double>(m - 1));
        const double bwd = -std::log(model->length) +
                           model->log_height_prior(st.heights[static_cast<std::size_t>(u.j)]);
        return target + walk + bwd - fwd;
    }
};

// Reflecting unit walk proposal over the segment count.
struct SegmentCountWalk {
    int max_segments = 30;
    int sample(int m, Rng& rng) const {
        if (m == 1) return 2;
        if (m == max_segments) return m - 1;
        return m + (rng.uniform() < 0.5 ? 1 : -1);
    }
};

// Up-moves always run the forward branch, down-moves the reverse one; the
// weight ratios cancel exactly in the per-replicate ratios.
struct UpForwardCoin {
    double operator()(int from, int to, const TransState&, int c) const {
        const int up = to > from ? 1 : 2;
        return c == up ? 1.0 : 0.0;
    }
};

struct WithinModelOptions {
    double height_step = 0.5;    // log-scale random walk width
    double position_step = 0.0;  // 0 means one twentieth of the window
};

// One deterministic sweep of fixed-dimension moves: a log-scale walk on
// every rate, then a reflected walk on every interior breakpoint.
template <class ModelT>
void within_model_sweep(TransState& st, const ModelT& model, const WithinModelOptions& opt,
                        Rng& rng) {
    const double pos_step =
        opt.position_step > 0.0 ? opt.position_step : model.length / 20.0;

    for (std::size_t j = 0; j < st.heights.size(); ++j) {
        TransState cand = st;
        cand.heights[j] = st.heights[j] * std::exp(opt.height_step * rng.normal());
        const double logr = model.log_target(cand) - model.log_target(st) +
                            std::log(cand.heights[j]) - std::log(st.heights[j]);
        if (accept_decision(logr, rng)) st = cand;
    }

    for (std::size_t j = 1; j + 1 < st.cps.size(); ++j) {
        const double lo = st.cps[j - 1], hi = st.cps[j + 1];
        double s = st.cps[j] + pos_step * rng.normal();
        // Reflect into the open interval; the fold is symmetric.
        const double width = hi - lo;
        double t = std::fmod(s - lo, 2.0 * width);
        if (t < 0.0) t += 2.0 * width;
        s = t <= width ? lo + t : lo + 2.0 * width - t;
        TransState cand = st;
        cand.cps[j] = s;
        const double logr = model.log_target(cand) - model.log_target(st);
        if (accept_decision(logr, rng)) st = cand;
    }
}

struct RmjOptions {
    std::size_t n_replicates = 1;
    bool symmetric_coin = false;  // default: up-moves forward, down-moves reverse
    WithinModelOptions within;
};

// One full step: a dimension jump through the averaging engine followed by
// a fixed-dimension sweep.
inline MhaarResult<int, TransState> rmj_step(const TransState& st, const ChangepointModel& model,
                                             const RmjOptions& opt, Rng& rng) {
    const JumpScheme scheme{&model};
    const SegmentCountWalk walk{model.max_segments};
    const MhaarOptions engine_opt{opt.n_replicates, true};
    MhaarResult<int, TransState> res;
    if (opt.symmetric_coin)
        res = mhaar_step(st.segments(), st, walk, scheme, engine_opt, rng, SymmetricCoin{});
    else
        res = mhaar_step(st.segments(), st, walk, scheme, engine_opt, rng, UpForwardCoin{});
    within_model_sweep(res.z, model, opt.within, rng);
    return res;
}

}  // namespace aar
