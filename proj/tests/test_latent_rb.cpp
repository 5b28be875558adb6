#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "aar/core.hpp"
#include "aar/diagnostics.hpp"
#include "aar/latent_rb.hpp"
#include "aar/logspace.hpp"
#include "aar/rng.hpp"
#include "support/latent_letters.hpp"

using namespace aar;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Gaussian product model: per-coordinate prior N(z; theta, 1) tied to one
// observation by N(y_t; z, eps), with a row proposal centred on a convex
// combination of the two move ends so it can be made deliberately asymmetric.
ProductLatentModel gauss_model(std::vector<double> y, double eps, MidMode mid, double w_from,
                               double w_to, double q_sd) {
    ProductLatentModel m;
    m.T = static_cast<int>(y.size());
    m.mid = mid;
    m.log_gamma = [y, eps](int t, double theta, double z) {
        return log_normal_pdf(z, theta, 1.0) + log_normal_pdf(y[static_cast<std::size_t>(t)], z, eps);
    };
    m.log_prior = [](double theta) { return log_normal_pdf(theta, 0.0, 10.0); };
    m.sample_q = [w_from, w_to, q_sd](int, double from, double to, Rng& rng) {
        return rng.normal(w_from * from + w_to * to, q_sd);
    };
    m.log_q = [w_from, w_to, q_sd](int, double from, double to, double z) {
        return log_normal_pdf(z, w_from * from + w_to * to, q_sd);
    };
    return m;
}

// Marginal of one coordinate of the Gaussian model: N(y_t; theta, sqrt(1+eps^2)).
double gauss_row_marginal(double y, double theta, double eps) {
    return log_normal_pdf(y, theta, std::sqrt(1.0 + eps * eps));
}

// Every slot-index path through a T x M pool, in mixed-radix order.
std::vector<IndexPath> all_paths(int T, int M) {
    std::vector<IndexPath> out;
    IndexPath k(static_cast<std::size_t>(T), 0);
    while (true) {
        out.push_back(k);
        int t = 0;
        while (t < T && ++k[static_cast<std::size_t>(t)] == M) {
            k[static_cast<std::size_t>(t)] = 0;
            ++t;
        }
        if (t == T) break;
    }
    return out;
}

// Log selection probability of path k under per-row log weights w(t, i).
template <class WeightFn>
double log_path_prob(const ParticleMatrix& v, const IndexPath& k, WeightFn&& w) {
    double total = 0.0;
    std::vector<double> row(static_cast<std::size_t>(v.slots()));
    for (int t = 0; t < v.rows(); ++t) {
        for (int i = 0; i < v.slots(); ++i) row[static_cast<std::size_t>(i)] = w(t, i);
        total += row[static_cast<std::size_t>(k[static_cast<std::size_t>(t)])] - log_sum_exp(row);
    }
    return total;
}

double log_bridge_prob(const ParticleMatrix& v, const IndexPath& k, double from, double to,
                       const ProductLatentModel& m) {
    return log_path_prob(v, k, [&](int t, int i) {
        return m.log_gamma_mid(t, from, to, v.at(t, i)) - m.log_q(t, from, to, v.at(t, i));
    });
}

double log_target_prob(const ParticleMatrix& v, const IndexPath& k, double from, double to,
                       const ProductLatentModel& m) {
    return log_path_prob(v, k, [&](int t, int i) {
        return m.log_gamma(t, to, v.at(t, i)) - m.log_q(t, from, to, v.at(t, i));
    });
}

// Random letter pool with slot 0 unconstrained as well (for pure ratio tests
// the pool need not have come from any particular fill).
ParticleMatrix random_letter_pool(int T, int M, Rng& rng) {
    ParticleMatrix v(T, M);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < M; ++i)
            v.at(t, i) = static_cast<double>(rng.uniform_int(letters::kLetters));
    return v;
}

std::vector<std::vector<int>> pool_as_ints(const ParticleMatrix& v) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(v.rows()));
    for (int t = 0; t < v.rows(); ++t)
        for (int i = 0; i < v.slots(); ++i)
            out[static_cast<std::size_t>(t)].push_back(static_cast<int>(v.at(t, i)));
    return out;
}

IndexPath random_path(int T, int M, Rng& rng) {
    IndexPath k(static_cast<std::size_t>(T));
    for (auto& kt : k) kt = static_cast<int>(rng.uniform_int(M));
    return k;
}

// One library kernel step on the encoded letter state space.
template <class StepFn>
Matrix letter_step_matrix(StepFn&& stepper, std::size_t trials, Rng& rng) {
    return mc_transition_matrix(
        letters::kStates,
        [&](std::size_t s, Rng& sub) {
            int g = 0, z0 = 0, z1 = 0;
            letters::decode(static_cast<int>(s), g, z0, z1);
            const std::vector<double> z = {static_cast<double>(z0), static_cast<double>(z1)};
            const LatentResult res = stepper(letters::kGrid[g], z, sub);
            return static_cast<std::size_t>(letters::encode(
                letters::grid_index(res.theta), static_cast<int>(res.z[0]),
                static_cast<int>(res.z[1])));
        },
        trials, rng);
}

void check_rows_stochastic(const Matrix& p) {
    for (const auto& row : p) {
        double s = 0.0;
        for (double x : row) {
            CHECK(x >= -1e-15);
            s += x;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

double max_row_tv(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, total_variation(a[i], b[i]));
    return worst;
}

}  // namespace

TEST_CASE("pool fill pins the conditioned path and draws the rest from the row proposal") {
    ProductLatentModel m;
    m.T = 3;
    m.log_gamma = [](int, double, double) { return 0.0; };
    m.log_prior = [](double) { return 0.0; };
    m.sample_q = [](int t, double, double, Rng&) { return 10.0 * t + 1.0; };
    m.log_q = [](int, double, double, double) { return 0.0; };

    Rng rng(7);
    const std::vector<double> z = {5.0, 6.0, 7.0};
    const ParticleMatrix v = fill_particles(z, 0.2, 0.9, m, 4, FillDirection::forward, rng);
    REQUIRE(v.rows() == 3);
    REQUIRE(v.slots() == 4);
    for (int t = 0; t < 3; ++t) {
        CHECK(v.at(t, 0) == z[static_cast<std::size_t>(t)]);
        for (int i = 1; i < 4; ++i) CHECK(v.at(t, i) == 10.0 * t + 1.0);
    }

    SUBCASE("fill direction decides which move end feeds the proposal") {
        ProductLatentModel probe = m;
        probe.sample_q = [](int, double from, double to, Rng&) { return 100.0 * from + to; };
        Rng r2(9);
        const std::vector<double> z1 = {0.0};
        probe.T = 1;
        const ParticleMatrix fwd = fill_particles(z1, 2.0, 3.0, probe, 2, FillDirection::forward, r2);
        const ParticleMatrix bwd = fill_particles(z1, 2.0, 3.0, probe, 2, FillDirection::backward, r2);
        CHECK(fwd.at(0, 1) == 203.0);
        CHECK(bwd.at(0, 1) == 302.0);
    }

    SUBCASE("filled slots follow the row proposal distribution") {
        ProductLatentModel g;
        g.T = 1;
        g.log_gamma = [](int, double, double) { return 0.0; };
        g.log_prior = [](double) { return 0.0; };
        g.sample_q = [](int, double, double, Rng& r) { return r.normal(1.5, 0.8); };
        g.log_q = [](int, double, double, double zv) { return log_normal_pdf(zv, 1.5, 0.8); };
        Rng r3(41);
        const int n = 20000;
        const ParticleMatrix pool =
            fill_particles({0.0}, 0.0, 0.0, g, n + 1, FillDirection::forward, r3);
        std::vector<double> xs(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = pool.at(0, i + 1);
        std::sort(xs.begin(), xs.end());
        double d = 0.0;
        for (int i = 0; i < n; ++i) {
            const double f = std_normal_cdf((xs[static_cast<std::size_t>(i)] - 1.5) / 0.8);
            d = std::max(d, std::abs(f - (i + 1.0) / n));
            d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        }
        const double rn = std::sqrt(static_cast<double>(n));
        CHECK(d * (rn + 0.12 + 0.11 / rn) < 1.63);  // ~1% Kolmogorov-Smirnov level
    }
}

TEST_CASE("pool and single-path ratios match a probability-domain mirror on the letter tables") {
    Rng rng(101);
    for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
        const ProductLatentModel m = letters::make_model(2, mid);
        const letters::CyclicWalk walk;
        for (int rep = 0; rep < 100; ++rep) {
            const int gf = static_cast<int>(rng.uniform_int(letters::kGridSize));
            int gt = static_cast<int>(rng.uniform_int(letters::kGridSize));
            if (gt == gf) gt = (gf + 1) % letters::kGridSize;
            const double th = letters::kGrid[gf];
            const double ph = letters::kGrid[gt];
            const ParticleMatrix v = random_letter_pool(2, 3, rng);
            const auto vi = pool_as_ints(v);
            const IndexPath l = random_path(2, 3, rng);
            const std::vector<int> li(l.begin(), l.end());

            const double lib = rb_log_ratio(v, l, th, ph, m, walk);
            const double ora = letters::oracle_ratio(vi, li, th, ph, mid);
            CHECK(std::abs(lib - std::log(ora)) < 1e-12);

            const IndexPath b = random_path(2, 3, rng);
            const std::vector<int> bi(b.begin(), b.end());
            const double lib1 = single_path_log_ratio(v, l, b, th, ph, m, walk);
            const double ora1 = letters::oracle_single_ratio(vi, li, bi, th, ph, mid);
            CHECK(std::abs(lib1 - std::log(ora1)) < 1e-12);
        }
    }
}

TEST_CASE("pool ratio is the bridge-selection average of the single-path ratios") {
    Rng rng(211);
    for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
        for (const int T : {1, 2, 3}) {
            for (const int M : {2, 3, 4}) {
                std::vector<double> y(static_cast<std::size_t>(T));
                for (auto& yt : y) yt = rng.normal(0.0, 1.0);
                const ProductLatentModel m = gauss_model(y, 0.6, mid, 0.7, 0.3, 0.9);
                const GaussianWalk walk{0.5};
                const double th = rng.normal(0.0, 0.5);
                const double ph = th + rng.normal(0.0, 0.5);
                std::vector<double> z(static_cast<std::size_t>(T));
                for (auto& zt : z) zt = rng.normal(th, 1.0);
                const ParticleMatrix v = fill_particles(z, th, ph, m, M, FillDirection::forward, rng);
                const IndexPath kept(static_cast<std::size_t>(T), 0);

                const double pool_ratio = rb_log_ratio(v, kept, th, ph, m, walk);
                std::vector<double> terms;
                for (const IndexPath& k : all_paths(T, M)) {
                    const double lb = log_bridge_prob(v, k, th, ph, m);
                    const double ls = single_path_log_ratio(v, kept, k, th, ph, m, walk);
                    terms.push_back(lb + ls);
                    // Pointwise form of the same balance: selecting by target
                    // weights after the pooled ratio equals selecting by
                    // bridge weights before the single-path ratio.
                    const double lt = log_target_prob(v, k, th, ph, m);
                    CHECK(std::abs((lt + pool_ratio) - (lb + ls)) < 1e-10);
                }
                CHECK(std::abs(log_sum_exp(terms) - pool_ratio) < 1e-10);
            }
        }
    }
}

TEST_CASE("row swap relabelling is involutive and ratio-consistent") {
    Rng rng(331);
    const std::vector<double> y = {0.4, -0.7, 1.1};
    const ProductLatentModel m = gauss_model(y, 0.6, MidMode::midpoint, 0.7, 0.3, 0.9);
    const GaussianWalk walk{0.5};
    for (int rep = 0; rep < 50; ++rep) {
        const int T = 3, M = 4;
        const double th = rng.normal(0.0, 0.5);
        const double ph = th + rng.normal(0.0, 0.5);
        std::vector<double> z(static_cast<std::size_t>(T));
        for (auto& zt : z) zt = rng.normal(th, 1.0);
        const ParticleMatrix v = fill_particles(z, th, ph, m, M, FillDirection::forward, rng);
        const IndexPath k = random_path(T, M, rng);
        const IndexPath l = random_path(T, M, rng);

        const IndexPath twice = relabel_after_swap(relabel_after_swap(k, l), l);
        CHECK(twice == k);

        const ParticleMatrix w = swap_paths(v, l);
        const std::vector<double> via_image = w.path(relabel_after_swap(k, l));
        const std::vector<double> direct = v.path(k);
        CHECK(via_image == direct);

        // The pooled ratio sees only per-row multisets plus the reference
        // path, so re-anchoring at slot 0 of the swapped pool is the same
        // move.
        const double anchored = rb_log_ratio(w, IndexPath(static_cast<std::size_t>(T), 0), th, ph, m, walk);
        const double named = rb_log_ratio(v, l, th, ph, m, walk);
        CHECK(std::abs(anchored - named) < 1e-12);

        const IndexPath b = random_path(T, M, rng);
        const double s_img = single_path_log_ratio(w, relabel_after_swap(k, l),
                                                   relabel_after_swap(b, l), th, ph, m, walk);
        const double s_dir = single_path_log_ratio(v, k, b, th, ph, m, walk);
        CHECK(s_img == s_dir);
    }
}

TEST_CASE("special cases of the pool ratio") {
    Rng rng(443);
    const std::vector<double> y = {0.2, -0.4};
    const GaussianWalk walk{0.5};

    SUBCASE("current-mode bridge makes the ratio reference-path independent") {
        const ProductLatentModel m = gauss_model(y, 0.6, MidMode::current, 0.7, 0.3, 0.9);
        const double th = 0.3, ph = -0.2;
        const std::vector<double> z = {0.5, -0.1};
        const ParticleMatrix v = fill_particles(z, th, ph, m, 3, FillDirection::forward, rng);
        const double base = rb_log_ratio(v, IndexPath{0, 0}, th, ph, m, walk);
        for (const IndexPath& l : all_paths(2, 3))
            CHECK(std::abs(rb_log_ratio(v, l, th, ph, m, walk) - base) < 1e-14);

        // Direct sum-ratio form of the same quantity.
        double direct = m.log_prior(ph) - m.log_prior(th);
        for (int t = 0; t < 2; ++t) {
            std::vector<double> wt, wf;
            for (int i = 0; i < 3; ++i) {
                const double lq = m.log_q(t, th, ph, v.at(t, i));
                wt.push_back(m.log_gamma(t, ph, v.at(t, i)) - lq);
                wf.push_back(m.log_gamma(t, th, v.at(t, i)) - lq);
            }
            direct += log_sum_exp(wt) - log_sum_exp(wf);
        }
        CHECK(std::abs(base - direct) < 1e-12);
    }

    SUBCASE("a single-slot pool collapses to the plain parameter move") {
        for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
            const ProductLatentModel m = gauss_model(y, 0.6, mid, 0.7, 0.3, 0.9);
            const double th = 0.3, ph = -0.2;
            const std::vector<double> z = {0.5, -0.1};
            const ParticleMatrix v = fill_particles(z, th, ph, m, 1, FillDirection::forward, rng);
            double direct = m.log_prior(ph) - m.log_prior(th);
            for (int t = 0; t < 2; ++t)
                direct += m.log_gamma(t, ph, z[static_cast<std::size_t>(t)]) -
                          m.log_gamma(t, th, z[static_cast<std::size_t>(t)]);
            CHECK(rel_err(rb_log_ratio(v, IndexPath{0, 0}, th, ph, m, walk), direct) < 1e-12);
        }
    }

    SUBCASE("the self-move ratio is zero") {
        for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
            const ProductLatentModel m = gauss_model(y, 0.6, mid, 0.5, 0.5, 0.9);
            const double th = 0.4;
            const std::vector<double> z = {0.1, 0.6};
            const ParticleMatrix v = fill_particles(z, th, th, m, 3, FillDirection::forward, rng);
            CHECK(std::abs(rb_log_ratio(v, IndexPath{0, 0}, th, th, m, walk)) < 1e-14);
        }
    }

    SUBCASE("massless target rows reject, massless bridge rows throw") {
        ProductLatentModel m;
        m.T = 1;
        m.log_gamma = [](int, double theta, double) { return theta > 0.5 ? kNegInf : 0.0; };
        m.log_prior = [](double) { return 0.0; };
        m.sample_q = [](int, double, double, Rng&) { return 0.0; };
        m.log_q = [](int, double, double, double) { return 0.0; };
        ParticleMatrix v(1, 2);
        v.at(0, 0) = 0.0;
        v.at(0, 1) = 1.0;
        CHECK(rb_log_ratio(v, IndexPath{0}, 0.0, 1.0, m, walk) == kNegInf);

        ProductLatentModel bad = m;
        bad.log_mid_override = [](int, double, double, double) { return kNegInf; };
        CHECK_THROWS_AS(rb_log_ratio(v, IndexPath{0}, 0.0, 0.2, bad, walk),
                        numeric_contract_error);
    }
}

TEST_CASE("path selection laws draw with the advertised probabilities") {
    SUBCASE("a single-slot pool always selects slot zero") {
        ProductLatentModel m;
        m.T = 3;
        m.log_gamma = [](int, double, double) { return 0.0; };
        m.log_prior = [](double) { return 0.0; };
        m.sample_q = [](int, double, double, Rng&) { return 0.0; };
        m.log_q = [](int, double, double, double) { return 0.0; };
        ParticleMatrix v(3, 1);
        Rng rng(1);
        CHECK(sample_path_b1(v, 0.0, 1.0, m, rng) == IndexPath{0, 0, 0});
    }

    SUBCASE("flat weights select uniformly") {
        ProductLatentModel m;
        m.T = 1;
        m.log_gamma = [](int, double, double) { return -0.3; };
        m.log_prior = [](double) { return 0.0; };
        m.sample_q = [](int, double, double, Rng&) { return 0.0; };
        m.log_q = [](int, double, double, double) { return -1.0; };
        ParticleMatrix v(1, 4);
        for (int i = 0; i < 4; ++i) v.at(0, i) = i;
        Rng rng(17);
        std::array<int, 4> counts{};
        const int n = 40000;
        for (int i = 0; i < n; ++i)
            counts[static_cast<std::size_t>(sample_path_b1(v, 0.0, 1.0, m, rng)[0])]++;
        for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.012);
    }

    SUBCASE("bridge selection factorises over rows with the exact weights") {
        Rng rng(19);
        const std::vector<double> y = {0.3, -0.6};
        const ProductLatentModel m = gauss_model(y, 0.6, MidMode::midpoint, 0.7, 0.3, 0.9);
        const double th = 0.2, ph = 0.6;
        const std::vector<double> z = {0.4, -0.2};
        const ParticleMatrix v = fill_particles(z, th, ph, m, 3, FillDirection::forward, rng);
        const int n = 100000;
        Matrix counts(3, std::vector<double>(3, 0.0));
        for (int i = 0; i < n; ++i) {
            const IndexPath k = sample_path_mid(v, th, ph, m, rng);
            counts[static_cast<std::size_t>(k[0])][static_cast<std::size_t>(k[1])] += 1.0;
        }
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const double p = std::exp(log_bridge_prob(v, IndexPath{a, b}, th, ph, m));
                const double se = std::sqrt(p * (1.0 - p) / n);
                CHECK(std::abs(counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] / n - p) <
                      4.0 * se);
            }
        }
    }

    SUBCASE("re-selection law weights the pool by the current parameter") {
        const ProductLatentModel m = letters::make_model(1, MidMode::midpoint);
        const double cur = letters::kGrid[0];
        const double from = letters::kGrid[0], to = letters::kGrid[1];
        ParticleMatrix v(1, 3);
        v.at(0, 0) = 2.0;
        v.at(0, 1) = 0.0;
        v.at(0, 2) = 3.0;
        const auto q = letters::q_row(0, from, to);
        std::array<double, 3> w{};
        double total = 0.0;
        for (int i = 0; i < 3; ++i) {
            const int zi = static_cast<int>(v.at(0, i));
            w[static_cast<std::size_t>(i)] =
                std::exp(letters::log_gam(0, cur, zi)) / q[static_cast<std::size_t>(zi)];
            total += w[static_cast<std::size_t>(i)];
        }
        Rng rng(23);
        std::array<int, 3> counts{};
        const int n = 100000;
        for (int i = 0; i < n; ++i)
            counts[static_cast<std::size_t>(sample_path_refresh(v, cur, from, to, m, rng)[0])]++;
        for (int i = 0; i < 3; ++i) {
            const double p = w[static_cast<std::size_t>(i)] / total;
            const double se = std::sqrt(p * (1.0 - p) / n);
            CHECK(std::abs(counts[static_cast<std::size_t>(i)] / static_cast<double>(n) - p) < 4.0 * se);
        }
    }
}

TEST_CASE("enumerated transition matrices are reversible for every kernel and bridge") {
    const auto pi = letters::target_pi();
    for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
        for (const letters::Kernel kern : {letters::Kernel::rb, letters::Kernel::ais}) {
            INFO("mid=", mid == MidMode::current ? "current" : "midpoint",
                 " kernel=", kern == letters::Kernel::rb ? "pooled" : "single-path");
            const Matrix p = letters::oracle_matrix(mid, kern, RefreshMode::off);
            check_rows_stochastic(p);
            CHECK(detailed_balance_residual(p, pi) < 1e-12);
            CHECK(stationarity_residual(p, pi) < 1e-12);
        }
    }
}

TEST_CASE("post-rejection re-selection keeps the enumerated kernel reversible") {
    const auto pi = letters::target_pi();

    const Matrix simple = letters::oracle_matrix(MidMode::current, letters::Kernel::rb,
                                                 RefreshMode::simple);
    check_rows_stochastic(simple);
    CHECK(detailed_balance_residual(simple, pi) < 1e-12);

    const Matrix general_mid = letters::oracle_matrix(MidMode::midpoint, letters::Kernel::rb,
                                                      RefreshMode::general);
    check_rows_stochastic(general_mid);
    CHECK(detailed_balance_residual(general_mid, pi) < 1e-12);

    // With a current-mode bridge the second stage accepts surely, so the
    // guarded re-selection collapses to the simple one.
    const Matrix general_cur = letters::oracle_matrix(MidMode::current, letters::Kernel::rb,
                                                      RefreshMode::general);
    double worst = 0.0;
    for (std::size_t i = 0; i < simple.size(); ++i)
        for (std::size_t j = 0; j < simple.size(); ++j)
            worst = std::max(worst, std::abs(simple[i][j] - general_cur[i][j]));
    CHECK(worst < 1e-12);

    // Re-selection changes the latent marginal dynamics but not the target.
    CHECK(max_row_tv(simple, letters::oracle_matrix(MidMode::current, letters::Kernel::rb,
                                                    RefreshMode::off)) > 1e-3);
}

TEST_CASE("library kernels reproduce the enumerated transition matrices") {
    const std::size_t trials = 60000;
    const double tol = 0.025;

    struct Variant {
        const char* name;
        MidMode mid;
        letters::Kernel kern;
        RefreshMode refresh;
    };
    const Variant variants[] = {
        {"pooled current", MidMode::current, letters::Kernel::rb, RefreshMode::off},
        {"pooled midpoint", MidMode::midpoint, letters::Kernel::rb, RefreshMode::off},
        {"single-path current", MidMode::current, letters::Kernel::ais, RefreshMode::off},
        {"single-path midpoint", MidMode::midpoint, letters::Kernel::ais, RefreshMode::off},
        {"pooled current + re-selection", MidMode::current, letters::Kernel::rb, RefreshMode::simple},
        {"pooled midpoint + guarded re-selection", MidMode::midpoint, letters::Kernel::rb,
         RefreshMode::general},
    };

    const auto pi = letters::target_pi();
    int salt = 0;
    for (const Variant& var : variants) {
        INFO(var.name);
        const ProductLatentModel m = letters::make_model(2, var.mid);
        const letters::CyclicWalk walk;
        Rng rng(900 + salt++);
        Matrix mc;
        if (var.kern == letters::Kernel::rb) {
            const LatentRbOptions opt{var.refresh};
            mc = letter_step_matrix(
                [&](double th, const std::vector<double>& z, Rng& sub) {
                    return mhaar_rb_step(th, z, m, walk, 2, opt, sub);
                },
                trials, rng);
        } else {
            mc = letter_step_matrix(
                [&](double th, const std::vector<double>& z, Rng& sub) {
                    return ais_mcmc_step(th, z, m, walk, 2, sub);
                },
                trials, rng);
        }
        const Matrix exact = letters::oracle_matrix(var.mid, var.kern, var.refresh);
        CHECK(max_row_tv(mc, exact) < tol);
        CHECK(detailed_balance_zscore(mc, pi, trials) < 5.0);
    }
}

TEST_CASE("second-stage re-selection ratio") {
    Rng rng(547);
    const std::vector<double> y = {0.3, -0.5, 0.9};
    const GaussianWalk walk{0.5};
    const int T = 3, M = 3;

    SUBCASE("vanishes for current-mode bridges and for the reversed branch") {
        for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
            const ProductLatentModel m = gauss_model(y, 0.6, mid, 0.5, 0.5, 0.9);
            const bool test_forward = mid == MidMode::current;  // reversed branch: any bridge
            int hits_fwd = test_forward ? 0 : 8, hits_bwd = 0;
            for (int rep = 0; rep < 300 && (hits_fwd < 8 || hits_bwd < 8); ++rep) {
                const double th = rng.normal(0.0, 0.4);
                const double ph = th + rng.normal(0.0, 0.6);
                std::vector<double> z(static_cast<std::size_t>(T));
                for (auto& zt : z) zt = rng.normal(th, 1.0);
                const IndexPath kept(static_cast<std::size_t>(T), 0);
                const IndexPath l = random_path(T, M, rng);

                if (test_forward && hits_fwd < 8) {
                    const ParticleMatrix vf =
                        fill_particles(z, th, ph, m, M, FillDirection::forward, rng);
                    if (rb_log_ratio(vf, kept, th, ph, m, walk) < 0.0) {
                        ++hits_fwd;
                        CHECK(std::abs(dr_stage2_log_ratio(vf, kept, l, th, ph, 1, m, walk)) < 1e-12);
                    }
                }

                if (hits_bwd < 8) {
                    const ParticleMatrix vb =
                        fill_particles(z, th, ph, m, M, FillDirection::backward, rng);
                    for (const IndexPath& k : all_paths(T, M)) {
                        if (-rb_log_ratio(vb, k, ph, th, m, walk) < 0.0) {
                            ++hits_bwd;
                            CHECK(std::abs(dr_stage2_log_ratio(vb, k, l, th, ph, 2, m, walk)) < 1e-12);
                            break;
                        }
                    }
                }
            }
            CHECK(hits_fwd >= 8);
            CHECK(hits_bwd >= 8);
        }
    }

    SUBCASE("forward branch matches the raw rejection-probability fraction") {
        const ProductLatentModel m = letters::make_model(2, MidMode::midpoint);
        const letters::CyclicWalk cwalk;
        int hits = 0;
        for (int rep = 0; rep < 400 && hits < 25; ++rep) {
            const int gf = static_cast<int>(rng.uniform_int(letters::kGridSize));
            int gt = static_cast<int>(rng.uniform_int(letters::kGridSize));
            if (gt == gf) gt = (gf + 1) % letters::kGridSize;
            const double th = letters::kGrid[gf];
            const double ph = letters::kGrid[gt];
            const ParticleMatrix v = random_letter_pool(2, 3, rng);
            const auto vi = pool_as_ints(v);
            const IndexPath kept{0, 0};
            const IndexPath l = random_path(2, 3, rng);
            const std::vector<int> ki{0, 0};
            const double s1 = letters::oracle_ratio(vi, ki, th, ph, MidMode::midpoint);
            if (s1 >= 1.0) continue;
            auto wi = vi;
            for (int t = 0; t < 2; ++t)
                std::swap(wi[static_cast<std::size_t>(t)][0],
                          wi[static_cast<std::size_t>(t)][static_cast<std::size_t>(
                              l[static_cast<std::size_t>(t)])]);
            const double s1i = letters::oracle_ratio(wi, ki, th, ph, MidMode::midpoint);
            const double lib = dr_stage2_log_ratio(v, kept, l, th, ph, 1, m, cwalk);
            if (s1i >= 1.0) {
                CHECK(lib == kNegInf);
            } else {
                CHECK(std::abs(lib - std::log((1.0 - s1i) / (1.0 - s1))) < 1e-10);
            }
            ++hits;
        }
        CHECK(hits >= 25);
    }

    SUBCASE("claims a contract violation when the first stage could not reject") {
        const ProductLatentModel m = gauss_model(y, 0.6, MidMode::midpoint, 0.5, 0.5, 0.9);
        bool found = false;
        for (int rep = 0; rep < 200 && !found; ++rep) {
            const double ph = rng.normal(0.0, 0.4);
            const double th = ph + rng.normal(0.0, 1.0);
            std::vector<double> z(static_cast<std::size_t>(T));
            for (auto& zt : z) zt = rng.normal(ph, 0.3);
            const ParticleMatrix v = fill_particles(z, th, ph, m, M, FillDirection::forward, rng);
            const IndexPath kept(static_cast<std::size_t>(T), 0);
            if (rb_log_ratio(v, kept, th, ph, m, walk) >= 0.0) {
                found = true;
                CHECK_THROWS_AS(
                    dr_stage2_log_ratio(v, kept, kept, th, ph, 1, m, walk),
                    numeric_contract_error);
            }
        }
        CHECK(found);
    }
}

TEST_CASE("guarded re-selection moves or keeps the conditioned path") {
    Rng rng(661);
    const std::vector<double> y = {0.3, -0.5, 0.9};
    const ProductLatentModel m = gauss_model(y, 0.6, MidMode::midpoint, 0.5, 0.5, 0.9);
    const GaussianWalk walk{0.5};
    const int T = 3, M = 3;
    int moved = 0, kept_ct = 0;
    for (int rep = 0; rep < 400 && (moved < 10 || kept_ct < 10); ++rep) {
        const double th = rng.normal(0.0, 0.4);
        const double ph = th + rng.normal(0.0, 0.8);
        std::vector<double> z(static_cast<std::size_t>(T));
        for (auto& zt : z) zt = rng.normal(th, 1.0);
        const ParticleMatrix v = fill_particles(z, th, ph, m, M, FillDirection::forward, rng);
        const IndexPath kept(static_cast<std::size_t>(T), 0);
        if (rb_log_ratio(v, kept, th, ph, m, walk) >= 0.0) continue;
        const auto [z_new, did_move] = delayed_rejection_general(v, kept, th, ph, 1, m, walk, rng);
        if (did_move) {
            ++moved;
            // The returned path must consist of pool values, row by row.
            for (int t = 0; t < T; ++t) {
                bool in_pool = false;
                for (int i = 0; i < M; ++i)
                    in_pool = in_pool || z_new[static_cast<std::size_t>(t)] == v.at(t, i);
                CHECK(in_pool);
            }
        } else {
            ++kept_ct;
            CHECK(z_new == z);
        }
    }
    CHECK(moved >= 10);
    CHECK(kept_ct >= 10);
}

TEST_CASE("pool ratio is an unbiased marginal-ratio estimate") {
    SUBCASE("exactly, by enumeration on the letter tables") {
        for (const MidMode mid : {MidMode::current, MidMode::midpoint}) {
            for (const auto& [gf, gt] : {std::pair{0, 1}, std::pair{2, 0}}) {
                const ProductLatentModel m = letters::make_model(2, mid);
                const letters::CyclicWalk walk;
                const double th = letters::kGrid[gf];
                const double ph = letters::kGrid[gt];

                double s_from[2] = {0.0, 0.0}, s_to[2] = {0.0, 0.0};
                for (int t = 0; t < 2; ++t) {
                    for (int zv = 0; zv < letters::kLetters; ++zv) {
                        s_from[t] += std::exp(letters::log_gam(t, th, zv));
                        s_to[t] += std::exp(letters::log_gam(t, ph, zv));
                    }
                }
                const double expected = std::exp(letters::log_prior(ph) - letters::log_prior(th)) *
                                        (s_to[0] / s_from[0]) * (s_to[1] / s_from[1]);

                const auto q0 = letters::q_row(0, th, ph);
                const auto q1 = letters::q_row(1, th, ph);
                double mean = 0.0;
                for (int a0 = 0; a0 < letters::kLetters; ++a0) {
                    for (int a1 = 0; a1 < letters::kLetters; ++a1) {
                        for (int f0 = 0; f0 < letters::kLetters; ++f0) {
                            for (int f1 = 0; f1 < letters::kLetters; ++f1) {
                                const double weight =
                                    std::exp(letters::log_gam(0, th, a0)) / s_from[0] *
                                    std::exp(letters::log_gam(1, th, a1)) / s_from[1] *
                                    q0[static_cast<std::size_t>(f0)] * q1[static_cast<std::size_t>(f1)];
                                ParticleMatrix v(2, 2);
                                v.at(0, 0) = a0;
                                v.at(0, 1) = f0;
                                v.at(1, 0) = a1;
                                v.at(1, 1) = f1;
                                mean += weight *
                                        std::exp(rb_log_ratio(v, IndexPath{0, 0}, th, ph, m, walk));
                            }
                        }
                    }
                }
                CHECK(rel_err(mean, expected) < 1e-12);
            }
        }
    }

    SUBCASE("by Monte Carlo on the Gaussian model") {
        const std::vector<double> y = {0.3, -0.5, 0.8, 0.1};
        const double eps = 0.6;
        const ProductLatentModel m = gauss_model(y, eps, MidMode::midpoint, 0.5, 0.5, 1.0);
        const GaussianWalk walk{0.5};
        const double th = 0.2, ph = 0.5;

        double log_expected = m.log_prior(ph) - m.log_prior(th);
        for (std::size_t t = 0; t < y.size(); ++t)
            log_expected += gauss_row_marginal(y[t], ph, eps) - gauss_row_marginal(y[t], th, eps);
        const double expected = std::exp(log_expected);

        // Conditioned path drawn from its exact conditional given theta.
        const double lam = 1.0 + 1.0 / (eps * eps);
        const double post_sd = 1.0 / std::sqrt(lam);
        const int reps = 20000;
        Rng rng(733);
        const std::uint64_t salt = rng.next_u64();
        double sum = 0.0, sum_sq = 0.0;
        for (int r = 0; r < reps; ++r) {
            Rng sub = substream(salt, static_cast<std::uint64_t>(r));
            std::vector<double> z(y.size());
            for (std::size_t t = 0; t < y.size(); ++t)
                z[t] = sub.normal((th + y[t] / (eps * eps)) / lam, post_sd);
            const ParticleMatrix v = fill_particles(z, th, ph, m, 8, FillDirection::forward, sub);
            const double w = std::exp(rb_log_ratio(v, IndexPath(y.size(), 0), th, ph, m, walk));
            sum += w;
            sum_sq += w * w;
        }
        const double mean = sum / reps;
        const double var = (sum_sq / reps - mean * mean) / (reps - 1.0);
        CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(var));
    }
}

TEST_CASE("kernel step bookkeeping") {
    Rng rng(881);

    SUBCASE("rejected steps keep the state, accepted steps move on the grid") {
        const ProductLatentModel m = letters::make_model(2, MidMode::midpoint);
        const letters::CyclicWalk walk;
        double th = letters::kGrid[0];
        std::vector<double> z = {1.0, 2.0};
        int n_acc = 0, n_rej = 0;
        for (int i = 0; i < 300; ++i) {
            const LatentResult res = mhaar_rb_step(th, z, m, walk, 2, LatentRbOptions{}, rng);
            CHECK((res.coin == 1 || res.coin == 2));
            CHECK(!res.refresh_attempted);
            if (res.accepted) {
                ++n_acc;
                CHECK(res.theta != th);
                letters::grid_index(res.theta);  // throws if off the grid
            } else {
                ++n_rej;
                CHECK(res.theta == th);
                CHECK(res.z == z);
            }
            th = res.theta;
            z = res.z;
        }
        CHECK(n_acc > 0);
        CHECK(n_rej > 0);
    }

    SUBCASE("re-selection only ever fires on rejection and keeps the parameter") {
        const ProductLatentModel m = letters::make_model(2, MidMode::current);
        const letters::CyclicWalk walk;
        const LatentRbOptions opt{RefreshMode::simple};
        double th = letters::kGrid[1];
        std::vector<double> z = {0.0, 3.0};
        int n_refreshed = 0;
        for (int i = 0; i < 300; ++i) {
            const std::vector<double> z_before = z;
            const double th_before = th;
            const LatentResult res = mhaar_rb_step(th, z, m, walk, 2, opt, rng);
            if (res.accepted) {
                CHECK(!res.refresh_attempted);
            } else {
                CHECK(res.theta == th_before);
                CHECK(res.refresh_attempted);
                CHECK(res.refresh_accepted);  // exact re-selection never declines
                if (res.z != z_before) ++n_refreshed;
            }
            th = res.theta;
            z = res.z;
        }
        CHECK(n_refreshed > 0);
    }

    SUBCASE("exact re-selection refuses non-current bridges") {
        const ProductLatentModel m = letters::make_model(2, MidMode::midpoint);
        ParticleMatrix v(2, 2);
        v.at(0, 0) = 0.0;
        v.at(0, 1) = 1.0;
        v.at(1, 0) = 2.0;
        v.at(1, 1) = 3.0;
        CHECK_THROWS_AS(
            refresh_latent(v, letters::kGrid[0], letters::kGrid[1], 1, m, rng),
            numeric_contract_error);
    }

    SUBCASE("single-path kernel stays on the grid and in the alphabet") {
        const ProductLatentModel m = letters::make_model(2, MidMode::midpoint);
        const letters::CyclicWalk walk;
        double th = letters::kGrid[2];
        std::vector<double> z = {1.0, 1.0};
        int n_acc = 0;
        for (int i = 0; i < 300; ++i) {
            const LatentResult res = ais_mcmc_step(th, z, m, walk, 2, rng);
            letters::grid_index(res.theta);
            for (double zt : res.z) {
                CHECK(zt >= 0.0);
                CHECK(zt < letters::kLetters);
            }
            if (res.accepted) ++n_acc;
            th = res.theta;
            z = res.z;
        }
        CHECK(n_acc > 0);
    }
}

TEST_CASE("pool marginalisation mixes the parameter faster than the single-path baseline") {
    const std::vector<double> y = {0.47, -1.13, 0.29, -0.36, 1.05, -0.17, 0.64, -0.88};
    const double eps = 0.35;
    const ProductLatentModel m = gauss_model(y, eps, MidMode::midpoint, 0.5, 0.5, 1.0);
    const GaussianWalk walk{0.25};
    const int M = 8;
    const int iters = 15000;

    auto chain_tau = [&](bool pooled, std::uint64_t seed) {
        Rng rng(seed);
        double th = 0.0;
        std::vector<double> z = y;
        std::vector<double> series(static_cast<std::size_t>(iters));
        for (int i = 0; i < iters; ++i) {
            const LatentResult res =
                pooled ? mhaar_rb_step(th, z, m, walk, M, LatentRbOptions{}, rng)
                       : ais_mcmc_step(th, z, m, walk, M, rng);
            th = res.theta;
            z = res.z;
            series[static_cast<std::size_t>(i)] = th;
        }
        return iac(series).tau;
    };

    double tau_pooled = 0.0, tau_single = 0.0;
    for (const std::uint64_t seed : {11u, 12u, 13u, 14u}) {
        tau_pooled += chain_tau(true, seed);
        tau_single += chain_tau(false, seed);
    }
    INFO("pooled ", tau_pooled / 4.0, " single-path ", tau_single / 4.0);
    CHECK(tau_pooled < tau_single);
}
