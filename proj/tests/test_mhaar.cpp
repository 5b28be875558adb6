#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "aar/mhaar.hpp"
#include "aar/toy.hpp"

using namespace aar;

TEST_CASE("averaged_log_ratio") {
    const std::vector<double> flat = {0.0, 0.0, 0.0};
    CHECK(averaged_log_ratio(flat) == doctest::Approx(0.0).epsilon(1e-15));

    const std::vector<double> one = {std::log(2.0)};
    CHECK(averaged_log_ratio(one) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    const std::vector<double> two = {std::log(1.0), std::log(3.0)};
    CHECK(averaged_log_ratio(two) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    // Constant direction weights scale the mean.
    const std::vector<double> unit = {0.0};
    CHECK(averaged_log_ratio(unit, 0.25, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    const std::vector<double> dead = {kNegInf, kNegInf};
    CHECK(averaged_log_ratio(dead) == kNegInf);

    const std::vector<double> bad = {0.0, std::nan("")};
    CHECK_THROWS_AS((void)averaged_log_ratio(bad), numeric_contract_error);
    CHECK_THROWS_AS((void)averaged_log_ratio(std::vector<double>{}), numeric_contract_error);
}

TEST_CASE("sample_proportional follows the weights and survives shifts") {
    const std::vector<double> lw = {std::log(1.0), std::log(2.0), std::log(3.0)};
    std::vector<double> shifted = lw;
    for (double& w : shifted) w += 5000.0;  // would overflow without the shift trick

    Rng rng1(77), rng2(77);
    const int n = 60000;
    std::vector<int> freq(3, 0);
    for (int i = 0; i < n; ++i) {
        const std::size_t k = sample_proportional(lw, rng1);
        CHECK(sample_proportional(shifted, rng2) == k);  // identical stream, identical draws
        ++freq[k];
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double p = (k + 1) / 6.0;
        CHECK(std::abs(freq[k] - n * p) < 5 * std::sqrt(n * p * (1 - p)));
    }

    const std::vector<double> point = {kNegInf, 0.0, kNegInf};
    CHECK(sample_proportional(point, rng1) == 1);
    const std::vector<double> last = {kNegInf, kNegInf, -2.0};
    CHECK(sample_proportional(last, rng1) == 2);

    const std::vector<double> none = {kNegInf, kNegInf};
    CHECK_THROWS_AS((void)sample_proportional(none, rng1), numeric_contract_error);
    const std::vector<double> bad = {0.0, std::nan("")};
    CHECK_THROWS_AS((void)sample_proportional(bad, rng1), numeric_contract_error);
}

TEST_CASE("coin-conditional acceptance rates agree") {
    // Reversibility implies the two direction branches accept equally often
    // at stationarity.  The toy chain is stationary from the start.
    const ToyScheme scheme{5.0};
    const ToyProposal prop{0.0};
    const MhaarOptions opt{4, true};
    Rng rng(101);
    int theta = 1;
    long n1 = 0, a1 = 0, n2 = 0, a2 = 0;
    for (int t = 0; t < 100000; ++t) {
        const auto res = mhaar_step(theta, ToyScheme::NoLatent{}, prop, scheme, opt, rng);
        theta = res.theta;
        if (res.coin == 1) {
            ++n1;
            a1 += res.accepted;
        } else {
            ++n2;
            a2 += res.accepted;
        }
    }
    const double r1 = static_cast<double>(a1) / n1;
    const double r2 = static_cast<double>(a2) / n2;
    const double se = std::sqrt(r1 * (1 - r1) / n1 + r2 * (1 - r2) / n2);
    CHECK(std::abs(r1 - r2) < 3 * se);
}

TEST_CASE("lazy and eager replicate selection give the same law") {
    const ToyScheme scheme{2.0};
    const ToyProposal prop{0.0};
    const double truth = toy_kernel_prob({2.0, 0.0, 3});
    for (bool lazy : {true, false}) {
        const MhaarOptions opt{3, lazy};
        Rng rng(lazy ? 201 : 202);
        int theta = 1;
        long flips = 0;
        const int n = 100000;
        for (int t = 0; t < n; ++t) {
            const auto res = mhaar_step(theta, ToyScheme::NoLatent{}, prop, scheme, opt, rng);
            if (res.theta != theta) ++flips;
            theta = res.theta;
        }
        const double se = std::sqrt(truth * (1 - truth) / n);
        CHECK(std::abs(flips / static_cast<double>(n) - truth) < 4 * se);
    }
}

TEST_CASE("zero-mass branches resolve to certain decisions") {
    // Moves into state +1 carry no mass, moves out of it are certain.
    struct OneWay {
        using NoLatent = ToyScheme::NoLatent;
        double sample_u(int, int, NoLatent, Rng& rng) const { return rng.uniform(); }
        double log_ratio(int, int to, NoLatent, double) const {
            return to == 1 ? kNegInf : 0.0;
        }
        NoLatent apply_z(int, int, NoLatent, double) const { return {}; }
        double apply_u(int, int, NoLatent, double u) const { return u; }
    };
    const OneWay scheme;
    const ToyProposal prop{0.0};
    const MhaarOptions opt{3, true};

    // Forward branch: certain rejection without attempting selection.
    struct Coin1 {
        double operator()(int, int, ToyScheme::NoLatent, int c) const { return c == 1 ? 1.0 : 0.0; }
    };
    Rng rng(31);
    auto res = mhaar_step(-1, ToyScheme::NoLatent{}, prop, scheme, opt, rng, Coin1{});
    CHECK_FALSE(res.accepted);
    CHECK(res.theta == -1);
    CHECK(res.log_accept == kNegInf);

    // Reverse branch: the reverse move has no mass, so acceptance is certain.
    struct Coin2 {
        double operator()(int, int, ToyScheme::NoLatent, int c) const { return c == 2 ? 1.0 : 0.0; }
    };
    res = mhaar_step(1, ToyScheme::NoLatent{}, prop, scheme, opt, rng, Coin2{});
    CHECK(res.accepted);
    CHECK(res.theta == -1);
}

TEST_CASE("chains are bit-reproducible for a fixed seed") {
    const ToyScheme scheme{2.0};
    const ToyProposal prop{0.3};
    const MhaarOptions opt{5, true};
    auto run = [&] {
        Rng rng(303);
        int theta = 1;
        std::vector<int> path;
        for (int t = 0; t < 2000; ++t) {
            theta = mhaar_step(theta, ToyScheme::NoLatent{}, prop, scheme, opt, rng).theta;
            path.push_back(theta);
        }
        return path;
    };
    CHECK(run() == run());
}
