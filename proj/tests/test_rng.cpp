#include "doctest.h"
#include "rwrw/rng.hpp"
#include "rwrw/statutil.hpp"

#include <cmath>
#include <vector>

using namespace rwrw;

TEST_CASE("rng reproducibility and stream separation") {
    Rng a(1234, 7), b(1234, 7), c(1234, 8);
    bool identical = true, distinct = false;
    for (int i = 0; i < 64; ++i) {
        const uint64_t x = a.next_u64();
        if (x != b.next_u64()) identical = false;
        if (x != c.next_u64()) distinct = true;
    }
    CHECK(identical);
    CHECK(distinct);
}

TEST_CASE("poisson sampler matches pmf") {
    Rng rng(42, 0);
    const double lambda = 3.0;
    const int reps = 200000;
    std::vector<double> obs(21, 0.0), expct(21, 0.0);
    for (int i = 0; i < reps; ++i) {
        int64_t k = rng.poisson(lambda);
        obs[static_cast<size_t>(std::min<int64_t>(k, 20))] += 1.0;
    }
    double cum = 0.0;
    for (int k = 0; k < 20; ++k) {
        expct[static_cast<size_t>(k)] =
            reps * std::exp(k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
        cum += expct[static_cast<size_t>(k)];
    }
    expct[20] = reps - cum;
    CHECK(chi_square_pvalue(obs, expct) > 0.01);
}

TEST_CASE("poisson large rate splits into chunks") {
    Rng rng(43, 0);
    const double lambda = 150.0;
    double mean = 0.0, var = 0.0;
    const int reps = 50000;
    std::vector<double> xs(reps);
    for (int i = 0; i < reps; ++i) xs[static_cast<size_t>(i)] = static_cast<double>(rng.poisson(lambda));
    auto ci = mean_ci(xs);
    mean = ci.mean;
    var = ci.stddev * ci.stddev;
    CHECK(std::fabs(mean - lambda) < 4.0 * std::sqrt(lambda / reps));
    CHECK(std::fabs(var - lambda) < 0.05 * lambda);
}

TEST_CASE("poisson conditioned on >=1 at tiny rate") {
    Rng rng(44, 0);
    const double lambda = 0.05;
    const int reps = 200000;
    int64_t ones = 0, twos = 0;
    for (int i = 0; i < reps; ++i) {
        int64_t k = rng.poisson_ge1(lambda);
        REQUIRE(k >= 1);
        if (k == 1) ++ones;
        if (k == 2) ++twos;
    }
    // P(Z=2 | Z>=1) / P(Z=1 | Z>=1) = lambda/2
    const double ratio = static_cast<double>(twos) / static_cast<double>(ones);
    CHECK(std::fabs(ratio - lambda / 2.0) < 0.002);
    CHECK_THROWS_AS(rng.poisson_ge1(0.0), domain_error);
}

TEST_CASE("multinomial totals and proportions") {
    Rng rng(45, 0);
    std::vector<double> w{0.2, 0.3, 0.5};
    std::vector<int64_t> tot(3, 0);
    for (int i = 0; i < 2000; ++i) {
        auto out = rng.multinomial(10, w);
        CHECK(out[0] + out[1] + out[2] == 10);
        for (int j = 0; j < 3; ++j) tot[static_cast<size_t>(j)] += out[static_cast<size_t>(j)];
    }
    CHECK(std::fabs(static_cast<double>(tot[0]) / 20000.0 - 0.2) < 0.01);
    CHECK(std::fabs(static_cast<double>(tot[2]) / 20000.0 - 0.5) < 0.012);
}

TEST_CASE("replica streams differ and are stable") {
    Rng r0 = replica_rng(99, 0);
    Rng r0b = replica_rng(99, 0);
    Rng r1 = replica_rng(99, 1);
    CHECK(r0.next_u64() == r0b.next_u64());
    Rng r0c = replica_rng(99, 0);
    CHECK(r0c.next_u64() != r1.next_u64());
}
