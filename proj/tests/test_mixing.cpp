#include "doctest.h"
#include "rwrw/mixing.hpp"

#include <cmath>

using namespace rwrw;
using namespace rwrw::mixing;

namespace {

EnvConfig env5(double lambda) {
    EnvConfig cfg;
    cfg.dim = 5;
    cfg.lambda = lambda;
    cfg.env_kernel = kernel_product_lazy(5);
    cfg.horizon = 64;
    cfg.past_depth = 4;
    return cfg;
}

WalkerConfig walker5() {
    WalkerConfig w;
    w.alpha0 = kernel_axial(5, 0.2, 0.3, 0.1);
    w.alpha1 = kernel_axial(5, 0.2, 0.1, 0.3);
    return w;
}

}  // namespace

TEST_CASE("coupled_run: all-vacant history keeps the environments identical") {
    Rng rng(70, 0);
    EnvConfig cfg = env5(1.0);
    PathObservation gamma = straight_history(5, make_site({1, 0, 0, 0, 0}), 3, {0, 0, 0});
    bridge::QASampler qa(cfg, gamma, 20000, rng);
    CoupledConfig cc;
    cc.qa = &qa;
    cc.walker = walker5();
    cc.lambda_star = 0.5;
    cc.n = 3;
    cc.m = 6;
    cc.aux_samples = 48;
    for (uint64_t pair = 0; pair < 40; ++pair) {
        auto out = coupled_run(cc, 1234, pair);
        CHECK(out.tau_m == -1);
        CHECK(out.xi_agree);
        CHECK(out.conditioned_on_q);
    }
}

TEST_CASE("coupled_run: empty environment never decouples") {
    Rng rng(71, 0);
    EnvConfig cfg = env5(1e-9);
    PathObservation gamma = straight_history(5, make_site({1, 0, 0, 0, 0}), 2, {0, 0});
    bridge::QASampler qa(cfg, gamma, 2000, rng);
    CoupledConfig cc;
    cc.qa = &qa;
    cc.walker = walker5();
    cc.lambda_star = 0.0;  // no conditioning possible
    cc.n = 2;
    cc.m = 4;
    cc.aux_samples = 16;
    auto out = coupled_run(cc, 99, 0);
    CHECK(out.tau_m == -1);
    CHECK(out.xi_agree);
    CHECK_FALSE(out.conditioned_on_q);
}

TEST_CASE("coupled_run: occupied history decouples less often at larger block length") {
    Rng rng(72, 0);
    EnvConfig cfg = env5(1.0);
    PathObservation gamma = straight_history(5, make_site({1, 0, 0, 0, 0}), 3, {1, 1, 1});
    bridge::QASampler qa(cfg, gamma, 30000, rng);
    WalkerConfig w = walker5();
    auto fail_prob = [&](int n, uint64_t reps) {
        CoupledConfig cc;
        cc.qa = &qa;
        cc.walker = w;
        cc.lambda_star = 0.5;
        cc.n = n;
        cc.m = 4;
        cc.aux_samples = 48;
        uint64_t fails = 0;
        for (uint64_t pair = 0; pair < reps; ++pair) {
            auto out = coupled_run(cc, 777, pair);
            if (out.tau_m >= 0) {
                ++fails;
                CHECK(out.tau_m > n);
                CHECK(out.tau_m <= n + 4);
            } else {
                CHECK(out.xi_agree);
            }
        }
        return static_cast<double>(fails) / static_cast<double>(reps);
    };
    const double p2 = fail_prob(2, 500);
    const double p12 = fail_prob(12, 500);
    const double band = 2.0 * std::sqrt(0.25 / 500.0);
    CHECK(p2 >= p12 - band);
}

TEST_CASE("tv_empirical fields") {
    Rng rng(73, 0);
    Histogram a, b;
    for (int i = 0; i < 100; ++i) {
        hist_add(a, static_cast<uint64_t>(i % 4));
        hist_add(b, static_cast<uint64_t>(i % 4));
    }
    auto est = tv_empirical(a, 100, b, 100, 4, "toy", rng);
    CHECK(est.value == doctest::Approx(0.0));
    CHECK(est.bias_bound == doctest::Approx(0.2));
    CHECK(est.feature_space == "toy");
    Histogram c, d;
    hist_add(c, 0);
    hist_add(d, 1);
    auto far = tv_empirical(c, 1, d, 1, 2, "toy", rng);
    CHECK(far.value == doctest::Approx(1.0));
}

TEST_CASE("phi_upper_curve: single history bounds to zero and pair order is irrelevant") {
    Rng rng(74, 0);
    EnvConfig cfg = env5(1.0);
    PathObservation g1 = straight_history(5, make_site({1, 0, 0, 0, 0}), 2, {1, 1});
    PathObservation g2 = straight_history(5, make_site({0, 1, 0, 0, 0}), 2, {1, 0});
    bridge::QASampler qa1(cfg, g1, 20000, rng);
    bridge::QASampler qa2(cfg, g2, 20000, rng);
    const std::vector<int> grid{4, 16};

    std::vector<const bridge::QASampler*> single{&qa1};
    auto solo = phi_upper_curve(single, walker5(), 0.5, grid, 3, 60, 2.0, 32, 4321, 2);
    for (const auto& p : solo.points) CHECK(p.raw_bound == 0.0);
    CHECK(solo.points[0].n_block <= solo.points[1].n_block);

    std::vector<const bridge::QASampler*> ab{&qa1, &qa2};
    std::vector<const bridge::QASampler*> ba{&qa2, &qa1};
    auto r1 = phi_upper_curve(ab, walker5(), 0.5, grid, 3, 60, 2.0, 32, 4321, 2);
    auto r2 = phi_upper_curve(ba, walker5(), 0.5, grid, 3, 60, 2.0, 32, 4321, 2);
    for (size_t i = 0; i < grid.size(); ++i) {
        CHECK(r1.points[i].raw_bound == doctest::Approx(r2.points[i].raw_bound));
        CHECK(r1.points[i].assembled >= r1.points[i].raw_bound);
    }
}

TEST_CASE("fixed_path_mixing: zero density gives zero TV everywhere") {
    EnvConfig cfg;
    cfg.dim = 3;
    cfg.lambda = 0.0;
    cfg.env_kernel = kernel_product_lazy(3);
    cfg.horizon = 32;
    const std::vector<int> grid{2, 8};
    const std::vector<uint8_t> sigma{0, 0, 0};
    auto res = fixed_path_mixing(cfg, make_site({1, 0, 0}), 2, sigma, grid, 3, 2000, 2000, 5, 2);
    for (const auto& tv : res.tv) CHECK(tv.value == doctest::Approx(0.0));
    CHECK(res.conditioning_rate == doctest::Approx(1.0));
}

TEST_CASE("fixed_path_mixing: conditioning fades with distance on the line") {
    EnvConfig cfg;
    cfg.dim = 3;
    cfg.lambda = 1.0;
    cfg.env_kernel = kernel_product_lazy(3);
    cfg.horizon = 40;
    const std::vector<int> grid{1, 16};
    const std::vector<uint8_t> sigma{1, 1, 1};  // all-occupied recent history
    auto res = fixed_path_mixing(cfg, make_site({1, 0, 0}), 2, sigma, grid, 4, 60000, 30000, 6, 2);
    REQUIRE(res.tv.size() == 2);
    CHECK(res.conditioning_rate > 0.05);
    // near-window dependence clearly exceeds the far-window one
    CHECK(res.tv[0].value > res.tv[1].value - res.tv[0].ci - res.tv[1].ci);
    CHECK(res.fitted_exponent <= 0.1);
    // coarsening cannot increase information: window 3 TV <= window 4 TV + CIs
    auto res3 = fixed_path_mixing(cfg, make_site({1, 0, 0}), 2, sigma, grid, 3, 60000, 30000, 6, 2);
    CHECK(res3.tv[0].value <= res.tv[0].value + res.tv[0].ci + res3.tv[0].ci + 0.01);
}

TEST_CASE("fixed_path_mixing: impossible conditioning raises a resource error") {
    EnvConfig cfg;
    cfg.dim = 3;
    cfg.lambda = 0.0;
    cfg.env_kernel = kernel_product_lazy(3);
    cfg.horizon = 16;
    const std::vector<int> grid{2};
    const std::vector<uint8_t> sigma{1, 1};  // occupied bits are impossible at lambda=0
    CHECK_THROWS_AS(
        fixed_path_mixing(cfg, make_site({1, 0, 0}), 1, sigma, grid, 3, 2000, 500, 7, 2),
        resource_error);
}

TEST_CASE("q block conditioning law") {
    CHECK(q_block_law_pvalue(0.6, 200000, 88) > 0.01);
}
