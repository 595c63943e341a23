#pragma once

// Empirical mixing: the shared-randomness coupling of walkers over the
// avoiding-law reference and the conditioned environment, the coupling-failure
// bound on the mixing coefficient, and mixing of the occupancy sequence along
// a fixed path.

#include <span>
#include <string>
#include <vector>

#include "rwrw/bridge.hpp"
#include "rwrw/env.hpp"
#include "rwrw/statutil.hpp"
#include "rwrw/walker.hpp"

namespace rwrw::mixing {

struct CouplingOutcome {
    int tau_m = -1;  // first discrepancy time in (n, n+m], -1 if none
    int n = 0;
    int m = 0;
    bool conditioned_on_q = false;
    bool xi_agree = false;  // xi sequences bitwise equal on (n, n+m]
};

struct CoupledConfig {
    const bridge::QASampler* qa = nullptr;  // conditioned environment
    WalkerConfig walker;
    double lambda_star = 0.0;
    int n = 1;
    int m = 1;
    int aux_samples = 128;  // per-step fresh-rate estimation
};

// One paired run: shared Q-stream (conditioned positive on [0, n]), shared
// residual-stream uniforms, shared jump streams, shared fresh-particle noise;
// the environments differ by the anchored particles only until the walkers
// decouple.
CouplingOutcome coupled_run(const CoupledConfig& cfg, uint64_t master_seed, uint64_t pair_index);

struct TVEstimate {
    double value = 0.0;
    double ci = 0.0;          // bootstrap 95% half-width
    double bias_bound = 0.0;  // sqrt(|F| / reps)
    std::string feature_space;
};

// Plug-in TV between two empirical histograms over a declared finite feature
// space, with bootstrap CI and the additive bias bound.
TVEstimate tv_empirical(const Histogram& p, uint64_t np, const Histogram& q, uint64_t nq,
                        uint64_t feature_cells, const std::string& descr, Rng& boot_rng);

// ---------------------------------------------------------------------------
// Coupling-failure upper bound curve over a finite adversarial history family.
// ---------------------------------------------------------------------------

struct PhiPoint {
    int t = 0;
    int n_block = 0;          // T' = c log t conditioning block used
    double raw_bound = 0.0;   // max over pairs of coupled failure probabilities
    double raw_ci = 0.0;
    double block_fail = 0.0;  // P(no positive Q-block found by t - T')
    double assembled = 0.0;   // raw + 2 * block_fail
};

struct PhiCurve {
    std::vector<PhiPoint> points;
    // failure probability per (t index, history index); the raw bound is the
    // sum of the two largest entries of a row
    std::vector<std::vector<double>> fail_prob;
};

PhiCurve phi_upper_curve(std::span<const bridge::QASampler* const> histories,
                         const WalkerConfig& walker, double lambda_star,
                         std::span<const int> t_grid, int window_m, uint64_t reps,
                         double tprime_c, int aux_samples, uint64_t master_seed, int workers);

// ---------------------------------------------------------------------------
// Mixing of Z_i = omega_i(gamma_i) along a fixed straight path.
// ---------------------------------------------------------------------------

struct FixedPathResult {
    std::vector<int> n_grid;
    std::vector<TVEstimate> tv;      // TV between conditioned and unconditioned windows
    double fitted_exponent = 0.0;    // log-log slope of tv over n
    double conditioning_rate = 0.0;  // acceptance rate of the history event
    uint64_t conditioned_runs = 0;
    uint64_t reference_runs = 0;
};

// Conditions Z_{[-l,0]} on sigma (l+1 bits, sigma[0] at time -l) by running a
// fixed attempt budget; windows Z_{n+1..n+w} are compared against an
// independent unconditioned sampler.
FixedPathResult fixed_path_mixing(const EnvConfig& cfg, const Site& step_dir, int l,
                                  std::span<const uint8_t> sigma, std::span<const int> n_grid,
                                  int window_w, uint64_t attempt_budget, uint64_t reference_reps,
                                  uint64_t master_seed, int workers);

// Law check for the conditioned Q-block generator (i.i.d. Poi(lambda) given
// positivity): chi-square p-value of `draws` samples of Q_0.
double q_block_law_pvalue(double lambda_star, uint64_t draws, uint64_t seed);

}  // namespace rwrw::mixing
