#pragma once

// The correspondence between path observations and the bit-index conditional
// Poisson formulation: trace-pattern rate tables, the anchored-particle
// sampler for the conditioned field, the never-seen-particle rates
// lambda(gamma, gamma', t) and their adversarial minimum, and the Q/R/S
// splitting of the fresh-particle stream.

#include <span>
#include <string>
#include <vector>

#include "rwrw/cond_poisson.hpp"
#include "rwrw/env.hpp"
#include "rwrw/walker.hpp"

namespace rwrw::bridge {

struct RateEstimate {
    double value = 0.0;
    double ci = 0.0;  // 95% half-width
    uint64_t samples = 0;
};

struct BridgedRates {
    condpoisson::RateTable table;            // over trace patterns {0,1}^L
    condpoisson::ConstraintFamily constraints;  // O(sigma)
    std::vector<double> ci;                  // per-pattern half-widths
    uint64_t samples_per_anchor = 0;
};

// Most recent gamma hit of a pattern (smallest i with x(i)=1); 0 if none.
int most_recent_hit(uint32_t pattern, int length);

// Samples the positions at times -1..-L of a two-sided environment walk
// pinned at (gamma_{-k}, -k); returns the trace pattern and, optionally, the
// positions (index i-1 holds the position at time -i).
uint32_t sample_pinned_trace(const PathObservation& history, const JumpKernel& env_kernel, int dim,
                             int pin_time, Rng& rng, std::vector<Site>* positions_out = nullptr);

// Pattern-frequency estimate of the trace rates: one pinned ensemble per
// anchor time, each pattern read off the ensemble pinned at its most recent
// hit; V-hitting patterns are structural zeros.
BridgedRates rates_from_history(const PathObservation& history, const JumpKernel& env_kernel,
                                int dim, double lambda, uint64_t mc_samples, Rng& rng);

// lambda * P(backward walk from (future[t], t) avoids future[0..t-1] and gamma).
RateEstimate estimate_lambda_future(const PathObservation& history, std::span<const Site> future,
                                    int t, const JumpKernel& env_kernel, int dim, double lambda,
                                    uint64_t mc_samples, Rng& rng);

// Minimum of estimate_lambda_future(., t=0) over a finite adversarial family:
// every walker-range shape up to `all_shape_len` (budget-guarded) plus
// straight and staircase paths up to `long_len`.
struct LambdaStarEstimate {
    double value = 0.0;
    double ci = 0.0;
    std::string argmin = "";
    int family_size = 0;
};
LambdaStarEstimate lambda_star_sweep(const EnvConfig& cfg, const WalkerConfig& walker,
                                     int all_shape_len, int long_len, uint64_t mc_samples,
                                     Rng& rng);

// ---------------------------------------------------------------------------
// The anchored sampler for the conditioned field.
// ---------------------------------------------------------------------------

class QASampler {
  public:
    // rate_rng drives the one-off Monte Carlo rate estimation; sampling later
    // uses per-replica streams. Throws domain_error when the observation is
    // infeasible under the estimated rates.
    QASampler(EnvConfig cfg, PathObservation history, uint64_t rate_mc_samples, Rng& rate_rng,
              uint64_t lift_budget = uint64_t{1} << 22);

    struct AnchoredParticle {
        int anchor_time = 0;   // z_i in {-L..-1}
        uint32_t pattern = 0;  // level-1 trace pattern
        bool is_level_anchor = false;
        std::vector<Site> past;  // positions at times -1..-L
    };

    struct AnchoredSet {
        condpoisson::DecompositionSample decomposition;
        std::vector<AnchoredParticle> particles;
    };

    // The conditioned component of the field (given the observation); the
    // avoiding component is independent and sampled separately.
    AnchoredSet sample_anchored(Rng& rng) const;

    // Fully materialized field sample on a query window.
    struct FieldSample {
        ExplicitField base;
        std::vector<Particle> anchored;
        int dim;

        int64_t count(const Site& x, int t) const;
        int bit(const Site& x, int t) const { return count(x, t) >= 1 ? 1 : 0; }
    };
    FieldSample sample_field(int query_radius, Rng& rng) const;

    const BridgedRates& rates() const { return rates_; }
    const condpoisson::DecomposeSampler& decompose_sampler() const { return *sampler_; }
    int domination_shift() const { return sampler_->domination_shift(); }
    const PathObservation& history() const { return history_; }
    const EnvConfig& config() const { return cfg_; }

  private:
    EnvConfig cfg_;
    PathObservation history_;
    BridgedRates rates_;
    std::unique_ptr<condpoisson::DecomposeSampler> sampler_;
    uint64_t lift_budget_;
};

// Plain-text export of a bridged instance: the cond_poisson format plus one
// `anchor=<time>` line per anchored particle of a sample.
void write_bridged(std::ostream& os, const BridgedRates& rates,
                   const QASampler::AnchoredSet& sample);

// ---------------------------------------------------------------------------
// Q/R/S splitting.
// ---------------------------------------------------------------------------

struct SplitStep {
    int64_t q = 0;            // path-independent Poi(lambda_star) stream
    int64_t r = 0;            // path-dependent residual stream
    int64_t s = 0;            // anchored particles first meeting the path
    int64_t newly_seen = 0;   // fresh arrivals + anchored first hits (engine view)
    int64_t count = 0;        // full occupancy count at the step
    double rate_estimate = 0.0;  // lambda(gamma, gamma', t) estimate used
};

// One environment advanced with the split fresh-stream construction. The
// caller supplies the Q draw and the uniform driving the residual stream, so
// two coupled environments can share them.
class SplitDriver {
  public:
    SplitDriver(LazyPathEngine& engine, double lambda_star, int aux_samples)
        : engine_(&engine), lambda_star_(lambda_star), aux_(aux_samples) {}

    SplitStep step(const Site& x, int t, int64_t q_t, double u_t, Rng& rng);

    LazyPathEngine& engine() { return *engine_; }

  private:
    LazyPathEngine* engine_;
    double lambda_star_;
    int aux_;
};

// Per-step (Q, R, S) triples of a completed split run; throws internal_error
// if any step violates Q + R + S = newly seen.
std::vector<SplitStep> qrs_split(const std::vector<SplitStep>& run);

}  // namespace rwrw::bridge
