#pragma once

// The Poissonian field of independent lattice walks: explicit-box simulation,
// exact lazy on-path revelation via candidate thinning, and the conditioned
// fields (gamma-avoiding, and the rejection oracle for full observations).

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rwrw/errors.hpp"
#include "rwrw/lattice.hpp"
#include "rwrw/rng.hpp"

namespace rwrw {

struct EnvConfig {
    int dim = 1;
    double lambda = 1.0;
    JumpKernel env_kernel;
    int horizon = 1;
    int past_depth = 0;

    void validate() const;
};

// A backward walker path gamma with observation bits sigma: position at time
// -i is at(i), i = 1..length, and the path ends adjacent to the origin
// (one walker step from o at time 0). sigma(i) = 1 means occupied.
class PathObservation {
  public:
    PathObservation() = default;
    PathObservation(std::vector<Site> gamma_recent_first, std::vector<uint8_t> sigma);

    int length() const { return static_cast<int>(gamma_.size()); }
    const Site& at(int i) const { return gamma_[static_cast<size_t>(i - 1)]; }
    int sigma(int i) const { return sigma_[static_cast<size_t>(i - 1)]; }
    std::vector<int> occupied_times() const;  // O = {i : sigma_i = 1}
    std::vector<int> vacant_times() const;    // V = {i : sigma_i = 0}
    bool empty() const { return gamma_.empty(); }

    // every increment (and the final step onto o) lies in R = R_0 ∪ R_1
    void validate_steps(const JumpKernel& alpha0, const JumpKernel& alpha1, int dim) const;

  private:
    std::vector<Site> gamma_;
    std::vector<uint8_t> sigma_;
};

// A straight backward path o - i*step, i = 1..len, with the given bits.
PathObservation straight_history(int dim, const Site& step, int len, std::vector<uint8_t> sigma);
// Staircase alternating between two unit steps.
PathObservation staircase_history(int dim, const Site& step_a, const Site& step_b, int len,
                                  std::vector<uint8_t> sigma);

struct Particle {
    int anchor_time = 0;
    Site anchor;
    std::vector<Site> forward;   // positions at anchor_time + 1, + 2, ...
    std::vector<Site> backward;  // positions at anchor_time - 1, - 2, ...

    Site at(int t) const;
    int min_time() const { return anchor_time - static_cast<int>(backward.size()); }
    int max_time() const { return anchor_time + static_cast<int>(forward.size()); }
};

// i.i.d. Poisson(lambda) initial counts on the centered L-inf box of the
// given radius; entries with zero count are omitted.
std::vector<std::pair<Site, int64_t>> sample_initial_counts(const EnvConfig& cfg, int box_radius,
                                                            Rng& rng);

// Evolves every particle of `initial` as an independent walk: steps_forward
// kernel steps from time 0 upward and steps_backward reversed-kernel steps
// downward (the two-sided trajectory window).
std::vector<Particle> evolve_field(const std::vector<std::pair<Site, int64_t>>& initial,
                                   const JumpKernel& kernel, int steps_forward,
                                   int steps_backward, Rng& rng);

// ---------------------------------------------------------------------------
// Explicit-box engine: simulate everything inside a box large enough that no
// particle initialized outside it can reach any admissible query.
// ---------------------------------------------------------------------------

class ExplicitField {
  public:
    ExplicitField(const EnvConfig& cfg, int query_radius, Rng& rng);

    int box_radius() const { return box_radius_; }
    int query_radius() const { return query_radius_; }

    // exact count/bit at (x, t); usage_error outside the safe window
    int64_t count(const Site& x, int t) const;
    int bit(const Site& x, int t) const { return count(x, t) >= 1 ? 1 : 0; }

    const std::vector<Particle>& particles() const { return particles_; }

    // drop every trajectory that passes through a gamma point (times -1..-L);
    // the survivor field is a sample of the gamma-avoiding law
    void remove_hitting(const PathObservation& history);

    // whether the field realizes the observation (bits along gamma match sigma)
    bool matches(const PathObservation& history) const;

    const EnvConfig& config() const { return cfg_; }

  private:
    void index_particles();
    size_t cell_index(const Site& x, int t) const;

    EnvConfig cfg_;
    int query_radius_ = 0;
    int box_radius_ = 0;
    int side_ = 0;
    size_t cells_per_time_ = 0;
    std::vector<Particle> particles_;
    std::vector<int32_t> occupancy_;  // [(t + past_depth) * cells + site]
};

// Sample of the gamma-avoiding field: explicit field thinned to trajectories
// that never intersect gamma.
ExplicitField sample_avoiding_field(const EnvConfig& cfg, const PathObservation& history,
                                    int query_radius, Rng& rng);

// Rejection oracle for the fully conditioned field: resample until the bits
// along gamma equal sigma. Reports the attempt count on success.
ExplicitField sample_conditioned_field_rejection(const EnvConfig& cfg,
                                                 const PathObservation& history, int query_radius,
                                                 Rng& rng, uint64_t max_attempts,
                                                 uint64_t* attempts_out = nullptr);

// ---------------------------------------------------------------------------
// Lazy on-path engine: reveals exactly the particles relevant to a single
// monotone-in-time query path, by thinning Poi(lambda) pinned candidates
// against the logged queries and the history avoidance set.
// ---------------------------------------------------------------------------

class LazyPathEngine {
  public:
    struct StepResult {
        int64_t count = 0;        // N(x, t)
        int64_t fresh = 0;        // newly revealed (never seen) particles
        int64_t from_revealed = 0;  // previously revealed particles now at x
        int64_t anchored_first_hits = 0;  // anchored particles meeting the path now
    };

    // start_time: the first query time (queries then proceed one per step)
    LazyPathEngine(const EnvConfig& cfg, int start_time = 0);

    // history points become forbidden for fresh candidates (the avoiding law);
    // occupied-time particles are carried by pre-seeded anchored particles
    void set_history(const PathObservation& history);

    // pre-seeded particle known to sit at `pos` at time start_time - 1
    void add_anchored(const Site& pos_at_prev, int anchor_tag);

    StepResult reveal_step(const Site& x, int t, Rng& rng);

    // --- pieces used by the coupled construction ---------------------------
    // advance revealed particles to time t and count those at x (no logging)
    StepResult advance_and_count(const Site& x, int t, Rng& rng);
    // Monte Carlo estimate of the fresh-particle rate lambda * P(pinned
    // backward path avoids logged ∪ history)
    double estimate_fresh_rate(const Site& x, int t, int aux_samples, Rng& rng);
    // thinning draw of fresh particles (the exact construction)
    int64_t sample_fresh_thinned(const Site& x, int t, Rng& rng);
    // install externally drawn fresh particles at (x, t)
    void add_fresh(const Site& x, int64_t n);
    // record the query and arm the next step
    void log_step(const Site& x, int t);

    int next_time() const { return next_time_; }
    const EnvConfig& config() const { return cfg_; }

  private:
    bool backward_path_clear(const Site& x, int t, Rng& rng) const;

    EnvConfig cfg_;
    int start_time_ = 0;
    int next_time_ = 0;
    PathObservation history_;
    JumpKernel reversed_;

    struct Tracked {
        Site pos;
        int tag;      // -1 fresh, >= 0 anchored
        bool hit;     // anchored: already intersected the query path
    };
    std::vector<Tracked> revealed_;
    std::vector<Site> logged_;  // walker position at start_time + k
};

// Poisson quantile from a shared uniform (comonotone coupling across rates).
int64_t poisson_icdf(double lambda, double u);

}  // namespace rwrw
