#pragma once

// Conditional laws of independent Poisson vectors indexed by {0,1}^n under
// "at least one point in each constraint set" conditioning, together with the
// anchored decomposition sampler (anchor / coarsen / multinomial un-coarsen /
// proportional-rate lift) and its Poi(lambda)+n dominating variant.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rwrw/errors.hpp"
#include "rwrw/rng.hpp"
#include "rwrw/statutil.hpp"

namespace rwrw::condpoisson {

// Index into {0,1}^n over positions 1..n. Position 1 is the lexicographically
// most significant; the code packs position i at bit (n - i), so integer
// comparison of codes realizes the lexicographic order.
struct BitIndex {
    uint32_t code = 0;
    int n = 0;

    int bit(int pos) const { return static_cast<int>((code >> (n - pos)) & 1u); }
    std::string to_string() const;
    static BitIndex from_string(const std::string& bits);
};

enum class Ordering { less, equal, greater };

Ordering lex_compare(const BitIndex& x, const BitIndex& y);

struct RateTable {
    int n = 0;                 // positions 1..n, n >= 1
    std::vector<double> rate;  // size 1<<n, indexed by code

    static RateTable zeros(int n);
    double max_rate() const;
    double total() const;
    void validate() const;  // throws usage_error on shape problems
};

// Constraint positions O. Constraint i demands at least one point among
// C_i = {x : x(i) = 1}.
struct ConstraintFamily {
    std::vector<int> positions;  // strictly increasing, values in 1..n

    void validate(int n) const;
    uint32_t mask(int n) const;  // OR of position bits
};

// Throws domain_error unless every constraint has positive total rate.
void check_feasible(const RateTable& rates, const ConstraintFamily& constraints);

// Smallest n with Poi(lambda) | {>=1} stochastically dominated by Poi(lambda)+n.
// Verified coordinatewise for k <= truncation; k > truncation is certified by
// the factorial-ratio tail bound, or accepted when the residual conditional
// tail mass is below tail_tolerance.
int min_domination_shift(double lambda, int truncation = 400, double tail_tolerance = 1e-12);

// ---------------------------------------------------------------------------
// Exact truncated conditional pmf (the brute-force oracle).
// ---------------------------------------------------------------------------

class ExactConditional {
  public:
    // Throws domain_error on infeasible constraints.
    ExactConditional(const RateTable& rates, const ConstraintFamily& constraints, int count_cap);

    int count_cap() const { return cap_; }
    uint64_t cells() const;  // (cap+1)^(2^n)

    // Truncated-renormalized pmf of a full count vector (0 if it violates a
    // constraint or exceeds the cap).
    double prob(std::span<const int64_t> counts) const;

    double p_constraint() const { return p_constraint_; }             // P(C), untruncated
    double p_constraint_truncated() const { return p_trunc_; }        // P(C, all <= cap)
    double truncated_mass_fraction() const { return p_trunc_ / p_constraint_; }
    double tail_bound() const { return tail_bound_; }                 // sum_x P(N_x > cap)

    // Full enumeration, cells() guarded by `budget` (resource_error beyond).
    std::vector<std::pair<std::vector<int64_t>, double>> enumerate(uint64_t budget = 1u << 22) const;

    // Streaming statistics against an empirical histogram whose keys pack the
    // count vector 8 bits per coordinate (n <= 3). Returns the raw plug-in TV
    // against the truncated pmf plus the null allowances used by the
    // verification experiments:
    //   bias_one  ~ E[TV] for one empirical measure of a correct sampler,
    //   bias_pair ~ E[TV] between two independent correct empirical measures.
    struct TvReport {
        double tv_raw = 0.0;
        double bias_one = 0.0;
        double bias_pair = 0.0;
        double cond_tail = 0.0;  // 1 - truncated_mass_fraction
        uint64_t cells_enumerated = 0;
    };
    TvReport tv_against(const Histogram& empirical, uint64_t n_samples, uint64_t budget) const;

    const RateTable& rates() const { return rates_; }

  private:
    template <typename Visitor>
    void walk_cells(Visitor&& visit) const;  // visit(prod_pmf, counts[])

    RateTable rates_;
    ConstraintFamily constraints_;
    int cap_;
    double p_constraint_;
    double p_trunc_;
    double tail_bound_;
    std::vector<std::vector<double>> pmf_;  // per code, pmf[0..cap]
};

ExactConditional exact_conditional_pmf(const RateTable& rates, const ConstraintFamily& constraints,
                                       int count_cap);

uint64_t encode_counts(std::span<const int64_t> counts);  // 8 bits per coordinate, n <= 3

// Exact law of the top anchor Y = max{x in M : N_x > 0} given the constraint
// event; support is restricted to C_{min O} (the lexicographic maximum of M
// lies there whenever the constraints hold). Pairs are (code, probability).
std::vector<std::pair<uint32_t, double>> anchor_distribution(const RateTable& rates,
                                                             const ConstraintFamily& constraints);

// ---------------------------------------------------------------------------
// Level state and the public coarsening step.
// ---------------------------------------------------------------------------

// Rates over positions min_pos..n with still-active constraint positions.
struct LevelState {
    int n = 0;        // total positions of level 1
    int min_pos = 1;  // this level covers positions min_pos..n
    std::vector<double> rate;  // size 1 << (n - min_pos + 1)
    std::vector<int> active;   // O^(k), ascending, all >= min_pos

    int width() const { return n - min_pos + 1; }
};

LevelState level1_state(const RateTable& rates, const ConstraintFamily& constraints);

// One anchored coarsening step: O^(k+1) = {i in O^(k) : y(i) = 0}; empty means
// the iteration terminates (nullopt). Otherwise the next level's rates are the
// preimage sums of the current rates over R^(k) = I_{<y} ∩ M^(k).
// Pre: y in C^(k)_{min O^(k)} with positive rate (usage_error otherwise).
std::optional<LevelState> coarsen(const LevelState& state, uint32_t y);

// Multinomial split of `count` into cells proportional to `weights`.
std::vector<int64_t> multinomial_split(int64_t count, std::span<const double> weights, Rng& rng);

// One lifting stage: preimage codes of each child code with parent rates.
struct ChainLevel {
    std::vector<std::vector<uint32_t>> preimage;  // child code -> parent codes
    std::vector<std::vector<double>> pre_cdf;     // aligned inclusive rate cumsums
};

// Staged proportional-rate lift of `code` through `chain` (deepest stage
// first); returns a level-1 code. chain may be empty (identity).
uint32_t lift_point(std::span<const ChainLevel> chain, uint32_t code, Rng& rng);

// Exact law of the staged lift (test oracle): probabilities over level-1 codes.
std::vector<std::pair<uint32_t, double>> lift_law(std::span<const ChainLevel> chain, uint32_t code);

// ---------------------------------------------------------------------------
// The decomposition sampler.
// ---------------------------------------------------------------------------

enum class DecomposeMode { exact_conditional, dominating };

struct DecompositionSample {
    std::vector<int64_t> counts;  // size 1<<n over level-1 codes
    int kappa = 0;                // number of anchored levels

    struct Anchor {
        int level = 0;             // 1-based
        int min_pos = 1;           // level's leading position
        int first_active = 1;      // min O^(k): the constraint this anchor settles
        uint32_t code = 0;         // anchor code at its level
        uint32_t lifted_code = 0;  // a proportional-rate lift to level 1
    };
    std::vector<Anchor> anchors;

    // Dominating mode: the n(lambda_bar) extra lifted points per anchor, as
    // level-1 codes (already included in `counts`).
    std::vector<uint32_t> lifted_extras;
};

// Owns the memoized level tree. Not thread-safe: create one per worker and
// pass each worker its own RNG stream.
class DecomposeSampler {
  public:
    DecomposeSampler(const RateTable& rates, const ConstraintFamily& constraints);
    ~DecomposeSampler();
    DecomposeSampler(DecomposeSampler&&) noexcept;
    DecomposeSampler& operator=(DecomposeSampler&&) noexcept;

    DecompositionSample sample(Rng& rng, DecomposeMode mode);

    int domination_shift() const { return shift_; }  // n(lambda_bar)
    int n() const { return rates_.n; }
    const RateTable& rates() const { return rates_; }
    const ConstraintFamily& constraints() const { return constraints_; }

    // True when `counts` satisfies every constraint.
    bool satisfies(std::span<const int64_t> counts) const;

  private:
    struct Node;
    struct Child;

    static std::unique_ptr<Node> make_node(int n, int min_pos, std::vector<double> rate,
                                           std::vector<int> active);
    Node* ensure_root();
    Child* ensure_child(Node& node, uint32_t y);
    void sample_node(Node& node, int level, Rng& rng, DecomposeMode mode,
                     DecompositionSample& out);

    RateTable rates_;
    ConstraintFamily constraints_;
    int shift_ = 1;
    std::unique_ptr<Node> root_;

    // scratch: units created at each recursion depth, as (code, anchor index
    // or -1); parent levels fold them down via per-unit proportional draws.
    struct Unit {
        uint32_t code;
        int32_t anchor;
    };
    std::vector<std::vector<Unit>> scratch_;
};

DecompositionSample decompose(const RateTable& rates, const ConstraintFamily& constraints,
                              Rng& rng, DecomposeMode mode);

// Independent oracle: resample unconditioned product-Poisson vectors until
// the constraints hold.
std::vector<int64_t> rejection_conditional_sample(const RateTable& rates,
                                                  const ConstraintFamily& constraints, Rng& rng,
                                                  uint64_t max_attempts,
                                                  uint64_t* attempts_out = nullptr);

// ---------------------------------------------------------------------------
// Plain-text serialization, one `bits=<01 string> rate=<decimal>` line per
// index plus an `O=<comma list>` line.
// ---------------------------------------------------------------------------

void write_instance(std::ostream& os, const RateTable& rates, const ConstraintFamily& constraints);
std::pair<RateTable, ConstraintFamily> read_instance(std::istream& is);

}  // namespace rwrw::condpoisson
