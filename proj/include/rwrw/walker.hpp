#pragma once

// The walker on the occupancy field and its local environment process
// xi_t = (bit read at the walker, jump taken).

#include <cstdint>
#include <vector>

#include "rwrw/env.hpp"
#include "rwrw/lattice.hpp"
#include "rwrw/rng.hpp"

namespace rwrw {

struct WalkerConfig {
    JumpKernel alpha0;  // law when the site is vacant
    JumpKernel alpha1;  // law when the site is occupied

    void validate(int dim) const;
};

struct LocalEnvStep {
    uint8_t bit = 0;
    Site jump;
};

struct WalkerRun {
    std::vector<Site> path;         // X_0 = o, ..., X_T
    std::vector<LocalEnvStep> xi;   // length T
    std::vector<int64_t> counts;    // N(X_t, t) as revealed, length T
};

// Anything that can answer the walker's own-site occupancy queries.
class OccupancySource {
  public:
    virtual ~OccupancySource() = default;
    virtual int64_t count_at(const Site& x, int t, Rng& rng) = 0;
};

class LazySource final : public OccupancySource {
  public:
    explicit LazySource(LazyPathEngine& engine) : engine_(&engine) {}
    int64_t count_at(const Site& x, int t, Rng& rng) override {
        return engine_->reveal_step(x, t, rng).count;
    }

  private:
    LazyPathEngine* engine_;
};

class ExplicitSource final : public OccupancySource {
  public:
    explicit ExplicitSource(const ExplicitField& field) : field_(&field) {}
    int64_t count_at(const Site& x, int t, Rng&) override { return field_->count(x, t); }

  private:
    const ExplicitField* field_;
};

// Pre-generated jump streams; couplings feed the same streams to two walkers.
struct JumpStreams {
    std::vector<Site> w0, w1;  // w_b[t] = jump at time t if the bit read is b

    static JumpStreams generate(const WalkerConfig& cfg, int steps, Rng& rng);
};

// One walker step: increment drawn from alpha(bit, .).
Site walker_step(const Site& pos, int bit, const WalkerConfig& cfg, Rng& rng);

// Runs the walker for T steps against the oracle, reading the bit at its own
// site and then jumping; streams, when given, replace the jump draws.
WalkerRun run_quenched(OccupancySource& oracle, const WalkerConfig& cfg, int dim, int T, Rng& rng,
                       const JumpStreams* streams = nullptr);

}  // namespace rwrw
