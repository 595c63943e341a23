#include "rwrw/walker.hpp"

namespace rwrw {

void WalkerConfig::validate(int dim) const {
    if (alpha0.dim() != dim || alpha1.dim() != dim)
        throw usage_error("WalkerConfig: kernel dimension mismatch");
}

JumpStreams JumpStreams::generate(const WalkerConfig& cfg, int steps, Rng& rng) {
    JumpStreams s;
    s.w0.resize(static_cast<size_t>(steps));
    s.w1.resize(static_cast<size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        cfg.alpha0.sample(rng, s.w0[static_cast<size_t>(t)]);
        cfg.alpha1.sample(rng, s.w1[static_cast<size_t>(t)]);
    }
    return s;
}

Site walker_step(const Site& pos, int bit, const WalkerConfig& cfg, Rng& rng) {
    if (bit != 0 && bit != 1) throw usage_error("walker_step: bit must be 0 or 1");
    Site jump;
    (bit ? cfg.alpha1 : cfg.alpha0).sample(rng, jump);
    return pos.plus(jump, cfg.alpha0.dim());
}

WalkerRun run_quenched(OccupancySource& oracle, const WalkerConfig& cfg, int dim, int T, Rng& rng,
                       const JumpStreams* streams) {
    cfg.validate(dim);
    if (T < 0) throw usage_error("run_quenched: negative T");
    if (streams && (static_cast<int>(streams->w0.size()) < T ||
                    static_cast<int>(streams->w1.size()) < T))
        throw usage_error("run_quenched: jump streams shorter than T");
    WalkerRun run;
    run.path.reserve(static_cast<size_t>(T) + 1);
    run.xi.reserve(static_cast<size_t>(T));
    run.counts.reserve(static_cast<size_t>(T));
    Site pos = Site::origin();
    run.path.push_back(pos);
    for (int t = 0; t < T; ++t) {
        const int64_t n = oracle.count_at(pos, t, rng);
        const uint8_t bit = n >= 1 ? 1 : 0;
        Site jump;
        if (streams) {
            jump = bit ? streams->w1[static_cast<size_t>(t)] : streams->w0[static_cast<size_t>(t)];
        } else {
            (bit ? cfg.alpha1 : cfg.alpha0).sample(rng, jump);
        }
        if ((bit ? cfg.alpha1 : cfg.alpha0).prob(jump) <= 0.0)
            throw internal_error("run_quenched: jump outside the kernel support");
        pos = pos.plus(jump, dim);
        run.path.push_back(pos);
        run.xi.push_back({bit, jump});
        run.counts.push_back(n);
    }
    return run;
}

}  // namespace rwrw
