#include "rwrw/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rwrw/parallel.hpp"

namespace rwrw::mixing {

namespace {

constexpr uint64_t kTagShared = 0x60;
constexpr uint64_t kTagAnchored = 0x61;
constexpr uint64_t kTagFresh = 0x62;
constexpr uint64_t kTagAnchoredPart = 0x63;
constexpr uint64_t kTagAux = 0x64;
constexpr uint64_t kTagBlock = 0x65;
constexpr uint64_t kTagFixed = 0x66;
constexpr uint64_t kTagFixedRef = 0x67;
constexpr uint64_t kTagBoot = 0x68;

struct Part {
    Site pos;
    Rng rng;
};

struct CoupledEnv {
    Site walker = Site::origin();
    std::vector<Site> logged;
    std::vector<Part> parts;
    uint64_t fresh_ids = 0;
};

bool clear_backward(const Site& x, int t, const PathObservation& gamma,
                    const std::vector<Site>& logged, const JumpKernel& reversed, int dim,
                    Rng& rng) {
    Site cur = x;
    Site step;
    const int floor_t = gamma.empty() ? 0 : -gamma.length();
    for (int s = t - 1; s >= floor_t; --s) {
        reversed.sample(rng, step);
        cur = cur.plus(step, dim);
        if (s >= 0) {
            if (cur == logged[static_cast<size_t>(s)]) return false;
        } else if (cur == gamma.at(-s)) {
            return false;
        }
    }
    return true;
}

double estimate_rate(const CoupledEnv& env, int t, const PathObservation& gamma,
                     const JumpKernel& reversed, int dim, double lambda, int aux, Rng aux_rng) {
    if (lambda <= 0.0) return 0.0;
    int clear = 0;
    for (int i = 0; i < aux; ++i)
        if (clear_backward(env.walker, t, gamma, env.logged, reversed, dim, aux_rng)) ++clear;
    return lambda * static_cast<double>(clear) / static_cast<double>(aux);
}

}  // namespace

CouplingOutcome coupled_run(const CoupledConfig& cfg, uint64_t master_seed, uint64_t pair_index) {
    if (!cfg.qa) throw usage_error("coupled_run: missing conditioned sampler");
    if (cfg.n < 1 || cfg.m < 1) throw usage_error("coupled_run: n, m must be >= 1");
    const EnvConfig& env_cfg = cfg.qa->config();
    const int dim = env_cfg.dim;
    cfg.walker.validate(dim);
    const PathObservation& gamma = cfg.qa->history();
    const JumpKernel reversed = env_cfg.env_kernel.reversed();
    const int total = cfg.n + cfg.m;

    // shared noise: Q-stream (conditioned positive on the block), residual
    // uniforms, and the two jump streams
    Rng shared = Rng::derive(master_seed, kTagShared, pair_index, 0);
    std::vector<int64_t> q_stream(static_cast<size_t>(total) + 1, 0);
    const bool conditioned = cfg.lambda_star > 0.0;
    for (int t = 0; t <= total; ++t)
        if (conditioned)
            q_stream[static_cast<size_t>(t)] = t <= cfg.n ? shared.poisson_ge1(cfg.lambda_star)
                                                          : shared.poisson(cfg.lambda_star);
    std::vector<double> u_stream(static_cast<size_t>(total) + 1);
    for (auto& u : u_stream) u = shared.uniform();
    const JumpStreams jumps = JumpStreams::generate(cfg.walker, total + 1, shared);

    // the conditioned environment carries the anchored particles
    Rng rng_a = Rng::derive(master_seed, kTagAnchored, pair_index, 0);
    const auto anchored = cfg.qa->sample_anchored(rng_a);

    CoupledEnv env_a, env_r;
    for (size_t j = 0; j < anchored.particles.size(); ++j)
        env_a.parts.push_back({anchored.particles[j].past[0],
                               Rng::derive(master_seed, kTagAnchoredPart, pair_index, j)});

    CouplingOutcome out;
    out.n = cfg.n;
    out.m = cfg.m;
    out.conditioned_on_q = conditioned;
    std::vector<std::pair<uint8_t, Site>> xi_a, xi_r;

    Site step;
    for (int t = 0; t <= total; ++t) {
        int64_t at_a = 0, at_r = 0;
        for (auto& p : env_a.parts) {
            env_cfg.env_kernel.sample(p.rng, step);
            p.pos = p.pos.plus(step, dim);
            if (p.pos == env_a.walker) ++at_a;
        }
        for (auto& p : env_r.parts) {
            env_cfg.env_kernel.sample(p.rng, step);
            p.pos = p.pos.plus(step, dim);
            if (p.pos == env_r.walker) ++at_r;
        }
        const Rng aux_seed = Rng::derive(master_seed, kTagAux, pair_index, static_cast<uint64_t>(t));
        const double rate_a = estimate_rate(env_a, t, gamma, reversed, dim, env_cfg.lambda,
                                            cfg.aux_samples, aux_seed);
        const double rate_r = estimate_rate(env_r, t, gamma, reversed, dim, env_cfg.lambda,
                                            cfg.aux_samples, aux_seed);
        const int64_t q_t = q_stream[static_cast<size_t>(t)];
        const int64_t fresh_a =
            q_t + poisson_icdf(std::max(rate_a - cfg.lambda_star, 0.0), u_stream[static_cast<size_t>(t)]);
        const int64_t fresh_r =
            q_t + poisson_icdf(std::max(rate_r - cfg.lambda_star, 0.0), u_stream[static_cast<size_t>(t)]);
        for (int64_t j = 0; j < fresh_a; ++j)
            env_a.parts.push_back(
                {env_a.walker, Rng::derive(master_seed, kTagFresh, pair_index, env_a.fresh_ids++)});
        for (int64_t j = 0; j < fresh_r; ++j)
            env_r.parts.push_back(
                {env_r.walker, Rng::derive(master_seed, kTagFresh, pair_index, env_r.fresh_ids++)});
        const uint8_t bit_a = (at_a + fresh_a) >= 1 ? 1 : 0;
        const uint8_t bit_r = (at_r + fresh_r) >= 1 ? 1 : 0;
        env_a.logged.push_back(env_a.walker);
        env_r.logged.push_back(env_r.walker);
        const Site jump_a = bit_a ? jumps.w1[static_cast<size_t>(t)] : jumps.w0[static_cast<size_t>(t)];
        const Site jump_r = bit_r ? jumps.w1[static_cast<size_t>(t)] : jumps.w0[static_cast<size_t>(t)];
        if (t > cfg.n) {
            xi_a.emplace_back(bit_a, jump_a);
            xi_r.emplace_back(bit_r, jump_r);
            if (bit_a != bit_r && out.tau_m < 0) {
                if (q_t != 0)
                    throw internal_error("coupled_run: bits differ with a positive shared stream");
                out.tau_m = t;
            }
        }
        env_a.walker = env_a.walker.plus(jump_a, dim);
        env_r.walker = env_r.walker.plus(jump_r, dim);
    }
    out.xi_agree = xi_a == xi_r;
    if (out.tau_m < 0 && !out.xi_agree)
        throw internal_error("coupled_run: no discrepancy time yet the xi windows differ");
    return out;
}

TVEstimate tv_empirical(const Histogram& p, uint64_t np, const Histogram& q, uint64_t nq,
                        uint64_t feature_cells, const std::string& descr, Rng& boot_rng) {
    if (np == 0 || nq == 0) throw usage_error("tv_empirical: empty samples");
    TVEstimate out;
    out.value = tv_between_histograms(p, np, q, nq);
    out.ci = tv_bootstrap_halfwidth(p, np, q, nq, boot_rng);
    out.bias_bound = std::sqrt(static_cast<double>(feature_cells) /
                               static_cast<double>(std::min(np, nq)));
    out.feature_space = descr;
    return out;
}

PhiCurve phi_upper_curve(std::span<const bridge::QASampler* const> histories,
                         const WalkerConfig& walker, double lambda_star,
                         std::span<const int> t_grid, int window_m, uint64_t reps,
                         double tprime_c, int aux_samples, uint64_t master_seed, int workers) {
    if (histories.empty()) throw usage_error("phi_upper_curve: empty history family");
    PhiCurve curve;
    curve.fail_prob.assign(t_grid.size(), std::vector<double>(histories.size(), 0.0));

    for (size_t ti = 0; ti < t_grid.size(); ++ti) {
        const int t = t_grid[ti];
        const int n_block = std::max(1, static_cast<int>(std::lround(
                                            tprime_c * std::log(std::max(2.0, static_cast<double>(t))))));
        PhiPoint pt;
        pt.t = t;
        pt.n_block = std::min(n_block, t);
        for (size_t hi = 0; hi < histories.size(); ++hi) {
            CoupledConfig cc;
            cc.qa = histories[hi];
            cc.walker = walker;
            cc.lambda_star = lambda_star;
            cc.n = pt.n_block;
            cc.m = window_m;
            cc.aux_samples = aux_samples;
            struct Acc {
                uint64_t fail = 0;
            };
            const uint64_t salt = ti * 1000 + hi;
            Acc acc = parallel_chunks<Acc>(
                reps, 64, workers,
                [&](uint64_t begin, uint64_t end, Acc& a) {
                    for (uint64_t r = begin; r < end; ++r)
                        if (coupled_run(cc, master_seed ^ (salt * 0x9e3779b97f4a7c15ULL), r).tau_m >= 0)
                            ++a.fail;
                },
                [](Acc& into, Acc&& from) { into.fail += from.fail; });
            curve.fail_prob[ti][hi] = static_cast<double>(acc.fail) / static_cast<double>(reps);
        }
        // raw bound: the largest pair sum over distinct histories
        double top1 = 0.0, top2 = 0.0;
        for (double f : curve.fail_prob[ti]) {
            if (f >= top1) {
                top2 = top1;
                top1 = f;
            } else if (f > top2) {
                top2 = f;
            }
        }
        pt.raw_bound = histories.size() >= 2 ? top1 + top2 : 0.0;
        pt.raw_ci = 2.0 * 1.96 * std::sqrt(std::max(top1 * (1 - top1), 0.25 / static_cast<double>(reps)) /
                                           static_cast<double>(reps));
        // block-failure probability by simulating the Q-stream
        if (lambda_star > 0.0 && t > pt.n_block) {
            Rng brng = Rng::derive(master_seed, kTagBlock, ti, 0);
            const int sims = 20000;
            int fails = 0;
            std::vector<char> pos(static_cast<size_t>(t) + 1);
            for (int s = 0; s < sims; ++s) {
                for (int i = 0; i <= t; ++i) pos[static_cast<size_t>(i)] = brng.poisson(lambda_star) >= 1;
                bool found = false;
                for (int start = 0; start + pt.n_block <= t && start <= t - pt.n_block && !found; ++start) {
                    bool all = true;
                    for (int i = start; i <= start + pt.n_block && all; ++i)
                        if (!pos[static_cast<size_t>(i)]) all = false;
                    if (all && start <= t - pt.n_block) found = true;
                }
                if (!found) ++fails;
            }
            pt.block_fail = static_cast<double>(fails) / sims;
        } else {
            pt.block_fail = lambda_star > 0.0 ? 0.0 : 1.0;
        }
        pt.assembled = pt.raw_bound + 2.0 * pt.block_fail;
        curve.points.push_back(pt);
    }
    return curve;
}

FixedPathResult fixed_path_mixing(const EnvConfig& cfg, const Site& step_dir, int l,
                                  std::span<const uint8_t> sigma, std::span<const int> n_grid,
                                  int window_w, uint64_t attempt_budget, uint64_t reference_reps,
                                  uint64_t master_seed, int workers) {
    cfg.validate();
    if (l < 0 || static_cast<int>(sigma.size()) != l + 1)
        throw usage_error("fixed_path_mixing: sigma must hold l+1 bits for times -l..0");
    if (window_w < 1 || window_w > 8) throw usage_error("fixed_path_mixing: window must be 1..8");
    const int n_max = *std::max_element(n_grid.begin(), n_grid.end());
    const int dim = cfg.dim;

    auto path_at = [&](int t) {
        Site s;
        for (int d = 0; d < dim; ++d)
            s.c[static_cast<size_t>(d)] = static_cast<int16_t>(t * step_dir.c[static_cast<size_t>(d)]);
        return s;
    };

    struct Acc {
        std::vector<Histogram> hists;  // one per n
        uint64_t accepted = 0;
    };
    auto run_one = [&](Rng& rng, bool conditioned, std::vector<uint64_t>* keys) {
        LazyPathEngine eng(cfg, -l);
        for (int t = -l; t <= 0; ++t) {
            const int bit = eng.reveal_step(path_at(t), t, rng).count >= 1 ? 1 : 0;
            if (conditioned && bit != sigma[static_cast<size_t>(t + l)]) return false;
        }
        std::vector<uint8_t> bits(static_cast<size_t>(n_max + window_w) + 1, 0);
        for (int t = 1; t <= n_max + window_w; ++t)
            bits[static_cast<size_t>(t)] = eng.reveal_step(path_at(t), t, rng).count >= 1 ? 1 : 0;
        keys->clear();
        for (int n : n_grid) {
            uint64_t key = 0;
            for (int j = 1; j <= window_w; ++j)
                key |= static_cast<uint64_t>(bits[static_cast<size_t>(n + j)]) << (j - 1);
            keys->push_back(key);
        }
        return true;
    };

    auto collect = [&](uint64_t reps, bool conditioned, uint64_t tag) {
        return parallel_chunks<Acc>(
            reps, 256, workers,
            [&](uint64_t begin, uint64_t end, Acc& acc) {
                acc.hists.resize(n_grid.size());
                std::vector<uint64_t> keys;
                for (uint64_t r = begin; r < end; ++r) {
                    Rng rng = Rng::derive(master_seed, tag, r, 0);
                    if (run_one(rng, conditioned, &keys)) {
                        ++acc.accepted;
                        for (size_t i = 0; i < keys.size(); ++i) hist_add(acc.hists[i], keys[i]);
                    }
                }
            },
            [&](Acc& into, Acc&& from) {
                if (into.hists.empty()) into.hists.resize(n_grid.size());
                into.accepted += from.accepted;
                for (size_t i = 0; i < from.hists.size(); ++i)
                    for (const auto& [k, c] : from.hists[i]) into.hists[i][k] += c;
            });
    };

    Acc cond = collect(attempt_budget, true, kTagFixed);
    if (cond.accepted < 50) {
        std::ostringstream os;
        os << "fixed_path_mixing: conditioning event too rare (acceptance "
           << static_cast<double>(cond.accepted) / static_cast<double>(attempt_budget) << " over "
           << attempt_budget << " attempts)";
        throw resource_error(os.str());
    }
    Acc ref = collect(reference_reps, false, kTagFixedRef);

    FixedPathResult out;
    out.n_grid.assign(n_grid.begin(), n_grid.end());
    out.conditioning_rate =
        static_cast<double>(cond.accepted) / static_cast<double>(attempt_budget);
    out.conditioned_runs = cond.accepted;
    out.reference_runs = ref.accepted;
    Rng boot = Rng::derive(master_seed, kTagBoot, 0, 0);
    std::vector<double> logn, logtv;
    for (size_t i = 0; i < n_grid.size(); ++i) {
        std::ostringstream descr;
        descr << "Z-window (" << n_grid[i] << "," << n_grid[i] + window_w << "], " << (1 << window_w)
              << " cells";
        out.tv.push_back(tv_empirical(cond.hists[i], cond.accepted, ref.hists[i], ref.accepted,
                                      uint64_t{1} << window_w, descr.str(), boot));
        logn.push_back(std::log(static_cast<double>(n_grid[i])));
        logtv.push_back(std::log(std::max(out.tv.back().value, 1e-6)));
    }
    out.fitted_exponent = ls_slope(logn, logtv);
    return out;
}

double q_block_law_pvalue(double lambda_star, uint64_t draws, uint64_t seed) {
    if (lambda_star <= 0.0) throw usage_error("q_block_law_pvalue: lambda_star must be positive");
    Rng rng(seed, 77);
    const int kmax = 12;
    std::vector<double> obs(static_cast<size_t>(kmax) + 1, 0.0);
    for (uint64_t i = 0; i < draws; ++i) {
        const int64_t k = rng.poisson_ge1(lambda_star);
        obs[static_cast<size_t>(std::min<int64_t>(k, kmax))] += 1.0;
    }
    std::vector<double> expct(static_cast<size_t>(kmax) + 1, 0.0);
    const double denom = -std::expm1(-lambda_star);
    double cum = 0.0;
    for (int k = 1; k < kmax; ++k) {
        expct[static_cast<size_t>(k)] =
            static_cast<double>(draws) *
            std::exp(k * std::log(lambda_star) - lambda_star - std::lgamma(k + 1.0)) / denom;
        cum += expct[static_cast<size_t>(k)];
    }
    expct[static_cast<size_t>(kmax)] = static_cast<double>(draws) - cum;
    return chi_square_pvalue(obs, expct);
}

}  // namespace rwrw::mixing
