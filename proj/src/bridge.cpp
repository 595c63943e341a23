#include "rwrw/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace rwrw::bridge {

using condpoisson::ConstraintFamily;
using condpoisson::DecomposeMode;
using condpoisson::DecomposeSampler;
using condpoisson::RateTable;

int most_recent_hit(uint32_t pattern, int length) {
    for (int i = 1; i <= length; ++i)
        if (pattern & (1u << (length - i))) return i;
    return 0;
}

uint32_t sample_pinned_trace(const PathObservation& history, const JumpKernel& env_kernel, int dim,
                             int pin_time, Rng& rng, std::vector<Site>* positions_out) {
    const int L = history.length();
    if (pin_time < 1 || pin_time > L) throw usage_error("sample_pinned_trace: pin time out of range");
    std::vector<Site> pos(static_cast<size_t>(L));  // pos[i-1] = position at time -i
    pos[static_cast<size_t>(pin_time - 1)] = history.at(pin_time);
    Site step;
    // forward from the pin towards time -1
    for (int i = pin_time - 1; i >= 1; --i) {
        env_kernel.sample(rng, step);
        pos[static_cast<size_t>(i - 1)] = pos[static_cast<size_t>(i)].plus(step, dim);
    }
    // backward from the pin towards time -L
    for (int i = pin_time + 1; i <= L; ++i) {
        env_kernel.sample_reversed(rng, step);
        pos[static_cast<size_t>(i - 1)] = pos[static_cast<size_t>(i - 2)].plus(step, dim);
    }
    uint32_t pattern = 0;
    for (int i = 1; i <= L; ++i)
        if (pos[static_cast<size_t>(i - 1)] == history.at(i)) pattern |= 1u << (L - i);
    if (positions_out) *positions_out = std::move(pos);
    return pattern;
}

BridgedRates rates_from_history(const PathObservation& history, const JumpKernel& env_kernel,
                                int dim, double lambda, uint64_t mc_samples, Rng& rng) {
    const int L = history.length();
    if (L < 1) throw usage_error("rates_from_history: empty history");
    if (L > 20) throw usage_error("rates_from_history: history too long");
    if (mc_samples == 0) throw usage_error("rates_from_history: need samples");

    BridgedRates out;
    out.table = RateTable::zeros(L);
    out.ci.assign(size_t{1} << L, 0.0);
    out.constraints.positions = history.occupied_times();
    out.samples_per_anchor = mc_samples;

    uint32_t vmask = 0;
    for (int i : history.vacant_times()) vmask |= 1u << (L - i);

    // one pinned ensemble per anchor time; a pattern is read off the ensemble
    // pinned at its most recent hit, so each is estimated exactly once
    std::vector<uint64_t> freq(size_t{1} << L, 0);
    for (int k = 1; k <= L; ++k) {
        for (uint64_t s = 0; s < mc_samples; ++s) {
            const uint32_t pat = sample_pinned_trace(history, env_kernel, dim, k, rng);
            if (most_recent_hit(pat, L) == k) ++freq[pat];
        }
    }
    for (uint32_t x = 0; x < freq.size(); ++x) {
        if (x & vmask) continue;  // structural zero: pattern hits a vacant time
        if (x == 0) continue;
        const double p = static_cast<double>(freq[x]) / static_cast<double>(mc_samples);
        out.table.rate[x] = lambda * p;
        out.ci[x] = lambda * 1.959963984540054 * std::sqrt(std::max(p * (1.0 - p), 0.0) /
                                                           static_cast<double>(mc_samples));
    }
    return out;
}

RateEstimate estimate_lambda_future(const PathObservation& history, std::span<const Site> future,
                                    int t, const JumpKernel& env_kernel, int dim, double lambda,
                                    uint64_t mc_samples, Rng& rng) {
    if (t < 0 || t >= static_cast<int>(future.size()))
        throw usage_error("estimate_lambda_future: t out of range");
    if (lambda == 0.0) return {0.0, 0.0, mc_samples};
    const JumpKernel reversed = env_kernel.reversed();
    uint64_t clear = 0;
    Site step;
    for (uint64_t i = 0; i < mc_samples; ++i) {
        Site cur = future[static_cast<size_t>(t)];
        bool ok = true;
        for (int s = t - 1; s >= -history.length() && ok; --s) {
            reversed.sample(rng, step);
            cur = cur.plus(step, dim);
            if (s >= 0) {
                if (cur == future[static_cast<size_t>(s)]) ok = false;
            } else if (cur == history.at(-s)) {
                ok = false;
            }
        }
        if (ok) ++clear;
    }
    const double p = static_cast<double>(clear) / static_cast<double>(mc_samples);
    RateEstimate est;
    est.value = lambda * p;
    est.ci = lambda * 1.959963984540054 *
             std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(mc_samples));
    est.samples = mc_samples;
    return est;
}

namespace {

std::vector<Site> walker_range(const WalkerConfig& w) {
    std::vector<Site> range;
    auto add_support = [&](const JumpKernel& k) {
        for (const auto& [site, p] : k.atoms())
            if (p > 0.0 && std::find(range.begin(), range.end(), site) == range.end())
                range.push_back(site);
    };
    add_support(w.alpha0);
    add_support(w.alpha1);
    return range;
}

std::string describe_shape(const std::vector<Site>& steps, int dim) {
    std::ostringstream os;
    for (size_t i = 0; i < steps.size(); ++i) {
        os << (i ? ";" : "") << "(";
        for (int d = 0; d < dim; ++d) os << (d ? "," : "") << steps[i].c[static_cast<size_t>(d)];
        os << ")";
    }
    return os.str();
}

}  // namespace

LambdaStarEstimate lambda_star_sweep(const EnvConfig& cfg, const WalkerConfig& walker,
                                     int all_shape_len, int long_len, uint64_t mc_samples,
                                     Rng& rng) {
    cfg.validate();
    const auto range = walker_range(walker);
    if (range.empty()) throw usage_error("lambda_star_sweep: empty walker range");

    // candidate histories as backward step sequences (step i leads from
    // gamma_{-i-1} to gamma_{-i})
    std::vector<std::vector<Site>> shapes;
    double count = 1.0;
    for (int l = 1; l <= all_shape_len; ++l) {
        count *= static_cast<double>(range.size());
        if (count > 40000.0)
            throw resource_error("lambda_star_sweep: shape family too large; lower all_shape_len");
    }
    std::vector<size_t> odo;
    for (int l = 1; l <= all_shape_len; ++l) {
        odo.assign(static_cast<size_t>(l), 0);
        for (;;) {
            std::vector<Site> steps(static_cast<size_t>(l));
            for (int i = 0; i < l; ++i) steps[static_cast<size_t>(i)] = range[odo[static_cast<size_t>(i)]];
            shapes.push_back(std::move(steps));
            int d = 0;
            while (d < l && odo[static_cast<size_t>(d)] + 1 == range.size()) {
                odo[static_cast<size_t>(d)] = 0;
                ++d;
            }
            if (d == l) break;
            ++odo[static_cast<size_t>(d)];
        }
    }
    // straight and staircase shapes up to long_len
    for (int l = all_shape_len + 1; l <= long_len; ++l) {
        for (const auto& s : range) {
            if (s == Site::origin()) continue;
            shapes.push_back(std::vector<Site>(static_cast<size_t>(l), s));
        }
        size_t a = 0;
        while (a < range.size() && range[a] == Site::origin()) ++a;
        size_t b = a + 1;
        while (b < range.size() && range[b] == Site::origin()) ++b;
        if (b < range.size()) {
            std::vector<Site> stair(static_cast<size_t>(l));
            for (int i = 0; i < l; ++i) stair[static_cast<size_t>(i)] = i % 2 ? range[a] : range[b];
            shapes.push_back(std::move(stair));
        }
    }

    LambdaStarEstimate best;
    best.value = cfg.lambda + 1.0;
    best.family_size = static_cast<int>(shapes.size());
    const Site origin = Site::origin();
    std::vector<Site> future{origin};
    for (const auto& steps : shapes) {
        std::vector<Site> gamma(steps.size());
        Site cur = origin;
        for (size_t i = 0; i < steps.size(); ++i) {
            cur = cur.minus(steps[i], cfg.dim);
            gamma[i] = cur;
        }
        PathObservation obs(std::move(gamma), std::vector<uint8_t>(steps.size(), 0));
        auto est = estimate_lambda_future(obs, future, 0, cfg.env_kernel, cfg.dim, cfg.lambda,
                                          mc_samples, rng);
        if (est.value < best.value) {
            best.value = est.value;
            best.ci = est.ci;
            best.argmin = describe_shape(steps, cfg.dim);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// QASampler
// ---------------------------------------------------------------------------

QASampler::QASampler(EnvConfig cfg, PathObservation history, uint64_t rate_mc_samples,
                     Rng& rate_rng, uint64_t lift_budget)
    : cfg_(std::move(cfg)), history_(std::move(history)), lift_budget_(lift_budget) {
    cfg_.validate();
    if (history_.length() > cfg_.past_depth)
        throw usage_error("QASampler: history longer than past_depth");
    if (history_.empty()) throw usage_error("QASampler: empty history");
    rates_ = rates_from_history(history_, cfg_.env_kernel, cfg_.dim, cfg_.lambda, rate_mc_samples,
                                rate_rng);
    condpoisson::check_feasible(rates_.table, rates_.constraints);
    sampler_ = std::make_unique<DecomposeSampler>(rates_.table, rates_.constraints);
}

QASampler::AnchoredSet QASampler::sample_anchored(Rng& rng) const {
    AnchoredSet out;
    out.decomposition = const_cast<DecomposeSampler&>(*sampler_).sample(
        rng, DecomposeMode::exact_conditional);
    const int L = history_.length();

    // patterns claimed by the distinguished level anchors
    std::vector<std::pair<uint32_t, const condpoisson::DecompositionSample::Anchor*>> claims;
    for (const auto& a : out.decomposition.anchors) claims.emplace_back(a.lifted_code, &a);

    for (uint32_t pattern = 0; pattern < out.decomposition.counts.size(); ++pattern) {
        const int64_t m = out.decomposition.counts[pattern];
        if (m == 0) continue;
        const int pin = most_recent_hit(pattern, L);
        if (pin == 0) throw internal_error("QASampler: conditioned particle with empty trace");
        for (int64_t i = 0; i < m; ++i) {
            AnchoredParticle p;
            p.pattern = pattern;
            // conditioned path: pinned at the most recent hit, rejected until
            // the whole trace matches the pattern
            uint64_t attempts = 0;
            for (;;) {
                if (++attempts > lift_budget_) {
                    std::ostringstream os;
                    os << "QASampler: trace-conditioned path budget exhausted (pattern "
                       << condpoisson::BitIndex{pattern, L}.to_string()
                       << ", implied acceptance < " << 1.0 / static_cast<double>(lift_budget_)
                       << ")";
                    throw resource_error(os.str());
                }
                std::vector<Site> pos;
                if (sample_pinned_trace(history_, cfg_.env_kernel, cfg_.dim, pin, rng, &pos) ==
                    pattern) {
                    p.past = std::move(pos);
                    break;
                }
            }
            auto claim = std::find_if(claims.begin(), claims.end(),
                                      [&](const auto& c) { return c.first == pattern; });
            if (claim != claims.end()) {
                p.is_level_anchor = true;
                p.anchor_time = -claim->second->first_active;
                claims.erase(claim);
            } else {
                p.anchor_time = -pin;
            }
            out.particles.push_back(std::move(p));
        }
    }
    if (!claims.empty()) throw internal_error("QASampler: unmatched level anchor");
    return out;
}

int64_t QASampler::FieldSample::count(const Site& x, int t) const {
    int64_t n = base.count(x, t);
    for (const auto& p : anchored)
        if (t >= p.min_time() && t <= p.max_time() && p.at(t) == x) ++n;
    return n;
}

QASampler::FieldSample QASampler::sample_field(int query_radius, Rng& rng) const {
    FieldSample out{sample_avoiding_field(cfg_, history_, query_radius, rng), {}, cfg_.dim};
    auto anchored = sample_anchored(rng);
    Site step;
    for (auto& ap : anchored.particles) {
        Particle p;
        p.anchor_time = -1;
        p.anchor = ap.past[0];
        p.backward.assign(ap.past.begin() + 1, ap.past.end());
        Site cur = p.anchor;
        for (int t = 0; t <= cfg_.horizon; ++t) {
            cfg_.env_kernel.sample(rng, step);
            cur = cur.plus(step, cfg_.dim);
            p.forward.push_back(cur);
        }
        out.anchored.push_back(std::move(p));
    }
    return out;
}

void write_bridged(std::ostream& os, const BridgedRates& rates,
                   const QASampler::AnchoredSet& sample) {
    condpoisson::write_instance(os, rates.table, rates.constraints);
    for (const auto& p : sample.particles) os << "anchor=" << p.anchor_time << "\n";
}

// ---------------------------------------------------------------------------
// SplitDriver / qrs_split
// ---------------------------------------------------------------------------

SplitStep SplitDriver::step(const Site& x, int t, int64_t q_t, double u_t, Rng& rng) {
    SplitStep out;
    const auto adv = engine_->advance_and_count(x, t, rng);
    out.s = adv.anchored_first_hits;
    out.rate_estimate = engine_->estimate_fresh_rate(x, t, aux_, rng);
    out.q = q_t;
    out.r = poisson_icdf(std::max(out.rate_estimate - lambda_star_, 0.0), u_t);
    engine_->add_fresh(x, out.q + out.r);
    engine_->log_step(x, t);
    out.newly_seen = out.q + out.r + adv.anchored_first_hits;
    out.count = adv.count + out.q + out.r;
    return out;
}

std::vector<SplitStep> qrs_split(const std::vector<SplitStep>& run) {
    for (const auto& s : run)
        if (s.q + s.r + s.s != s.newly_seen)
            throw internal_error("qrs_split: Q+R+S does not match the newly seen count");
    return run;
}

}  // namespace rwrw::bridge
