#include "rwrw/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rwrw {

void EnvConfig::validate() const {
    if (dim < 1 || dim > kMaxDim) throw usage_error("EnvConfig: dim must be in 1..9");
    if (lambda < 0.0) throw usage_error("EnvConfig: lambda must be >= 0");
    if (horizon < 1) throw usage_error("EnvConfig: horizon must be >= 1");
    if (past_depth < 0) throw usage_error("EnvConfig: past_depth must be >= 0");
    if (env_kernel.dim() != dim) throw usage_error("EnvConfig: kernel dimension mismatch");
}

PathObservation::PathObservation(std::vector<Site> gamma_recent_first, std::vector<uint8_t> sigma)
    : gamma_(std::move(gamma_recent_first)), sigma_(std::move(sigma)) {
    if (gamma_.size() != sigma_.size()) throw usage_error("PathObservation: gamma/sigma size mismatch");
    for (uint8_t b : sigma_)
        if (b > 1) throw usage_error("PathObservation: sigma bits must be 0/1");
}

std::vector<int> PathObservation::occupied_times() const {
    std::vector<int> out;
    for (int i = 1; i <= length(); ++i)
        if (sigma(i) == 1) out.push_back(i);
    return out;
}

std::vector<int> PathObservation::vacant_times() const {
    std::vector<int> out;
    for (int i = 1; i <= length(); ++i)
        if (sigma(i) == 0) out.push_back(i);
    return out;
}

void PathObservation::validate_steps(const JumpKernel& alpha0, const JumpKernel& alpha1,
                                     int dim) const {
    auto in_range = [&](const Site& step) {
        return alpha0.prob(step) > 0.0 || alpha1.prob(step) > 0.0;
    };
    for (int i = 1; i <= length(); ++i) {
        const Site to = i == 1 ? Site::origin() : at(i - 1);
        const Site step = to.minus(at(i), dim);
        if (!in_range(step)) {
            std::ostringstream os;
            os << "PathObservation: increment at time -" << i << " outside the walker range";
            throw usage_error(os.str());
        }
    }
}

PathObservation straight_history(int dim, const Site& step, int len, std::vector<uint8_t> sigma) {
    std::vector<Site> gamma(static_cast<size_t>(len));
    Site cur = Site::origin();
    for (int i = 1; i <= len; ++i) {
        cur = cur.minus(step, dim);
        gamma[static_cast<size_t>(i - 1)] = cur;
    }
    return PathObservation(std::move(gamma), std::move(sigma));
}

PathObservation staircase_history(int dim, const Site& step_a, const Site& step_b, int len,
                                  std::vector<uint8_t> sigma) {
    std::vector<Site> gamma(static_cast<size_t>(len));
    Site cur = Site::origin();
    for (int i = 1; i <= len; ++i) {
        cur = cur.minus(i % 2 ? step_a : step_b, dim);
        gamma[static_cast<size_t>(i - 1)] = cur;
    }
    return PathObservation(std::move(gamma), std::move(sigma));
}

Site Particle::at(int t) const {
    if (t == anchor_time) return anchor;
    if (t > anchor_time) {
        const size_t i = static_cast<size_t>(t - anchor_time - 1);
        if (i >= forward.size()) throw usage_error("Particle::at: beyond forward window");
        return forward[i];
    }
    const size_t i = static_cast<size_t>(anchor_time - t - 1);
    if (i >= backward.size()) throw usage_error("Particle::at: beyond backward window");
    return backward[i];
}

std::vector<std::pair<Site, int64_t>> sample_initial_counts(const EnvConfig& cfg, int box_radius,
                                                            Rng& rng) {
    cfg.validate();
    if (box_radius < 0) throw usage_error("sample_initial_counts: negative radius");
    std::vector<std::pair<Site, int64_t>> out;
    const int side = 2 * box_radius + 1;
    int64_t cells = 1;
    for (int d = 0; d < cfg.dim; ++d) {
        cells *= side;
        if (cells > (int64_t{1} << 33)) throw resource_error("sample_initial_counts: box too large");
    }
    Site x;
    for (int d = 0; d < cfg.dim; ++d) x.c[static_cast<size_t>(d)] = static_cast<int16_t>(-box_radius);
    for (int64_t i = 0; i < cells; ++i) {
        const int64_t k = cfg.lambda > 0.0 ? rng.poisson(cfg.lambda) : 0;
        if (k > 0) out.emplace_back(x, k);
        // odometer over the box
        for (int d = 0; d < cfg.dim; ++d) {
            if (x.c[static_cast<size_t>(d)] < box_radius) {
                ++x.c[static_cast<size_t>(d)];
                break;
            }
            x.c[static_cast<size_t>(d)] = static_cast<int16_t>(-box_radius);
        }
    }
    return out;
}

std::vector<Particle> evolve_field(const std::vector<std::pair<Site, int64_t>>& initial,
                                   const JumpKernel& kernel, int steps_forward, int steps_backward,
                                   Rng& rng) {
    if (steps_forward < 0 || steps_backward < 0) throw usage_error("evolve_field: negative steps");
    std::vector<Particle> out;
    const int dim = kernel.dim();
    Site step;
    for (const auto& [site, count] : initial) {
        for (int64_t i = 0; i < count; ++i) {
            Particle p;
            p.anchor_time = 0;
            p.anchor = site;
            p.forward.reserve(static_cast<size_t>(steps_forward));
            Site cur = site;
            for (int s = 0; s < steps_forward; ++s) {
                kernel.sample(rng, step);
                cur = cur.plus(step, dim);
                p.forward.push_back(cur);
            }
            cur = site;
            p.backward.reserve(static_cast<size_t>(steps_backward));
            for (int s = 0; s < steps_backward; ++s) {
                kernel.sample_reversed(rng, step);
                cur = cur.plus(step, dim);
                p.backward.push_back(cur);
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// ExplicitField
// ---------------------------------------------------------------------------

ExplicitField::ExplicitField(const EnvConfig& cfg, int query_radius, Rng& rng)
    : cfg_(cfg), query_radius_(query_radius) {
    cfg_.validate();
    if (query_radius < 0) throw usage_error("ExplicitField: negative query radius");
    box_radius_ = query_radius + cfg.env_kernel.range() * (cfg.horizon + cfg.past_depth);
    side_ = 2 * box_radius_ + 1;
    cells_per_time_ = 1;
    for (int d = 0; d < cfg_.dim; ++d) {
        cells_per_time_ *= static_cast<size_t>(side_);
        if (cells_per_time_ > (size_t{1} << 33)) throw resource_error("ExplicitField: box too large");
    }
    const size_t times = static_cast<size_t>(cfg_.horizon + cfg_.past_depth + 1);
    if (cells_per_time_ * times > (size_t{3} << 28))
        throw resource_error("ExplicitField: occupancy table too large");
    auto initial = sample_initial_counts(cfg_, box_radius_, rng);
    particles_ = evolve_field(initial, cfg_.env_kernel, cfg_.horizon, cfg_.past_depth, rng);
    index_particles();
}

size_t ExplicitField::cell_index(const Site& x, int t) const {
    size_t idx = static_cast<size_t>(t + cfg_.past_depth) * cells_per_time_;
    size_t stride = 1;
    for (int d = 0; d < cfg_.dim; ++d) {
        idx += stride * static_cast<size_t>(x.c[static_cast<size_t>(d)] + box_radius_);
        stride *= static_cast<size_t>(side_);
    }
    return idx;
}

void ExplicitField::index_particles() {
    const size_t times = static_cast<size_t>(cfg_.horizon + cfg_.past_depth + 1);
    occupancy_.assign(cells_per_time_ * times, 0);
    for (const auto& p : particles_) {
        for (int t = -cfg_.past_depth; t <= cfg_.horizon; ++t) {
            const Site pos = p.at(t);
            if (pos.linf(cfg_.dim) <= box_radius_) ++occupancy_[cell_index(pos, t)];
        }
    }
}

int64_t ExplicitField::count(const Site& x, int t) const {
    if (t < -cfg_.past_depth || t > cfg_.horizon || x.linf(cfg_.dim) > query_radius_)
        throw usage_error("ExplicitField: query outside the safe window");
    return occupancy_[cell_index(x, t)];
}

void ExplicitField::remove_hitting(const PathObservation& history) {
    if (history.empty()) return;
    if (history.length() > cfg_.past_depth)
        throw usage_error("ExplicitField: history longer than past_depth");
    auto hits = [&](const Particle& p) {
        for (int i = 1; i <= history.length(); ++i)
            if (p.at(-i) == history.at(i)) return true;
        return false;
    };
    std::erase_if(particles_, hits);
    index_particles();
}

bool ExplicitField::matches(const PathObservation& history) const {
    for (int i = 1; i <= history.length(); ++i) {
        if (history.at(i).linf(cfg_.dim) > query_radius_)
            throw usage_error("ExplicitField: history point outside the query radius");
        if (bit(history.at(i), -i) != history.sigma(i)) return false;
    }
    return true;
}

ExplicitField sample_avoiding_field(const EnvConfig& cfg, const PathObservation& history,
                                    int query_radius, Rng& rng) {
    ExplicitField field(cfg, query_radius, rng);
    field.remove_hitting(history);
    return field;
}

ExplicitField sample_conditioned_field_rejection(const EnvConfig& cfg,
                                                 const PathObservation& history, int query_radius,
                                                 Rng& rng, uint64_t max_attempts,
                                                 uint64_t* attempts_out) {
    for (uint64_t attempt = 1; attempt <= max_attempts; ++attempt) {
        ExplicitField field(cfg, query_radius, rng);
        if (field.matches(history)) {
            if (attempts_out) *attempts_out = attempt;
            return field;
        }
    }
    std::ostringstream os;
    os << "sample_conditioned_field_rejection: no acceptance in " << max_attempts << " attempts";
    throw resource_error(os.str());
}

// ---------------------------------------------------------------------------
// LazyPathEngine
// ---------------------------------------------------------------------------

LazyPathEngine::LazyPathEngine(const EnvConfig& cfg, int start_time)
    : cfg_(cfg), start_time_(start_time), next_time_(start_time),
      reversed_(cfg.env_kernel.reversed()) {
    cfg_.validate();
}

void LazyPathEngine::set_history(const PathObservation& history) {
    if (next_time_ != start_time_) throw usage_error("LazyPathEngine: history after queries began");
    if (history.length() > cfg_.past_depth)
        throw usage_error("LazyPathEngine: history longer than past_depth");
    if (start_time_ != 0 && !history.empty())
        throw usage_error("LazyPathEngine: histories attach at start time 0");
    history_ = history;
}

void LazyPathEngine::add_anchored(const Site& pos_at_prev, int anchor_tag) {
    if (next_time_ != start_time_) throw usage_error("LazyPathEngine: anchored after queries began");
    revealed_.push_back({pos_at_prev, anchor_tag, false});
}

bool LazyPathEngine::backward_path_clear(const Site& x, int t, Rng& rng) const {
    // walk the candidate backward from (x, t); it is a double count if it
    // passes through a logged query point, and forbidden if it touches gamma
    Site cur = x;
    Site step;
    const int floor_time = history_.empty() ? start_time_ : -history_.length();
    for (int s = t - 1; s >= floor_time; --s) {
        reversed_.sample(rng, step);
        cur = cur.plus(step, cfg_.dim);
        if (s >= start_time_) {
            if (cur == logged_[static_cast<size_t>(s - start_time_)]) return false;
        } else if (s <= -1) {
            if (cur == history_.at(-s)) return false;
        }
    }
    return true;
}

LazyPathEngine::StepResult LazyPathEngine::advance_and_count(const Site& x, int t, Rng& rng) {
    if (t != next_time_) throw usage_error("LazyPathEngine: queries must advance one step in time");
    Site step;
    StepResult r;
    for (auto& p : revealed_) {
        cfg_.env_kernel.sample(rng, step);
        p.pos = p.pos.plus(step, cfg_.dim);
        if (p.pos == x) {
            ++r.from_revealed;
            if (p.tag >= 0 && !p.hit) {
                p.hit = true;
                ++r.anchored_first_hits;
            }
        }
    }
    r.count = r.from_revealed;
    return r;
}

double LazyPathEngine::estimate_fresh_rate(const Site& x, int t, int aux_samples, Rng& rng) {
    if (cfg_.lambda == 0.0) return 0.0;
    int clear = 0;
    for (int i = 0; i < aux_samples; ++i)
        if (backward_path_clear(x, t, rng)) ++clear;
    return cfg_.lambda * static_cast<double>(clear) / static_cast<double>(aux_samples);
}

int64_t LazyPathEngine::sample_fresh_thinned(const Site& x, int t, Rng& rng) {
    if (cfg_.lambda == 0.0) return 0;
    const int64_t k = rng.poisson(cfg_.lambda);
    int64_t kept = 0;
    for (int64_t i = 0; i < k; ++i)
        if (backward_path_clear(x, t, rng)) ++kept;
    return kept;
}

void LazyPathEngine::add_fresh(const Site& x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) revealed_.push_back({x, -1, false});
}

void LazyPathEngine::log_step(const Site& x, int t) {
    if (t != next_time_) throw usage_error("LazyPathEngine: out-of-order log");
    logged_.push_back(x);
    ++next_time_;
}

LazyPathEngine::StepResult LazyPathEngine::reveal_step(const Site& x, int t, Rng& rng) {
    StepResult r = advance_and_count(x, t, rng);
    r.fresh = sample_fresh_thinned(x, t, rng);
    add_fresh(x, r.fresh);
    r.count += r.fresh;
    log_step(x, t);
    return r;
}

int64_t poisson_icdf(double lambda, double u) {
    if (lambda < 0.0) throw usage_error("poisson_icdf: negative rate");
    if (lambda == 0.0) return 0;
    double term = std::exp(-lambda);
    double cum = term;
    int64_t k = 0;
    while (u > cum && k < 4000) {
        ++k;
        term *= lambda / static_cast<double>(k);
        cum += term;
    }
    return k;
}

}  // namespace rwrw
