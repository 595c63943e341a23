#include "rwrw/cond_poisson.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace rwrw::condpoisson {

namespace {

constexpr int kMaxN = 20;

double poisson_log_pmf(int64_t k, double lambda) {
    if (lambda == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return static_cast<double>(k) * std::log(lambda) - lambda - std::lgamma(static_cast<double>(k) + 1.0);
}

// P(intersection of "at least one hit" events) for independent Poissons.
// gval[x] is the log-factor a code contributes when it is forced pointless
// (-lambda_x for the untruncated law); base_log collects the complementary
// factors. cbits[j] is the code mask of constraint j.
double inclusion_exclusion(std::span<const double> gval, double base_log,
                           std::span<const uint32_t> cbits) {
    const int k = static_cast<int>(cbits.size());
    if (k == 0) return std::exp(base_log);
    if (k > 20) throw usage_error("inclusion_exclusion: too many constraints");
    std::vector<double> bucket(size_t{1} << k, 0.0);
    for (uint32_t x = 0; x < gval.size(); ++x) {
        if (gval[x] == 0.0) continue;
        uint32_t q = 0;
        for (int j = 0; j < k; ++j)
            if (x & cbits[j]) q |= 1u << j;
        bucket[q] += gval[x];
    }
    // subset-sum so bucket[m] = sum over q subset of m
    for (int j = 0; j < k; ++j)
        for (uint32_t m = 0; m < (1u << k); ++m)
            if (m & (1u << j)) bucket[m] += bucket[m ^ (1u << j)];
    const uint32_t full = (1u << k) - 1;
    const double total = bucket[full];
    double p = 0.0;
    for (uint32_t s = 0; s <= full; ++s) {
        const double hit = total - bucket[full ^ s];
        const double term = std::exp(base_log + hit);
        p += (std::popcount(s) & 1) ? -term : term;
    }
    return p;
}

// Interpolation tables for the per-cell null mean of |phat - p| (binomial MAD)
// and |phat1 - phat2| (Skellam MAD), both scaled so the value is f(mu)/n.
class MadTable {
  public:
    MadTable(bool pair) : pair_(pair) {
        knots_.resize(kKnots);
        for (int i = 0; i < kKnots; ++i) {
            const double logmu = kLogLo + (kLogHi - kLogLo) * i / (kKnots - 1);
            knots_[i] = eval(std::exp(logmu));
        }
    }

    double value(double mu) const {
        if (mu <= 0.0) return 0.0;
        const double logmu = std::log(mu);
        if (logmu >= kLogHi) return pair_ ? 2.0 * std::sqrt(mu / kPi) : std::sqrt(2.0 * mu / kPi);
        if (logmu <= kLogLo) return pair_ ? 2.0 * mu : 2.0 * mu;  // both ~ 2mu as mu -> 0
        const double pos = (logmu - kLogLo) / (kLogHi - kLogLo) * (kKnots - 1);
        const int i = static_cast<int>(pos);
        const double f = pos - i;
        return knots_[i] * (1.0 - f) + knots_[i + 1] * f;
    }

  private:
    static constexpr double kPi = 3.141592653589793;
    static constexpr int kKnots = 4096;
    static constexpr double kLogLo = -30.0;
    static constexpr double kLogHi = 7.0;

    double eval(double mu) const {
        if (!pair_) {
            const double m = std::ceil(mu);
            return 2.0 * m * std::exp(m * std::log(mu) - mu - std::lgamma(m + 1.0));
        }
        if (mu > 40.0) return 2.0 * std::sqrt(mu / kPi);
        const double i0 = std::cyl_bessel_i(0.0, 2.0 * mu);
        const double i1 = std::cyl_bessel_i(1.0, 2.0 * mu);
        return 2.0 * mu * std::exp(-2.0 * mu) * (i0 + i1);
    }

    bool pair_;
    std::vector<double> knots_;
};

const MadTable& binom_mad_table() {
    static MadTable t(false);
    return t;
}
const MadTable& skellam_mad_table() {
    static MadTable t(true);
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// BitIndex
// ---------------------------------------------------------------------------

std::string BitIndex::to_string() const {
    std::string s(static_cast<size_t>(n), '0');
    for (int i = 1; i <= n; ++i)
        if (bit(i)) s[static_cast<size_t>(i - 1)] = '1';
    return s;
}

BitIndex BitIndex::from_string(const std::string& bits) {
    BitIndex b;
    b.n = static_cast<int>(bits.size());
    if (b.n < 1 || b.n > kMaxN) throw usage_error("BitIndex: length must be in 1..20");
    for (int i = 1; i <= b.n; ++i) {
        const char c = bits[static_cast<size_t>(i - 1)];
        if (c != '0' && c != '1') throw usage_error("BitIndex: invalid character");
        if (c == '1') b.code |= 1u << (b.n - i);
    }
    return b;
}

Ordering lex_compare(const BitIndex& x, const BitIndex& y) {
    if (x.n != y.n) throw usage_error("lex_compare: length mismatch");
    if (x.code < y.code) return Ordering::less;
    if (x.code > y.code) return Ordering::greater;
    return Ordering::equal;
}

// ---------------------------------------------------------------------------
// RateTable / ConstraintFamily
// ---------------------------------------------------------------------------

RateTable RateTable::zeros(int n) {
    RateTable t;
    if (n < 1 || n > kMaxN) throw usage_error("RateTable: n must be in 1..20");
    t.n = n;
    t.rate.assign(size_t{1} << n, 0.0);
    return t;
}

double RateTable::max_rate() const {
    double m = 0.0;
    for (double r : rate) m = std::max(m, r);
    return m;
}

double RateTable::total() const {
    double s = 0.0;
    for (double r : rate) s += r;
    return s;
}

void RateTable::validate() const {
    if (n < 1 || n > kMaxN) throw usage_error("RateTable: n must be in 1..20");
    if (rate.size() != (size_t{1} << n)) throw usage_error("RateTable: rate size != 2^n");
    for (double r : rate)
        if (!(r >= 0.0) || !std::isfinite(r)) throw usage_error("RateTable: rates must be finite and >= 0");
}

void ConstraintFamily::validate(int n) const {
    int prev = 0;
    for (int p : positions) {
        if (p <= prev || p > n) throw usage_error("ConstraintFamily: positions must be ascending in 1..n");
        prev = p;
    }
}

uint32_t ConstraintFamily::mask(int n) const {
    uint32_t m = 0;
    for (int p : positions) m |= 1u << (n - p);
    return m;
}

void check_feasible(const RateTable& rates, const ConstraintFamily& constraints) {
    rates.validate();
    constraints.validate(rates.n);
    for (int p : constraints.positions) {
        const uint32_t bit = 1u << (rates.n - p);
        double s = 0.0;
        for (uint32_t x = 0; x < rates.rate.size(); ++x)
            if (x & bit) s += rates.rate[x];
        if (!(s > 0.0)) {
            std::ostringstream os;
            os << "infeasible constraint at position " << p << " (total rate 0)";
            throw domain_error(os.str());
        }
    }
}

// ---------------------------------------------------------------------------
// min_domination_shift
// ---------------------------------------------------------------------------

int min_domination_shift(double lambda, int truncation, double tail_tolerance) {
    if (!(lambda > 0.0)) throw domain_error("min_domination_shift: lambda must be > 0");
    if (truncation < 8) throw usage_error("min_domination_shift: truncation too small");
    const int t = std::max(truncation, static_cast<int>(2.0 * lambda) + 50);
    // survival S[k] = P(Z >= k), accumulated from the far tail so deep values
    // keep full relative precision
    std::vector<double> surv(static_cast<size_t>(t) + 2, 0.0);
    const double far = std::exp(poisson_log_pmf(t + 1, lambda)) /
                       std::max(1e-12, 1.0 - lambda / (t + 2.0));
    surv[static_cast<size_t>(t) + 1] = far;
    for (int k = t; k >= 0; --k)
        surv[static_cast<size_t>(k)] =
            surv[static_cast<size_t>(k) + 1] + std::exp(poisson_log_pmf(k, lambda));
    const double s1 = -std::expm1(-lambda);  // P(Z >= 1)

    for (int n = 0; n <= 64; ++n) {
        bool ok = true;
        for (int k = 1; k <= t && ok; ++k) {
            const double lhs = surv[static_cast<size_t>(k)];
            const double rhs = k - n <= 0 ? s1 : s1 * surv[static_cast<size_t>(k - n)];
            if (lhs > rhs * (1.0 + 1e-12) + 1e-300) ok = false;
        }
        if (!ok) continue;
        if (n >= 1) {
            // factorial-ratio certificate: (1-e^-lambda) * (t+1)(t)...(t-n+2) >= lambda^n
            double logcert = std::log(s1);
            for (int j = 0; j < n; ++j) logcert += std::log(static_cast<double>(t + 1 - j));
            if (logcert >= n * std::log(lambda)) return n;
        }
        if (surv[static_cast<size_t>(t) + 1] / s1 <= tail_tolerance) return n;
    }
    throw internal_error("min_domination_shift: no shift found up to 64");
}

// ---------------------------------------------------------------------------
// ExactConditional
// ---------------------------------------------------------------------------

ExactConditional::ExactConditional(const RateTable& rates, const ConstraintFamily& constraints,
                                   int count_cap)
    : rates_(rates), constraints_(constraints), cap_(count_cap) {
    if (count_cap < 1) throw usage_error("exact_conditional_pmf: count_cap must be >= 1");
    check_feasible(rates_, constraints_);
    const size_t m = rates_.rate.size();
    pmf_.resize(m);
    std::vector<double> log_pcap(m), g_plain(m), g_trunc(m);
    double base = 0.0;
    tail_bound_ = 0.0;
    for (size_t x = 0; x < m; ++x) {
        pmf_[x].resize(static_cast<size_t>(cap_) + 1);
        double cum = 0.0;
        for (int k = 0; k <= cap_; ++k) {
            pmf_[x][static_cast<size_t>(k)] = std::exp(poisson_log_pmf(k, rates_.rate[x]));
            cum += pmf_[x][static_cast<size_t>(k)];
        }
        cum = std::min(cum, 1.0);
        tail_bound_ += 1.0 - cum;
        log_pcap[x] = std::log(cum);
        base += log_pcap[x];
        g_plain[x] = -rates_.rate[x];
        g_trunc[x] = -rates_.rate[x] - log_pcap[x];
    }
    std::vector<uint32_t> cbits;
    for (int p : constraints_.positions) cbits.push_back(1u << (rates_.n - p));
    p_constraint_ = inclusion_exclusion(g_plain, 0.0, cbits);
    p_trunc_ = inclusion_exclusion(g_trunc, base, cbits);
    if (!(p_trunc_ > 0.0)) throw domain_error("exact_conditional_pmf: truncated constraint mass is 0");
}

uint64_t ExactConditional::cells() const {
    long double c = 1.0L;
    for (size_t i = 0; i < rates_.rate.size(); ++i) c *= static_cast<long double>(cap_) + 1.0L;
    if (c > 1e18L) return UINT64_MAX;
    return static_cast<uint64_t>(c);
}

double ExactConditional::prob(std::span<const int64_t> counts) const {
    if (counts.size() != rates_.rate.size()) throw usage_error("prob: count vector size mismatch");
    double prod = 1.0;
    for (size_t x = 0; x < counts.size(); ++x) {
        if (counts[x] < 0) throw usage_error("prob: negative count");
        if (counts[x] > cap_) return 0.0;
        prod *= pmf_[x][static_cast<size_t>(counts[x])];
    }
    for (int p : constraints_.positions) {
        const uint32_t bit = 1u << (rates_.n - p);
        int64_t s = 0;
        for (uint32_t x = 0; x < counts.size(); ++x)
            if (x & bit) s += counts[x];
        if (s == 0) return 0.0;
    }
    return prod / p_trunc_;
}

template <typename Visitor>
void ExactConditional::walk_cells(Visitor&& visit) const {
    const size_t m = rates_.rate.size();
    std::vector<int64_t> counts(m, 0);
    // tail_prod[i] = prod_{j >= i} pmf_j(counts_j); tail_prod[m] = 1
    std::vector<double> tail_prod(m + 1, 1.0);
    for (size_t i = m; i-- > 0;) tail_prod[i] = pmf_[i][0] * tail_prod[i + 1];

    const auto& pos = constraints_.positions;
    std::vector<int64_t> hits(pos.size(), 0);  // per-constraint running sums
    size_t violated = pos.size();
    std::vector<std::vector<size_t>> code_hits(m);  // constraint indices each code feeds
    for (uint32_t x = 0; x < m; ++x)
        for (size_t j = 0; j < pos.size(); ++j)
            if (x & (1u << (rates_.n - pos[j]))) code_hits[x].push_back(j);

    for (;;) {
        if (violated == 0) visit(tail_prod[0], counts);
        // odometer increment, digit 0 fastest
        size_t d = 0;
        while (d < m && counts[d] == cap_) {
            for (size_t j : code_hits[static_cast<uint32_t>(d)]) {
                hits[j] -= counts[d];
                if (hits[j] == 0) ++violated;
            }
            counts[d] = 0;
            ++d;
        }
        if (d == m) break;
        ++counts[d];
        for (size_t j : code_hits[static_cast<uint32_t>(d)]) {
            ++hits[j];
            if (hits[j] == 1) --violated;
        }
        tail_prod[d] = pmf_[d][static_cast<size_t>(counts[d])] * tail_prod[d + 1];
        for (size_t i = d; i-- > 0;) tail_prod[i] = pmf_[i][0] * tail_prod[i + 1];
    }
}

std::vector<std::pair<std::vector<int64_t>, double>> ExactConditional::enumerate(
    uint64_t budget) const {
    if (cells() > budget) throw resource_error("exact_conditional_pmf: enumeration budget exceeded");
    std::vector<std::pair<std::vector<int64_t>, double>> out;
    walk_cells([&](double prod, const std::vector<int64_t>& counts) {
        out.emplace_back(counts, prod / p_trunc_);
    });
    return out;
}

uint64_t encode_counts(std::span<const int64_t> counts) {
    if (counts.size() > 8) throw usage_error("encode_counts: supports up to 8 coordinates (n <= 3)");
    uint64_t key = 0;
    for (size_t i = 0; i < counts.size(); ++i) {
        const uint64_t c = static_cast<uint64_t>(std::min<int64_t>(counts[i], 255));
        key |= c << (8 * i);
    }
    return key;
}

ExactConditional::TvReport ExactConditional::tv_against(const Histogram& empirical,
                                                        uint64_t n_samples,
                                                        uint64_t budget) const {
    if (n_samples == 0) throw usage_error("tv_against: empty sample");
    if (cells() > budget) throw resource_error("tv_against: enumeration budget exceeded");
    const size_t m = rates_.rate.size();
    TvReport rep;
    rep.cond_tail = 1.0 - p_trunc_ / p_constraint_;

    // raw plug-in TV over the union of supports; the exact mass missing from
    // the empirical support is added as one lump
    double abs_sum = 0.0, covered = 0.0;
    std::vector<int64_t> counts(m);
    for (const auto& [key, cnt] : empirical) {
        for (size_t i = 0; i < m; ++i) counts[i] = static_cast<int64_t>((key >> (8 * i)) & 0xff);
        const double p = prob(counts);
        const double ph = static_cast<double>(cnt) / static_cast<double>(n_samples);
        abs_sum += std::fabs(ph - p);
        covered += p;
    }
    rep.tv_raw = 0.5 * (abs_sum + std::max(0.0, 1.0 - covered));

    // null allowances, accumulated over the enumerated truncated support
    const double n = static_cast<double>(n_samples);
    double mad_one = 0.0, mad_pair = 0.0;
    uint64_t visited = 0;
    walk_cells([&](double prod, const std::vector<int64_t>&) {
        ++visited;
        const double p_true = prod / p_constraint_;
        if (p_true <= 0.0) return;
        const double mu = n * p_true;
        mad_one += (1.0 - std::min(p_true, 0.5)) * binom_mad_table().value(mu) / n;
        mad_pair += skellam_mad_table().value(mu) / n;
    });
    rep.cells_enumerated = visited;
    rep.bias_one = 0.5 * mad_one + rep.cond_tail;
    rep.bias_pair = 0.5 * mad_pair + rep.cond_tail;
    return rep;
}

ExactConditional exact_conditional_pmf(const RateTable& rates, const ConstraintFamily& constraints,
                                       int count_cap) {
    return ExactConditional(rates, constraints, count_cap);
}

// ---------------------------------------------------------------------------
// Anchor distribution
// ---------------------------------------------------------------------------

namespace {

// Shared by the public anchor_distribution and the level tree. Works on a
// rate vector over codes of `width` bits with active constraint positions
// given as code masks. Returns (code, P(Y=y, C)) pairs, ascending codes, and
// writes P(C) to p_c.
std::vector<std::pair<uint32_t, double>> anchor_joint_law(std::span<const double> rate,
                                                          std::span<const uint32_t> cbits,
                                                          double* p_c) {
    const uint32_t size = static_cast<uint32_t>(rate.size());
    uint32_t obits = 0;
    for (uint32_t b : cbits) obits |= b;
    const uint32_t min_bit = cbits.empty() ? 0 : *std::max_element(cbits.begin(), cbits.end());
    // note: the smallest position has the largest bit value

    std::vector<double> g(size, 0.0);
    for (uint32_t x = 0; x < size; ++x) g[x] = -rate[x];
    if (p_c) *p_c = inclusion_exclusion(g, 0.0, cbits);

    std::vector<std::pair<uint32_t, double>> out;
    if (cbits.empty()) return out;

    // suffix sums of rates over M above a code
    double above = 0.0;
    std::vector<double> m_above(size + 1, 0.0);
    for (uint32_t x = size; x-- > 0;) {
        m_above[x] = above;
        if (x & obits) above += rate[x];
    }

    for (uint32_t y = 0; y < size; ++y) {
        if (!(y & min_bit)) continue;  // support restricted to C_{min O}
        if (rate[y] <= 0.0) continue;
        const double f1 = -std::expm1(-rate[y]);
        const double f2 = std::exp(-m_above[y]);
        // remaining constraints among codes below y
        std::vector<uint32_t> rem;
        for (uint32_t b : cbits)
            if (!(y & b)) rem.push_back(b);
        double f3 = 1.0;
        if (!rem.empty()) {
            std::vector<double> gy(g.begin(), g.begin() + y);
            f3 = inclusion_exclusion(gy, 0.0, rem);
        }
        const double w = f1 * f2 * f3;
        if (w > 0.0) out.emplace_back(y, w);
    }
    return out;
}

}  // namespace

std::vector<std::pair<uint32_t, double>> anchor_distribution(const RateTable& rates,
                                                             const ConstraintFamily& constraints) {
    check_feasible(rates, constraints);
    if (constraints.positions.empty()) return {};
    std::vector<uint32_t> cbits;
    for (int p : constraints.positions) cbits.push_back(1u << (rates.n - p));
    double p_c = 0.0;
    auto law = anchor_joint_law(rates.rate, cbits, &p_c);
    double sum = 0.0;
    for (auto& [y, w] : law) sum += w;
    if (!(sum > 0.0)) throw domain_error("anchor_distribution: constraint event has probability 0");
    if (std::fabs(sum - p_c) > 1e-9 * std::max(sum, p_c))
        throw internal_error("anchor_distribution: anchor masses do not add up to P(C)");
    for (auto& [y, w] : law) w /= sum;
    return law;
}

// ---------------------------------------------------------------------------
// LevelState and coarsen
// ---------------------------------------------------------------------------

LevelState level1_state(const RateTable& rates, const ConstraintFamily& constraints) {
    rates.validate();
    constraints.validate(rates.n);
    LevelState s;
    s.n = rates.n;
    s.min_pos = 1;
    s.rate = rates.rate;
    s.active = constraints.positions;
    return s;
}

std::optional<LevelState> coarsen(const LevelState& state, uint32_t y) {
    const int w = state.width();
    if (state.active.empty()) throw usage_error("coarsen: no active constraints");
    if (y >= (1u << w)) throw usage_error("coarsen: anchor code out of range");
    const int min_active = state.active.front();
    const uint32_t min_bit = 1u << (state.n - min_active);
    if (!(y & min_bit)) throw usage_error("coarsen: anchor must satisfy the first active constraint");

    std::vector<int> next_active;
    for (int p : state.active)
        if (!(y & (1u << (state.n - p)))) next_active.push_back(p);
    if (next_active.empty()) return std::nullopt;

    uint32_t obits = 0;
    for (int p : state.active) obits |= 1u << (state.n - p);

    LevelState out;
    out.n = state.n;
    out.min_pos = next_active.front();
    out.active = next_active;
    const int w2 = out.width();
    const uint32_t mask2 = (w2 >= 32) ? 0xffffffffu : ((1u << w2) - 1);
    out.rate.assign(size_t{1} << w2, 0.0);
    double in_mass = 0.0, out_mass = 0.0;
    for (uint32_t x = 0; x < y; ++x) {
        if (!(x & obits)) continue;  // R^(k) = I_{<y} ∩ M^(k)
        out.rate[x & mask2] += state.rate[x];
        in_mass += state.rate[x];
    }
    for (double r : out.rate) out_mass += r;
    if (std::fabs(in_mass - out_mass) > 1e-12 * std::max(1.0, in_mass))
        throw internal_error("coarsen: preimage mass not conserved");
    return out;
}

// ---------------------------------------------------------------------------
// multinomial_split / lift_point
// ---------------------------------------------------------------------------

std::vector<int64_t> multinomial_split(int64_t count, std::span<const double> weights, Rng& rng) {
    if (count < 0) throw usage_error("multinomial_split: negative count");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw usage_error("multinomial_split: bad weight");
        sum += w;
    }
    if (count == 0) return std::vector<int64_t>(weights.size(), 0);
    if (!(sum > 0.0)) throw domain_error("multinomial_split: all-zero weights with positive count");
    if (std::fabs(sum - 1.0) > 1e-6) throw usage_error("multinomial_split: weights must sum to 1");
    return rng.multinomial(count, weights);
}

uint32_t lift_point(std::span<const ChainLevel> chain, uint32_t code, Rng& rng) {
    for (size_t s = chain.size(); s-- > 0;) {
        const auto& lvl = chain[s];
        if (code >= lvl.preimage.size() || lvl.preimage[code].empty())
            throw internal_error("lift_point: empty preimage");
        const size_t j = rng.discrete_cdf(lvl.pre_cdf[code]);
        code = lvl.preimage[code][j];
    }
    return code;
}

std::vector<std::pair<uint32_t, double>> lift_law(std::span<const ChainLevel> chain,
                                                  uint32_t code) {
    std::unordered_map<uint32_t, double> cur{{code, 1.0}};
    for (size_t s = chain.size(); s-- > 0;) {
        const auto& lvl = chain[s];
        std::unordered_map<uint32_t, double> next;
        for (const auto& [c, p] : cur) {
            if (c >= lvl.preimage.size() || lvl.preimage[c].empty())
                throw internal_error("lift_law: empty preimage");
            const auto& pre = lvl.preimage[c];
            const auto& cdf = lvl.pre_cdf[c];
            const double total = cdf.back();
            for (size_t j = 0; j < pre.size(); ++j) {
                const double w = cdf[j] - (j ? cdf[j - 1] : 0.0);
                if (w > 0.0) next[pre[j]] += p * w / total;
            }
        }
        cur = std::move(next);
    }
    std::vector<std::pair<uint32_t, double>> out(cur.begin(), cur.end());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// DecomposeSampler
// ---------------------------------------------------------------------------

struct DecomposeSampler::Node {
    int min_pos = 1;
    int width = 0;
    std::vector<double> rate;
    std::vector<int> active;
    uint32_t obits = 0;
    std::vector<uint32_t> anchor_code;
    std::vector<double> anchor_cdf;  // inclusive cumsum of P(Y=y, C)
    double p_c = 0.0;
    std::vector<uint32_t> offm_codes;  // positive-rate codes outside M
    std::unordered_map<uint32_t, std::unique_ptr<Child>> children;
};

struct DecomposeSampler::Child {
    bool terminal = true;
    std::unique_ptr<Node> node;
    std::vector<uint32_t> r_codes;                // terminal: positive-rate codes of R^(k)
    std::vector<std::vector<uint32_t>> preimage;  // child code -> parent codes
    std::vector<std::vector<double>> pre_cdf;
};

DecomposeSampler::DecomposeSampler(const RateTable& rates, const ConstraintFamily& constraints)
    : rates_(rates), constraints_(constraints) {
    check_feasible(rates_, constraints_);
    const double lbar = rates_.max_rate();
    shift_ = lbar > 0.0 ? min_domination_shift(lbar) : 1;
    scratch_.resize(static_cast<size_t>(rates_.n) + 2);
    if (!constraints_.positions.empty()) ensure_root();
}

DecomposeSampler::~DecomposeSampler() = default;
DecomposeSampler::DecomposeSampler(DecomposeSampler&&) noexcept = default;
DecomposeSampler& DecomposeSampler::operator=(DecomposeSampler&&) noexcept = default;

std::unique_ptr<DecomposeSampler::Node> DecomposeSampler::make_node(int n, int min_pos,
                                                                    std::vector<double> rate,
                                                                    std::vector<int> active) {
    auto node = std::make_unique<DecomposeSampler::Node>();
    node->min_pos = min_pos;
    node->width = n - min_pos + 1;
    node->rate = std::move(rate);
    node->active = std::move(active);
    std::vector<uint32_t> cbits;
    for (int p : node->active) cbits.push_back(1u << (n - p));
    for (uint32_t b : cbits) node->obits |= b;
    auto law = anchor_joint_law(node->rate, cbits, &node->p_c);
    if (law.empty()) throw domain_error("decompose: level constraints unsatisfiable");
    double cum = 0.0;
    for (auto& [y, w] : law) {
        cum += w;
        node->anchor_code.push_back(y);
        node->anchor_cdf.push_back(cum);
    }
    if (std::fabs(cum - node->p_c) > 1e-9 * std::max(cum, node->p_c))
        throw internal_error("decompose: anchor masses do not add up to level P(C)");
    for (uint32_t x = 0; x < node->rate.size(); ++x)
        if (!(x & node->obits) && node->rate[x] > 0.0) node->offm_codes.push_back(x);
    return node;
}

DecomposeSampler::Node* DecomposeSampler::ensure_root() {
    if (!root_) root_ = make_node(rates_.n, 1, rates_.rate, constraints_.positions);
    return root_.get();
}

DecomposeSampler::Child* DecomposeSampler::ensure_child(Node& node, uint32_t y) {
    auto it = node.children.find(y);
    if (it != node.children.end()) return it->second.get();

    auto child = std::make_unique<Child>();
    const int n = rates_.n;
    std::vector<int> next_active;
    for (int p : node.active)
        if (!(y & (1u << (n - p)))) next_active.push_back(p);

    if (next_active.empty()) {
        child->terminal = true;
        for (uint32_t x = 0; x < y; ++x)
            if ((x & node.obits) && node.rate[x] > 0.0) child->r_codes.push_back(x);
    } else {
        child->terminal = false;
        const int min2 = next_active.front();
        const int w2 = n - min2 + 1;
        const uint32_t mask2 = (1u << w2) - 1;
        std::vector<double> rate2(size_t{1} << w2, 0.0);
        child->preimage.resize(size_t{1} << w2);
        child->pre_cdf.resize(size_t{1} << w2);
        for (uint32_t x = 0; x < y; ++x) {
            if (!(x & node.obits) || node.rate[x] <= 0.0) continue;
            const uint32_t c = x & mask2;
            rate2[c] += node.rate[x];
            child->preimage[c].push_back(x);
        }
        for (uint32_t c = 0; c < child->preimage.size(); ++c) {
            double cum = 0.0;
            for (uint32_t x : child->preimage[c]) {
                cum += node.rate[x];
                child->pre_cdf[c].push_back(cum);
            }
        }
        child->node = make_node(n, min2, std::move(rate2), std::move(next_active));
    }
    Child* out = child.get();
    node.children.emplace(y, std::move(child));
    return out;
}

void DecomposeSampler::sample_node(Node& node, int level, Rng& rng, DecomposeMode mode,
                                   DecompositionSample& out) {
    auto& units = scratch_[static_cast<size_t>(level)];
    units.clear();

    const size_t aidx = out.anchors.size();
    const uint32_t y = node.anchor_code[rng.discrete_cdf(node.anchor_cdf)];
    out.anchors.push_back({level, node.min_pos, node.active.front(), y, 0});
    ++out.kappa;

    if (mode == DecomposeMode::exact_conditional) {
        const int64_t m = rng.poisson_ge1(node.rate[y]);
        units.push_back({y, static_cast<int32_t>(aidx)});
        for (int64_t i = 1; i < m; ++i) units.push_back({y, -1});
        for (uint32_t x : node.offm_codes) {
            const int64_t k = rng.poisson(node.rate[x]);
            for (int64_t i = 0; i < k; ++i) units.push_back({x, -1});
        }
    } else {
        // dominating mode: only the anchor chain is sampled here; the shift_
        // lifts per anchor all carry the anchor tag
        for (int j = 0; j < shift_; ++j) units.push_back({y, static_cast<int32_t>(aidx)});
    }

    Child* child = ensure_child(node, y);
    if (!child->terminal) {
        sample_node(*child->node, level + 1, rng, mode, out);
        auto& sub = scratch_[static_cast<size_t>(level) + 1];
        for (const Unit& u : sub) {
            const size_t j = rng.discrete_cdf(child->pre_cdf[u.code]);
            units.push_back({child->preimage[u.code][j], u.anchor});
        }
    } else if (mode == DecomposeMode::exact_conditional) {
        for (uint32_t x : child->r_codes) {
            const int64_t k = rng.poisson(node.rate[x]);
            for (int64_t i = 0; i < k; ++i) units.push_back({x, -1});
        }
    }
}

DecompositionSample DecomposeSampler::sample(Rng& rng, DecomposeMode mode) {
    DecompositionSample out;
    out.counts.assign(rates_.rate.size(), 0);

    if (mode == DecomposeMode::dominating) {
        for (uint32_t x = 0; x < rates_.rate.size(); ++x)
            if (rates_.rate[x] > 0.0) out.counts[x] = rng.poisson(rates_.rate[x]);
    }
    if (constraints_.positions.empty()) {
        if (mode == DecomposeMode::exact_conditional)
            for (uint32_t x = 0; x < rates_.rate.size(); ++x)
                if (rates_.rate[x] > 0.0) out.counts[x] = rng.poisson(rates_.rate[x]);
        return out;
    }

    sample_node(*ensure_root(), 1, rng, mode, out);
    std::vector<char> lift_set(out.anchors.size(), 0);
    for (const Unit& u : scratch_[1]) {
        ++out.counts[u.code];
        if (u.anchor >= 0) {
            if (mode == DecomposeMode::dominating) out.lifted_extras.push_back(u.code);
            if (!lift_set[static_cast<size_t>(u.anchor)]) {
                out.anchors[static_cast<size_t>(u.anchor)].lifted_code = u.code;
                lift_set[static_cast<size_t>(u.anchor)] = 1;
            }
        }
    }
    if (out.kappa > static_cast<int>(constraints_.positions.size()))
        throw internal_error("decompose: kappa exceeded |O|");
    if (mode == DecomposeMode::exact_conditional && !satisfies(out.counts))
        throw internal_error("decompose: constraint violated by exact-conditional sample");
    return out;
}

bool DecomposeSampler::satisfies(std::span<const int64_t> counts) const {
    for (int p : constraints_.positions) {
        const uint32_t bit = 1u << (rates_.n - p);
        int64_t s = 0;
        for (uint32_t x = 0; x < counts.size(); ++x)
            if (x & bit) s += counts[x];
        if (s == 0) return false;
    }
    return true;
}

DecompositionSample decompose(const RateTable& rates, const ConstraintFamily& constraints,
                              Rng& rng, DecomposeMode mode) {
    DecomposeSampler sampler(rates, constraints);
    return sampler.sample(rng, mode);
}

std::vector<int64_t> rejection_conditional_sample(const RateTable& rates,
                                                  const ConstraintFamily& constraints, Rng& rng,
                                                  uint64_t max_attempts, uint64_t* attempts_out) {
    check_feasible(rates, constraints);
    std::vector<int64_t> counts(rates.rate.size(), 0);
    for (uint64_t attempt = 1; attempt <= max_attempts; ++attempt) {
        for (uint32_t x = 0; x < counts.size(); ++x)
            counts[x] = rates.rate[x] > 0.0 ? rng.poisson(rates.rate[x]) : 0;
        bool ok = true;
        for (int p : constraints.positions) {
            const uint32_t bit = 1u << (rates.n - p);
            int64_t s = 0;
            for (uint32_t x = 0; x < counts.size(); ++x)
                if (x & bit) s += counts[x];
            if (s == 0) {
                ok = false;
                break;
            }
        }
        if (ok) {
            if (attempts_out) *attempts_out = attempt;
            return counts;
        }
    }
    std::ostringstream os;
    os << "rejection_conditional_sample: no acceptance in " << max_attempts
       << " attempts (acceptance rate below " << 1.0 / static_cast<double>(max_attempts) << ")";
    throw resource_error(os.str());
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_instance(std::ostream& os, const RateTable& rates, const ConstraintFamily& constraints) {
    rates.validate();
    constraints.validate(rates.n);
    for (uint32_t x = 0; x < rates.rate.size(); ++x) {
        BitIndex b{x, rates.n};
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", rates.rate[x]);
        os << "bits=" << b.to_string() << " rate=" << buf << "\n";
    }
    os << "O=";
    for (size_t i = 0; i < constraints.positions.size(); ++i)
        os << (i ? "," : "") << constraints.positions[i];
    os << "\n";
}

std::pair<RateTable, ConstraintFamily> read_instance(std::istream& is) {
    std::vector<std::pair<std::string, double>> entries;
    ConstraintFamily fam;
    std::string line;
    bool saw_o = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("bits=", 0) == 0) {
            const size_t sp = line.find(" rate=");
            if (sp == std::string::npos) throw usage_error("read_instance: malformed bits line");
            entries.emplace_back(line.substr(5, sp - 5), std::stod(line.substr(sp + 6)));
        } else if (line.rfind("O=", 0) == 0) {
            saw_o = true;
            std::string rest = line.substr(2);
            std::stringstream ss(rest);
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) fam.positions.push_back(std::stoi(tok));
        } else {
            throw usage_error("read_instance: unrecognized line: " + line);
        }
    }
    if (entries.empty()) throw usage_error("read_instance: no rate lines");
    if (!saw_o) throw usage_error("read_instance: missing O= line");
    const int n = static_cast<int>(entries.front().first.size());
    RateTable table = RateTable::zeros(n);
    for (const auto& [bits, rate] : entries) {
        const BitIndex b = BitIndex::from_string(bits);
        if (b.n != n) throw usage_error("read_instance: inconsistent bit lengths");
        table.rate[b.code] = rate;
    }
    table.validate();
    fam.validate(n);
    return {table, fam};
}

}  // namespace rwrw::condpoisson
