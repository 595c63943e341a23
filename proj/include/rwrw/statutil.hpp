#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "rwrw/errors.hpp"
#include "rwrw/rng.hpp"

namespace rwrw {

struct MeanCI {
    double mean = 0.0;
    double half_width = 0.0;  // 95% normal half-width
    double stddev = 0.0;
    size_t n = 0;
};

inline MeanCI mean_ci(std::span<const double> xs) {
    MeanCI r;
    r.n = xs.size();
    if (r.n == 0) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(r.n);
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = r.n > 1 ? std::sqrt(ss / static_cast<double>(r.n - 1)) : 0.0;
    r.half_width = 1.959963984540054 * r.stddev / std::sqrt(static_cast<double>(r.n));
    return r;
}

inline MeanCI bernoulli_ci(double successes, double trials) {
    MeanCI r;
    r.n = static_cast<size_t>(trials);
    if (trials <= 0) return r;
    r.mean = successes / trials;
    r.stddev = std::sqrt(std::max(r.mean * (1.0 - r.mean), 0.0));
    r.half_width = 1.959963984540054 * r.stddev / std::sqrt(trials);
    return r;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Regularized upper incomplete gamma Q(a, x), series + continued fraction
// (Numerical Recipes style). Drives the chi-square p-values.
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw usage_error("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
    }
    double b = x + 1.0 - a;
    double c = 1e300;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

// Pearson chi-square p-value of observed counts against expected counts.
// Cells with tiny expectation are pooled into their neighbour.
inline double chi_square_pvalue(std::span<const double> observed, std::span<const double> expected,
                                int extra_dof_loss = 0) {
    if (observed.size() != expected.size() || observed.empty())
        throw usage_error("chi_square_pvalue: size mismatch");
    double chi2 = 0.0;
    int cells = 0;
    double pool_obs = 0.0, pool_exp = 0.0;
    for (size_t i = 0; i < observed.size(); ++i) {
        pool_obs += observed[i];
        pool_exp += expected[i];
        if (pool_exp >= 5.0) {
            chi2 += (pool_obs - pool_exp) * (pool_obs - pool_exp) / pool_exp;
            ++cells;
            pool_obs = pool_exp = 0.0;
        }
    }
    if (pool_exp > 0.0 && cells > 0) {
        // fold the remainder into the last cell
        chi2 += (pool_obs - pool_exp) * (pool_obs - pool_exp) / pool_exp;
    }
    const int dof = cells - 1 - extra_dof_loss;
    if (dof <= 0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * chi2);
}

// One-sample Kolmogorov-Smirnov distance of samples against a normal CDF.
inline double ks_distance_normal(std::vector<double> xs, double mean, double sd) {
    if (xs.empty() || sd <= 0.0) throw usage_error("ks_distance_normal: bad input");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double cdf = normal_cdf((xs[i] - mean) / sd);
        d = std::max(d, std::fabs(cdf - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - cdf));
    }
    return d;
}

// Weighted least-squares slope of y against x with known per-point standard
// errors; returns the slope, its standard error, and the one-sided p-value
// for the alternative "slope > 0".
struct SlopeTest {
    double slope = 0.0;
    double stderr_ = 0.0;
    double p_upward = 1.0;    // small => significant upward trend
    double p_downward = 1.0;  // small => significant downward trend
};

inline SlopeTest slope_test(std::span<const double> x, std::span<const double> y,
                            std::span<const double> se) {
    if (x.size() != y.size() || x.size() != se.size() || x.size() < 2)
        throw usage_error("slope_test: bad input");
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double w = 1.0 / std::max(se[i] * se[i], 1e-300);
        sw += w;
        swx += w * x[i];
        swy += w * y[i];
        swxx += w * x[i] * x[i];
        swxy += w * x[i] * y[i];
    }
    const double denom = sw * swxx - swx * swx;
    SlopeTest r;
    if (denom <= 0.0) return r;
    r.slope = (sw * swxy - swx * swy) / denom;
    r.stderr_ = std::sqrt(sw / denom);
    const double z = r.slope / r.stderr_;
    r.p_upward = 1.0 - normal_cdf(z);
    r.p_downward = normal_cdf(z);
    return r;
}

// Unweighted least-squares slope (log-log fits of exact curves).
inline double ls_slope(std::span<const double> x, std::span<const double> y) {
    const size_t n = x.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double num = 0, den = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

// ---------------------------------------------------------------------------
// Discrete histograms keyed by small integer codes, and plug-in TV distance.
// ---------------------------------------------------------------------------

using Histogram = std::unordered_map<uint64_t, uint64_t>;

inline void hist_add(Histogram& h, uint64_t key) { ++h[key]; }

// Plug-in total variation (1/2) sum |p-q| between two empirical histograms.
inline double tv_between_histograms(const Histogram& a, uint64_t na, const Histogram& b,
                                    uint64_t nb) {
    if (na == 0 || nb == 0) throw usage_error("tv_between_histograms: empty sample");
    double tv = 0.0;
    for (const auto& [k, ca] : a) {
        const auto it = b.find(k);
        const double pa = static_cast<double>(ca) / na;
        const double pb = it == b.end() ? 0.0 : static_cast<double>(it->second) / nb;
        tv += std::fabs(pa - pb);
    }
    for (const auto& [k, cb] : b) {
        if (a.find(k) == a.end()) tv += static_cast<double>(cb) / nb;
    }
    return 0.5 * tv;
}

// Mean absolute deviation of Bin(n,p)/n around p (De Moivre's closed form,
// with a Poisson evaluation of the binomial pmf term; exact enough for the
// bias accounting it feeds).
inline double binom_mad(double n, double p) {
    if (p <= 0.0 || p >= 1.0 || n <= 0) return 0.0;
    const double mu = n * p;
    if (mu > 50.0) return std::sqrt(2.0 * p * (1.0 - p) / (3.141592653589793 * n));
    const double m = std::ceil(mu);
    // log pmf(m) of Bin(n,p) ~ Poisson-corrected Stirling evaluation
    const double logpmf = m * std::log(mu) - mu - std::lgamma(m + 1.0);
    return 2.0 * m * (1.0 - p) * std::exp(logpmf) / n;
}

// E|K1-K2|/n for independent K1,K2 ~ Poisson(mu), mu = n*p (Skellam MAD).
// Used as the null expectation of per-cell |p̂1-p̂2| between two empirical
// measures of equal size n.
inline double skellam_mad(double n, double p) {
    if (p <= 0.0 || n <= 0) return 0.0;
    const double mu = n * p;
    if (mu > 40.0) return 2.0 * std::sqrt(mu / 3.141592653589793) / n;
    const double i0 = std::cyl_bessel_i(0.0, 2.0 * mu);
    const double i1 = std::cyl_bessel_i(1.0, 2.0 * mu);
    return 2.0 * mu * std::exp(-2.0 * mu) * (i0 + i1) / n;
}

// Percentile bootstrap CI half-width for a plug-in TV between two histograms.
inline double tv_bootstrap_halfwidth(const Histogram& a, uint64_t na, const Histogram& b,
                                     uint64_t nb, Rng& rng, int boot = 200) {
    std::vector<uint64_t> keys;
    std::vector<double> pa, pb;
    for (const auto& [k, c] : a) keys.push_back(k);
    for (const auto& [k, c] : b)
        if (a.find(k) == a.end()) keys.push_back(k);
    pa.reserve(keys.size());
    pb.reserve(keys.size());
    for (uint64_t k : keys) {
        auto ia = a.find(k);
        auto ib = b.find(k);
        pa.push_back(ia == a.end() ? 0.0 : static_cast<double>(ia->second));
        pb.push_back(ib == b.end() ? 0.0 : static_cast<double>(ib->second));
    }
    std::vector<double> tvs(boot);
    for (int r = 0; r < boot; ++r) {
        // multinomial resample via per-cell Poisson approximation
        double tv = 0.0;
        for (size_t i = 0; i < keys.size(); ++i) {
            const double ra = pa[i] > 0 ? rng.poisson(pa[i]) : 0.0;
            const double rb = pb[i] > 0 ? rng.poisson(pb[i]) : 0.0;
            tv += std::fabs(ra / na - rb / nb);
        }
        tvs[r] = 0.5 * tv;
    }
    std::sort(tvs.begin(), tvs.end());
    const double lo = tvs[static_cast<size_t>(0.025 * boot)];
    const double hi = tvs[static_cast<size_t>(std::min<int>(boot - 1, static_cast<int>(0.975 * boot)))];
    return 0.5 * (hi - lo);
}

}  // namespace rwrw
