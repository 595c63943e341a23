#pragma once

// Lattice sites and finite-range jump kernels on Z^d, d <= 9.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rwrw/errors.hpp"
#include "rwrw/rng.hpp"

namespace rwrw {

constexpr int kMaxDim = 9;

struct Site {
    std::array<int16_t, kMaxDim> c{};

    static Site origin() { return Site{}; }

    bool operator==(const Site& o) const { return c == o.c; }
    bool operator!=(const Site& o) const { return c != o.c; }

    Site plus(const Site& d, int dim) const {
        Site r = *this;
        for (int i = 0; i < dim; ++i) r.c[static_cast<size_t>(i)] += d.c[static_cast<size_t>(i)];
        return r;
    }
    Site minus(const Site& d, int dim) const {
        Site r = *this;
        for (int i = 0; i < dim; ++i) r.c[static_cast<size_t>(i)] -= d.c[static_cast<size_t>(i)];
        return r;
    }
    int linf(int dim) const {
        int m = 0;
        for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(static_cast<int>(c[static_cast<size_t>(i)])));
        return m;
    }
    double norm2(int dim) const {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double v = c[static_cast<size_t>(i)];
            s += v * v;
        }
        return std::sqrt(s);
    }
};

inline Site make_site(std::initializer_list<int> coords) {
    Site s;
    int i = 0;
    for (int v : coords) s.c[static_cast<size_t>(i++)] = static_cast<int16_t>(v);
    return s;
}

inline uint64_t site_hash(const Site& s, int dim, int64_t t = 0) {
    uint64_t h = 0xcbf29ce484222325ULL ^ static_cast<uint64_t>(t) * 0x100000001b3ULL;
    for (int i = 0; i < dim; ++i) {
        h ^= static_cast<uint16_t>(s.c[static_cast<size_t>(i)]);
        h *= 0x100000001b3ULL;
    }
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return h;
}

// Finite-range jump kernel. Either an explicit atom list or a coordinate
// product of per-coordinate laws on {-r..r}; product kernels sample one
// coordinate per 32 random bits.
class JumpKernel {
  public:
    JumpKernel() = default;

    static JumpKernel from_atoms(int dim, std::vector<std::pair<Site, double>> atoms);
    // per-coordinate pmf over offsets -r..r, identical across coordinates
    static JumpKernel product(int dim, std::vector<double> coord_pmf);
    // product kernel with a different pmf on coordinate 0 (drift direction)
    static JumpKernel product_with_first(int dim, std::vector<double> first_pmf,
                                         std::vector<double> rest_pmf);

    int dim() const { return dim_; }
    int range() const { return range_; }
    bool product_form() const { return product_; }
    bool truly_d_dimensional() const { return truly_d_dimensional_; }
    const std::vector<std::pair<Site, double>>& atoms() const { return atoms_; }
    const std::vector<double>& coord_pmf(int coord) const {
        return coord == 0 ? first_pmf_ : rest_pmf_;
    }

    std::array<double, kMaxDim> mean() const;
    // covariance matrix entry (i,j)
    double covariance(int i, int j) const;

    void sample(Rng& rng, Site& out) const;           // out = jump
    void sample_reversed(Rng& rng, Site& out) const;  // out = jump of the time-reversed walk
    double prob(const Site& z) const;

    // kernel reflected through the origin (law of -Z)
    JumpKernel reversed() const;

  private:
    void finalize();

    int dim_ = 0;
    int range_ = 0;
    bool product_ = false;
    bool truly_d_dimensional_ = false;
    std::vector<std::pair<Site, double>> atoms_;
    std::vector<double> cdf_;  // atom cdf for sampling

    std::vector<double> first_pmf_, rest_pmf_;
    std::vector<uint32_t> first_thresh_, rest_thresh_;  // 32-bit cumulative thresholds
    std::vector<uint32_t> first_thresh_rev_, rest_thresh_rev_;
    int coord_offset_ = 0;  // = range for product kernels
};

// Named presets used across the experiments.
//  product_lazy:   per coordinate (1/4, 1/2, 1/4)
//  product_lazy6:  per coordinate (1/6, 2/3, 1/6)  (zero excess kurtosis)
//  axial(p_stay, p_plus, p_minus): stay/±e1 with the remaining mass spread
//      uniformly over ±e_j, j >= 2 (truly d-dimensional for d >= 1)
//  pm_e1(p): +e1 with probability p, -e1 otherwise (not truly d-dimensional)
//  nn: nearest neighbour, uniform over the 2d unit vectors
JumpKernel kernel_product_lazy(int dim);
JumpKernel kernel_product_lazy6(int dim);
JumpKernel kernel_axial(int dim, double p_stay, double p_plus, double p_minus);
JumpKernel kernel_pm_e1(int dim, double p_plus);
JumpKernel kernel_nn(int dim);

}  // namespace rwrw
