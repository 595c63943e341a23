#include "rwrw/lattice.hpp"

#include <algorithm>
#include <cmath>

namespace rwrw {

namespace {

// Gaussian elimination determinant; the truly-d-dimensional flag only needs
// a clear zero / nonzero decision.
double det(std::vector<std::vector<double>> m) {
    const size_t n = m.size();
    double d = 1.0;
    for (size_t i = 0; i < n; ++i) {
        size_t piv = i;
        for (size_t r = i + 1; r < n; ++r)
            if (std::fabs(m[r][i]) > std::fabs(m[piv][i])) piv = r;
        if (std::fabs(m[piv][i]) < 1e-12) return 0.0;
        if (piv != i) {
            std::swap(m[piv], m[i]);
            d = -d;
        }
        d *= m[i][i];
        for (size_t r = i + 1; r < n; ++r) {
            const double f = m[r][i] / m[i][i];
            for (size_t col = i; col < n; ++col) m[r][col] -= f * m[i][col];
        }
    }
    return d;
}

std::vector<uint32_t> thresholds(const std::vector<double>& pmf) {
    std::vector<uint32_t> t(pmf.size());
    double cum = 0.0;
    for (size_t i = 0; i < pmf.size(); ++i) {
        cum += pmf[i];
        t[i] = i + 1 == pmf.size()
                   ? 0xffffffffu
                   : static_cast<uint32_t>(std::min(4294967295.0, std::round(cum * 4294967296.0)));
    }
    return t;
}

std::vector<double> reverse_pmf(std::vector<double> pmf) {
    std::reverse(pmf.begin(), pmf.end());
    return pmf;
}

}  // namespace

JumpKernel JumpKernel::from_atoms(int dim, std::vector<std::pair<Site, double>> atoms) {
    if (dim < 1 || dim > kMaxDim) throw usage_error("JumpKernel: dim must be in 1..9");
    if (atoms.empty()) throw usage_error("JumpKernel: empty support");
    JumpKernel k;
    k.dim_ = dim;
    k.atoms_ = std::move(atoms);
    k.product_ = false;
    k.finalize();
    return k;
}

JumpKernel JumpKernel::product(int dim, std::vector<double> coord_pmf) {
    return product_with_first(dim, coord_pmf, coord_pmf);
}

JumpKernel JumpKernel::product_with_first(int dim, std::vector<double> first_pmf,
                                          std::vector<double> rest_pmf) {
    if (dim < 1 || dim > kMaxDim) throw usage_error("JumpKernel: dim must be in 1..9");
    if (first_pmf.size() != rest_pmf.size() || first_pmf.empty() || first_pmf.size() % 2 == 0)
        throw usage_error("JumpKernel: per-coordinate pmf must have odd length");
    JumpKernel k;
    k.dim_ = dim;
    k.product_ = true;
    k.first_pmf_ = std::move(first_pmf);
    k.rest_pmf_ = std::move(rest_pmf);
    k.coord_offset_ = static_cast<int>(k.first_pmf_.size() / 2);
    k.first_thresh_ = thresholds(k.first_pmf_);
    k.rest_thresh_ = thresholds(k.rest_pmf_);
    k.first_thresh_rev_ = thresholds(reverse_pmf(k.first_pmf_));
    k.rest_thresh_rev_ = thresholds(reverse_pmf(k.rest_pmf_));
    // materialize atoms for d small enough; prob() and atoms() fall back to
    // the factored form otherwise
    if (std::pow(static_cast<double>(k.first_pmf_.size()), dim) <= 4096.0) {
        std::vector<Site> partial{Site{}};
        std::vector<double> pp{1.0};
        for (int d = 0; d < dim; ++d) {
            std::vector<Site> nxt;
            std::vector<double> nxtp;
            const auto& pmf = d == 0 ? k.first_pmf_ : k.rest_pmf_;
            for (size_t i = 0; i < partial.size(); ++i) {
                for (size_t j = 0; j < pmf.size(); ++j) {
                    if (pmf[j] <= 0.0) continue;
                    Site s = partial[i];
                    s.c[static_cast<size_t>(d)] =
                        static_cast<int16_t>(static_cast<int>(j) - k.coord_offset_);
                    nxt.push_back(s);
                    nxtp.push_back(pp[i] * pmf[j]);
                }
            }
            partial = std::move(nxt);
            pp = std::move(nxtp);
        }
        for (size_t i = 0; i < partial.size(); ++i) k.atoms_.emplace_back(partial[i], pp[i]);
    }
    k.finalize();
    return k;
}

void JumpKernel::finalize() {
    double total = 0.0;
    if (product_) {
        double t1 = 0.0, t2 = 0.0;
        for (double p : first_pmf_) {
            if (p < 0.0) throw usage_error("JumpKernel: negative probability");
            t1 += p;
        }
        for (double p : rest_pmf_) t2 += p;
        if (std::fabs(t1 - 1.0) > 1e-12 || std::fabs(t2 - 1.0) > 1e-12)
            throw usage_error("JumpKernel: probabilities must sum to 1 within 1e-12");
        range_ = coord_offset_;
        total = 1.0;
    } else {
        for (const auto& [s, p] : atoms_) {
            if (p < 0.0) throw usage_error("JumpKernel: negative probability");
            total += p;
            range_ = std::max(range_, s.linf(dim_));
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw usage_error("JumpKernel: probabilities must sum to 1 within 1e-12");
        cdf_.resize(atoms_.size());
        double cum = 0.0;
        for (size_t i = 0; i < atoms_.size(); ++i) {
            cum += atoms_[i].second;
            cdf_[i] = cum;
        }
    }
    // covariance invertibility
    std::vector<std::vector<double>> cov(static_cast<size_t>(dim_),
                                         std::vector<double>(static_cast<size_t>(dim_), 0.0));
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) cov[static_cast<size_t>(i)][static_cast<size_t>(j)] = covariance(i, j);
    truly_d_dimensional_ = std::fabs(det(cov)) > 1e-10;
}

std::array<double, kMaxDim> JumpKernel::mean() const {
    std::array<double, kMaxDim> m{};
    if (product_) {
        for (int d = 0; d < dim_; ++d) {
            const auto& pmf = coord_pmf(d);
            double mu = 0.0;
            for (size_t j = 0; j < pmf.size(); ++j)
                mu += pmf[j] * (static_cast<double>(j) - coord_offset_);
            m[static_cast<size_t>(d)] = mu;
        }
        return m;
    }
    for (const auto& [s, p] : atoms_)
        for (int d = 0; d < dim_; ++d) m[static_cast<size_t>(d)] += p * s.c[static_cast<size_t>(d)];
    return m;
}

double JumpKernel::covariance(int i, int j) const {
    const auto mu = mean();
    if (product_) {
        if (i != j) return 0.0;
        const auto& pmf = coord_pmf(i);
        double v = 0.0;
        for (size_t k = 0; k < pmf.size(); ++k) {
            const double x = static_cast<double>(k) - coord_offset_ - mu[static_cast<size_t>(i)];
            v += pmf[k] * x * x;
        }
        return v;
    }
    double v = 0.0;
    for (const auto& [s, p] : atoms_)
        v += p * (s.c[static_cast<size_t>(i)] - mu[static_cast<size_t>(i)]) *
             (s.c[static_cast<size_t>(j)] - mu[static_cast<size_t>(j)]);
    return v;
}

void JumpKernel::sample(Rng& rng, Site& out) const {
    if (product_) {
        uint64_t bits = 0;
        int have = 0;
        for (int d = 0; d < dim_; ++d) {
            if (have == 0) {
                bits = rng.next_u64();
                have = 2;
            }
            const uint32_t u = static_cast<uint32_t>(bits);
            bits >>= 32;
            --have;
            const auto& th = d == 0 ? first_thresh_ : rest_thresh_;
            int j = 0;
            while (u > th[static_cast<size_t>(j)]) ++j;
            out.c[static_cast<size_t>(d)] = static_cast<int16_t>(j - coord_offset_);
        }
        for (int d = dim_; d < kMaxDim; ++d) out.c[static_cast<size_t>(d)] = 0;
        return;
    }
    const size_t i = rng.discrete_cdf(cdf_);
    out = atoms_[i].first;
}

void JumpKernel::sample_reversed(Rng& rng, Site& out) const {
    if (product_) {
        uint64_t bits = 0;
        int have = 0;
        for (int d = 0; d < dim_; ++d) {
            if (have == 0) {
                bits = rng.next_u64();
                have = 2;
            }
            const uint32_t u = static_cast<uint32_t>(bits);
            bits >>= 32;
            --have;
            const auto& th = d == 0 ? first_thresh_rev_ : rest_thresh_rev_;
            int j = 0;
            while (u > th[static_cast<size_t>(j)]) ++j;
            out.c[static_cast<size_t>(d)] = static_cast<int16_t>(j - coord_offset_);
        }
        for (int d = dim_; d < kMaxDim; ++d) out.c[static_cast<size_t>(d)] = 0;
        return;
    }
    const size_t i = rng.discrete_cdf(cdf_);
    out = atoms_[i].first;
    for (int d = 0; d < dim_; ++d) out.c[static_cast<size_t>(d)] = static_cast<int16_t>(-out.c[static_cast<size_t>(d)]);
}

double JumpKernel::prob(const Site& z) const {
    if (product_) {
        double p = 1.0;
        for (int d = 0; d < dim_; ++d) {
            const int off = z.c[static_cast<size_t>(d)] + coord_offset_;
            if (off < 0 || off >= static_cast<int>(coord_pmf(d).size())) return 0.0;
            p *= coord_pmf(d)[static_cast<size_t>(off)];
        }
        return p;
    }
    for (const auto& [s, p] : atoms_)
        if (s == z) return p;
    return 0.0;
}

JumpKernel JumpKernel::reversed() const {
    if (product_) {
        JumpKernel k = *this;
        k.first_pmf_ = reverse_pmf(first_pmf_);
        k.rest_pmf_ = reverse_pmf(rest_pmf_);
        k.first_thresh_ = thresholds(k.first_pmf_);
        k.rest_thresh_ = thresholds(k.rest_pmf_);
        k.first_thresh_rev_ = thresholds(reverse_pmf(k.first_pmf_));
        k.rest_thresh_rev_ = thresholds(reverse_pmf(k.rest_pmf_));
        k.atoms_.clear();
        k.cdf_.clear();
        if (!atoms_.empty()) {
            for (const auto& [s, p] : atoms_) {
                Site r = s;
                for (int d = 0; d < dim_; ++d) r.c[static_cast<size_t>(d)] = static_cast<int16_t>(-r.c[static_cast<size_t>(d)]);
                k.atoms_.emplace_back(r, p);
            }
        }
        return k;
    }
    std::vector<std::pair<Site, double>> rev;
    rev.reserve(atoms_.size());
    for (const auto& [s, p] : atoms_) {
        Site r = s;
        for (int d = 0; d < dim_; ++d) r.c[static_cast<size_t>(d)] = static_cast<int16_t>(-r.c[static_cast<size_t>(d)]);
        rev.emplace_back(r, p);
    }
    return from_atoms(dim_, std::move(rev));
}

JumpKernel kernel_product_lazy(int dim) { return JumpKernel::product(dim, {0.25, 0.5, 0.25}); }

JumpKernel kernel_product_lazy6(int dim) {
    return JumpKernel::product(dim, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0});
}

JumpKernel kernel_axial(int dim, double p_stay, double p_plus, double p_minus) {
    if (p_stay < 0 || p_plus < 0 || p_minus < 0 || p_stay + p_plus + p_minus > 1.0 + 1e-12)
        throw usage_error("kernel_axial: bad probabilities");
    std::vector<std::pair<Site, double>> atoms;
    atoms.emplace_back(Site{}, p_stay);
    Site e1;
    e1.c[0] = 1;
    atoms.emplace_back(e1, p_plus);
    e1.c[0] = -1;
    atoms.emplace_back(e1, p_minus);
    const double rest = 1.0 - p_stay - p_plus - p_minus;
    if (dim > 1 && rest > 0.0) {
        const double each = rest / (2.0 * (dim - 1));
        for (int d = 1; d < dim; ++d) {
            Site s;
            s.c[static_cast<size_t>(d)] = 1;
            atoms.emplace_back(s, each);
            s.c[static_cast<size_t>(d)] = -1;
            atoms.emplace_back(s, each);
        }
    } else if (rest > 1e-12) {
        throw usage_error("kernel_axial: leftover mass with dim=1");
    }
    return JumpKernel::from_atoms(dim, std::move(atoms));
}

JumpKernel kernel_pm_e1(int dim, double p_plus) {
    if (p_plus < 0.0 || p_plus > 1.0) throw usage_error("kernel_pm_e1: bad probability");
    std::vector<std::pair<Site, double>> atoms;
    Site e1;
    e1.c[0] = 1;
    atoms.emplace_back(e1, p_plus);
    e1.c[0] = -1;
    atoms.emplace_back(e1, 1.0 - p_plus);
    return JumpKernel::from_atoms(dim, std::move(atoms));
}

JumpKernel kernel_nn(int dim) {
    std::vector<std::pair<Site, double>> atoms;
    for (int d = 0; d < dim; ++d) {
        Site s;
        s.c[static_cast<size_t>(d)] = 1;
        atoms.emplace_back(s, 0.5 / dim);
        s.c[static_cast<size_t>(d)] = -1;
        atoms.emplace_back(s, 0.5 / dim);
    }
    return JumpKernel::from_atoms(dim, std::move(atoms));
}

}  // namespace rwrw
