#pragma once

// Independent oracles and random generators shared by the unit tests and the
// acceptance runner. Nothing here calls the closed forms under test except to
// build inputs.

#include "dcvc/dynamics.hpp"
#include "dcvc/equilibrium.hpp"
#include "dcvc/network.hpp"
#include "dcvc/stability.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <vector>

namespace dcvc::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Random split of `total` into n positive shares.
inline std::vector<double> split(Rng& rng, double total, std::size_t n) {
    std::vector<double> w(n);
    double s = 0.0;
    for (auto& x : w) s += (x = uniform(rng, 0.2, 1.0));
    for (auto& x : w) x *= total / s;
    return w;
}

struct RandomSystem {
    std::size_t n_flexible = 0;
    std::size_t n_inflexible = 0;
    double load_factor = 0.5;  ///< P0_tot / P_max
};

inline SystemConfig random_config(Rng& rng, const RandomSystem& spec) {
    const double E = log_uniform(rng, 0.5, 5.0);
    const double g_l = log_uniform(rng, 0.2, 5.0);
    const double P_max = E * E * g_l / 4.0;
    const std::size_t n = spec.n_flexible + spec.n_inflexible;
    const auto P0 = split(rng, spec.load_factor * P_max, n);
    std::vector<LoadSpec> loads;
    for (std::size_t i = 0; i < n; ++i) {
        const bool flex = i < spec.n_flexible;
        loads.push_back({P0[i], flex ? LoadKind::flexible : LoadKind::inflexible, flex ? log_uniform(rng, 0.25, 4.0) : 1.0});
    }
    return SystemConfig({E, g_l}, loads, log_uniform(rng, 1.0, 30.0));
}

/// Eigenvalues of a row-major dense matrix through Eigen's real Schur form.
inline std::vector<std::complex<double>> eigen_oracle(const std::vector<double>& m, std::size_t n) {
    Eigen::MatrixXd A(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) A(r, c) = m[r * n + c];
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    std::vector<std::complex<double>> out(es.eigenvalues().data(), es.eigenvalues().data() + n);
    std::sort(out.begin(), out.end(), [](auto a, auto b) { return a.real() < b.real(); });
    return out;
}

inline std::vector<double> real_parts(const std::vector<std::complex<double>>& z) {
    std::vector<double> r;
    for (auto x : z) r.push_back(x.real());
    return r;
}

/// Composite Gauss-Legendre (5 nodes) of f over [a, b].
inline double integrate_gl(const std::function<double(double)>& f, double a, double b, int panels = 400) {
    static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
    static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                                0.2369268850561891};
    const double h = (b - a) / panels;
    double acc = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (int k = 0; k < 5; ++k) acc += w[k] * f(mid + 0.5 * h * x[k]);
    }
    return 0.5 * h * acc;
}

/// Equilibria of the gated dynamics found by branch-and-bound over a box,
/// independent of the subset decomposition. Each flexible load contributes
/// the pole-free residual kappa (g_bar_i - g_i) dP_i, each inflexible one
/// dP_i. Boxes are discarded only when a Lipschitz bound proves some residual
/// cannot vanish inside. A surviving cell at the target resolution is kept
/// unless finer subdivision proves it empty; the kept cells are clustered.
class GridOracle {
public:
    GridOracle(const SystemConfig& cfg, double upper, double resolution)
        : cfg_(cfg), ctrl_(ControllerParams::from(cfg)), upper_(upper), res_(resolution) {}

    struct Cluster {
        std::vector<double> centre;
        std::vector<double> lo;  ///< bounding box of the member cells
        std::vector<double> hi;
        std::size_t cells = 0;

        /// True when x lies in the bounding box grown by `pad`.
        bool covers(std::span<const double> x, double pad) const {
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] < lo[i] - pad || x[i] > hi[i] + pad) return false;
            return true;
        }
    };

    std::vector<Cluster> clusters() {
        cells_.clear();
        const std::size_t n = cfg_.size();
        std::vector<double> c(n, 0.5 * upper_);
        refine(c, 0.5 * upper_);
        return cluster();
    }

    std::size_t cells() const { return cells_.size(); }
    double cell_width() const { return 2.0 * cell_r_; }

private:
    void residuals(const std::vector<double>& g, std::vector<double>& h, std::vector<double>& dP) const {
        const std::size_t n = g.size();
        double geq = 0.0;
        for (double x : g) geq += x;
        const double v = cfg_.E() * cfg_.g_l() / (geq + cfg_.g_l());
        h.resize(n);
        dP.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            dP[i] = v * v * g[i] - cfg_.P0(i);
            h[i] = cfg_.is_flexible(i) ? cfg_.kappa() * (ctrl_.g_bar[i] - g[i]) * dP[i] : dP[i];
        }
    }

    // True when a Lipschitz bound proves some residual cannot vanish in the
    // box of half-width r around c.
    bool excluded(const std::vector<double>& c, double r) const {
        const std::size_t n = c.size();
        double s_min = 0.0;
        for (double x : c) s_min += std::max(0.0, x - r);
        const double K = std::pow(cfg_.E() * cfg_.g_l(), 2);
        const double v2_max = K / std::pow(s_min + cfg_.g_l(), 2);
        // |d dP_i / d g_j| <= 3 v^2, so dP_i moves by at most 3 n v2_max r.
        const double ddP = 3.0 * static_cast<double>(n) * v2_max * r;

        std::vector<double> h, dP;
        residuals(c, h, dP);
        for (std::size_t i = 0; i < n; ++i) {
            double bound = ddP;
            if (cfg_.is_flexible(i)) {
                const double x_max = cfg_.kappa() * (std::abs(ctrl_.g_bar[i] - c[i]) + r);
                const double dP_max = std::abs(dP[i]) + ddP;
                bound = x_max * ddP + dP_max * cfg_.kappa() * r;
            }
            if (std::abs(h[i]) > 1.0001 * bound) return true;
        }
        return false;
    }

    template <class Visit>
    void for_children(const std::vector<double>& c, double r, Visit&& visit) const {
        const std::size_t n = c.size();
        const std::size_t corners = std::size_t{1} << n;
        for (std::size_t m = 0; m < corners; ++m) {
            std::vector<double> child(c);
            for (std::size_t i = 0; i < n; ++i) child[i] += (m >> i & 1 ? 0.5 : -0.5) * r;
            if (!visit(child)) return;
        }
    }

    // Subdivides below the resolution looking for a proof that the box holds
    // no root. Gives up (false) at the first child that survives to `depth`.
    bool provably_empty(const std::vector<double>& c, double r, int depth) const {
        if (excluded(c, r)) return true;
        if (depth == 0) return false;
        bool empty = true;
        for_children(c, r, [&](const std::vector<double>& child) {
            empty = provably_empty(child, 0.5 * r, depth - 1);
            return empty;
        });
        return empty;
    }

    void refine(const std::vector<double>& c, double r) {
        if (excluded(c, r)) return;
        if (r <= 0.5 * res_) {
            cell_r_ = r;
            if (!provably_empty(c, r, kProofDepth)) cells_.push_back(c);
            return;
        }
        for_children(c, r, [&](const std::vector<double>& child) {
            refine(child, 0.5 * r);
            return true;
        });
    }

    // Cells live on a regular lattice once refined, so neighbours are found
    // through their integer coordinates.
    std::vector<Cluster> cluster() const {
        const std::size_t m = cells_.size();
        if (m == 0) return {};
        const std::size_t n = cells_.front().size();
        const double width = 2.0 * cell_r_;
        std::map<std::vector<long>, std::size_t> index;
        std::vector<std::vector<long>> keys(m);
        for (std::size_t k = 0; k < m; ++k) {
            for (double x : cells_[k]) keys[k].push_back(std::lround(x / width - 0.5));
            index.emplace(keys[k], k);
        }
        std::vector<std::size_t> parent(m);
        for (std::size_t k = 0; k < m; ++k) parent[k] = k;
        std::function<std::size_t(std::size_t)> find = [&](std::size_t k) {
            return parent[k] == k ? k : parent[k] = find(parent[k]);
        };
        std::size_t offsets = 1;
        for (std::size_t i = 0; i < n; ++i) offsets *= 3;
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t o = 0; o < offsets; ++o) {
                std::vector<long> nb = keys[k];
                std::size_t code = o;
                for (std::size_t i = 0; i < n; ++i, code /= 3) nb[i] += static_cast<long>(code % 3) - 1;
                auto it = index.find(nb);
                if (it != index.end()) parent[find(k)] = find(it->second);
            }
        }
        std::vector<Cluster> out;
        std::vector<std::size_t> root_index(m, m);
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t r = find(k);
            if (root_index[r] == m) {
                root_index[r] = out.size();
                out.push_back({std::vector<double>(n, 0.0), cells_[k], cells_[k], 0});
            }
            Cluster& c = out[root_index[r]];
            for (std::size_t i = 0; i < n; ++i) {
                c.centre[i] += cells_[k][i];
                c.lo[i] = std::min(c.lo[i], cells_[k][i] - cell_r_);
                c.hi[i] = std::max(c.hi[i], cells_[k][i] + cell_r_);
            }
            ++c.cells;
        }
        for (auto& c : out)
            for (double& x : c.centre) x /= static_cast<double>(c.cells);
        return out;
    }

    static constexpr int kProofDepth = 10;

    const SystemConfig& cfg_;
    ControllerParams ctrl_;
    double upper_;
    double res_;
    std::vector<std::vector<double>> cells_;
    double cell_r_ = 0.0;
};

}  // namespace dcvc::testing
