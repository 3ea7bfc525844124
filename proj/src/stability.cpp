#include "dcvc/stability.hpp"

#include "dcvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dcvc {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxBisection = 200;
constexpr double kBisectionRelTol = 1e-12;
constexpr double kPoleGuard = 1e-12;

}  // namespace

std::vector<double> JacobianDecomposition::dense() const {
    const std::size_t n = size();
    std::vector<double> m(n * n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) m[r * n + c] = u[r] * w[c];
        m[r * n + r] += d[r];
    }
    return m;
}

JacobianDecomposition jacobian_inflexible(const SystemConfig& cfg, const ConductanceState& s) {
    if (s.size() != cfg.size()) throw ConfigError("state dimension does not match the system");
    const std::size_t n = s.size();
    const double g_eq = s.sum();
    const double v = detail::voltage(cfg, s.values());
    const double v2 = v * v;
    const double k = 2.0 * v2 / (g_eq + cfg.g_l());

    JacobianDecomposition jd;
    jd.context = JacobianContext::inflexible;
    jd.d.assign(n, -v2);
    jd.u.resize(n);
    for (std::size_t i = 0; i < n; ++i) jd.u[i] = k * s[i];
    jd.w.assign(n, 1.0);
    return jd;
}

JacobianDecomposition jacobian_vcs(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s) {
    if (s.size() != cfg.size()) throw ConfigError("state dimension does not match the system");
    const std::size_t n = s.size();
    const PowerFlow pf = power_flow(cfg, s);
    const double v2 = pf.v * pf.v;
    const double k = 2.0 * v2 / (pf.g_eq + cfg.g_l());

    JacobianDecomposition jd;
    jd.context = JacobianContext::vcs;
    jd.d.resize(n);
    jd.u.resize(n);
    jd.w.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double a = 1.0;
        double da = 0.0;  // d alpha_i / d g_i
        if (cfg.is_flexible(i)) {
            const double den = 1.0 + ctrl.kappa * (ctrl.g_bar.at(i) - s[i]);
            if (std::abs(den) < kPoleGuard)
                throw SingularGate("Jacobian requested on the gate pole of load " + std::to_string(i + 1), i);
            a = (den - 1.0) / den;
            da = -ctrl.kappa / (den * den);
        }
        jd.d[i] = -a * v2 - pf.dP[i] * da;
        jd.u[i] = k * a * s[i];
    }
    return jd;
}

WeightSigns weight_signs(const JacobianDecomposition& jd) {
    bool pos = false;
    bool neg = false;
    for (std::size_t i = 0; i < jd.size(); ++i) {
        const double z = jd.u[i] * jd.w[i];
        pos = pos || z > 0.0;
        neg = neg || z < 0.0;
    }
    if (pos && neg) return WeightSigns::mixed;
    if (pos) return WeightSigns::nonnegative;
    if (neg) return WeightSigns::nonpositive;
    return WeightSigns::all_zero;
}

namespace {

struct Pole {
    double d;
    double z;
};

// Secular function and its derivative in coordinates shifted to a pole:
// lambda = origin + tau, with the pole offsets precomputed so that the
// distance to the nearest pole keeps full relative accuracy.
struct ShiftedSecular {
    const std::vector<Pole>& poles;
    double origin;

    void eval(double tau, double& c, double& dc) const {
        c = 1.0;
        dc = 0.0;
        for (const Pole& p : poles) {
            const double delta = (p.d - origin) - tau;
            c += p.z / delta;
            dc += p.z / (delta * delta);
        }
    }
};

double bisect_secular(const std::vector<Pole>& poles, double origin, double lo, double hi, bool increasing) {
    const ShiftedSecular f{poles, origin};
    for (int it = 0; it < kMaxBisection; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        double c = 0.0, dc = 0.0;
        f.eval(mid, c, dc);
        if (!std::isfinite(c) || !std::isfinite(dc))
            throw NumericalBreakdown("secular function is not finite inside a bracket");
        if ((dc > 0.0) != increasing && dc != 0.0)
            throw NumericalBreakdown("secular function lost monotonicity inside a bracket");
        if ((c < 0.0) == increasing)
            lo = mid;
        else
            hi = mid;
        const double lambda = origin + 0.5 * (lo + hi);
        if (hi - lo <= kBisectionRelTol * std::abs(lambda)) break;
    }
    return origin + 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> eigenvalues_secular(const JacobianDecomposition& jd) {
    const std::size_t n = jd.size();
    if (jd.u.size() != n || jd.w.size() != n) throw ConfigError("malformed Jacobian decomposition");

    const WeightSigns signs = weight_signs(jd);
    if (signs == WeightSigns::mixed)
        throw NumericalBreakdown("rank-one weights have mixed signs; eigenvalues need not interlace");

    double scale = 0.0;
    double z_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        scale = std::max(scale, std::abs(jd.d[i]));
        z_total += std::abs(jd.u[i] * jd.w[i]);
    }
    scale = std::max(scale, z_total);

    std::vector<double> eig;
    eig.reserve(n);
    std::vector<Pole> active;
    const double tiny = 64.0 * kEps * scale;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = jd.u[i] * jd.w[i];
        if (std::abs(z) <= tiny)
            eig.push_back(jd.d[i]);  // decoupled pole
        else
            active.push_back({jd.d[i], z});
    }

    // Equal poles: all but one copy are exact eigenvalues and the remaining
    // pole carries the summed weight.
    std::sort(active.begin(), active.end(), [](const Pole& a, const Pole& b) { return a.d < b.d; });
    std::vector<Pole> poles;
    for (const Pole& p : active) {
        if (!poles.empty() && std::abs(p.d - poles.back().d) <= tiny) {
            eig.push_back(poles.back().d);
            poles.back().z += p.z;
        } else {
            poles.push_back(p);
        }
    }

    const bool increasing = signs == WeightSigns::nonnegative;
    double z_sum = 0.0;
    for (const Pole& p : poles) z_sum += std::abs(p.z);

    for (std::size_t j = 0; j + 1 < poles.size(); ++j) {
        const double a = poles[j].d;
        const double b = poles[j + 1].d;
        const double half = 0.5 * (b - a);
        double c = 0.0, dc = 0.0;
        ShiftedSecular{poles, a}.eval(half, c, dc);
        // Root lies in (a, a + half] when c(mid) is already past zero.
        const bool left = increasing ? c >= 0.0 : c <= 0.0;
        if (left)
            eig.push_back(bisect_secular(poles, a, 0.0, half, increasing));
        else
            eig.push_back(bisect_secular(poles, b, -half, 0.0, increasing));
    }
    if (!poles.empty()) {
        if (increasing)
            eig.push_back(bisect_secular(poles, poles.back().d, 0.0, z_sum, true));
        else
            eig.push_back(bisect_secular(poles, poles.front().d, -z_sum, 0.0, false));
    }

    if (eig.size() != n) {
        std::ostringstream msg;
        msg << "secular solve produced " << eig.size() << " eigenvalues for a " << n << "x" << n << " matrix";
        throw NumericalBreakdown(msg.str());
    }
    for (double x : eig)
        if (!std::isfinite(x)) throw NumericalBreakdown("non-finite eigenvalue from secular solve");
    std::sort(eig.begin(), eig.end());
    return eig;
}

std::vector<double> characteristic_polynomial(std::span<const double> A, std::size_t n) {
    if (A.size() != n * n) throw ConfigError("matrix size mismatch");
    std::vector<double> coeffs(n + 1, 0.0);
    coeffs[n] = 1.0;
    std::vector<double> M(n * n, 0.0), AM(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) M[i * n + i] = 1.0;
    for (std::size_t k = 1; k <= n; ++k) {
        double trace = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                double acc = 0.0;
                for (std::size_t m = 0; m < n; ++m) acc += A[r * n + m] * M[m * n + c];
                AM[r * n + c] = acc;
            }
            trace += AM[r * n + r];
        }
        const double ck = -trace / static_cast<double>(k);
        coeffs[n - k] = ck;
        M = AM;
        for (std::size_t i = 0; i < n; ++i) M[i * n + i] += ck;
    }
    return coeffs;
}

namespace {

double horner(std::span<const double> a, double x) {
    double acc = 0.0;
    for (std::size_t k = a.size(); k-- > 0;) acc = acc * x + a[k];
    return acc;
}

double magnitude(std::span<const double> a, double x) {
    double acc = 0.0;
    const double ax = std::abs(x);
    for (std::size_t k = a.size(); k-- > 0;) acc = acc * ax + std::abs(a[k]);
    return acc;
}

// |p(x)| at or below this is indistinguishable from a root.
double root_tol(std::span<const double> a, double x) { return 1e-13 * magnitude(a, x); }

double bisect_poly(std::span<const double> a, double lo, double hi) {
    double f_lo = horner(a, lo);
    for (int it = 0; it < kMaxBisection; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        const double f_mid = horner(a, mid);
        if (f_mid == 0.0) return mid;
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> polynomial_real_roots(std::span<const double> coeffs) {
    std::vector<double> a(coeffs.begin(), coeffs.end());
    while (!a.empty() && a.back() == 0.0) a.pop_back();
    if (a.size() <= 1) return {};
    const std::size_t deg = a.size() - 1;
    if (deg == 1) return {-a[0] / a[1]};

    std::vector<double> da(deg);
    for (std::size_t k = 1; k <= deg; ++k) da[k - 1] = static_cast<double>(k) * a[k];
    const std::vector<double> crit = polynomial_real_roots(da);

    struct Critical {
        double x;
        std::size_t mult;
        bool root = false;
    };
    std::vector<Critical> cps;
    for (double x : crit) {
        if (!cps.empty() && cps.back().x == x)
            ++cps.back().mult;
        else
            cps.push_back({x, 1});
    }

    double bound = 0.0;
    for (std::size_t k = 0; k < deg; ++k) bound = std::max(bound, std::abs(a[k] / a[deg]));
    bound += 1.0;
    for (const auto& c : cps) bound = std::max(bound, std::abs(c.x) + 1.0);

    std::vector<double> roots;
    for (auto& c : cps) {
        if (std::abs(horner(a, c.x)) <= root_tol(a, c.x)) {
            c.root = true;
            roots.insert(roots.end(), c.mult + 1, c.x);
        }
    }

    // Between consecutive critical points p is monotone: at most one root,
    // and none when an endpoint already is one.
    std::vector<Critical> pts;
    pts.push_back({-bound, 0});
    pts.insert(pts.end(), cps.begin(), cps.end());
    pts.push_back({bound, 0});
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        if (pts[k].root || pts[k + 1].root) continue;
        const double f0 = horner(a, pts[k].x);
        const double f1 = horner(a, pts[k + 1].x);
        if ((f0 < 0.0) != (f1 < 0.0)) roots.push_back(bisect_poly(a, pts[k].x, pts[k + 1].x));
    }

    std::sort(roots.begin(), roots.end());
    if (roots.size() > deg) roots.resize(deg);
    return roots;
}

namespace {

// tr((A - x I)^-1) through a partially pivoted LU; nullopt when singular.
std::optional<double> resolvent_trace(std::span<const double> A, std::size_t n, double x) {
    std::vector<double> B(A.begin(), A.end());
    for (std::size_t i = 0; i < n; ++i) B[i * n + i] -= x;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(B[r * n + k]) > std::abs(B[p * n + k])) p = r;
        if (B[p * n + k] == 0.0) return std::nullopt;
        if (p != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(B[k * n + c], B[p * n + c]);
            std::swap(perm[k], perm[p]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = B[r * n + k] /= B[k * n + k];
            for (std::size_t c = k + 1; c < n; ++c) B[r * n + c] -= f * B[k * n + c];
        }
    }
    double trace = 0.0;
    std::vector<double> y(n);
    for (std::size_t j = 0; j < n; ++j) {
        // Solve B z = e_j and keep z_j.
        for (std::size_t i = 0; i < n; ++i) {
            double acc = perm[i] == j ? 1.0 : 0.0;
            for (std::size_t c = 0; c < i; ++c) acc -= B[i * n + c] * y[c];
            y[i] = acc;
        }
        for (std::size_t i = n; i-- > 0;) {
            double acc = y[i];
            for (std::size_t c = i + 1; c < n; ++c) acc -= B[i * n + c] * y[c];
            y[i] = acc / B[i * n + i];
        }
        trace += y[j];
    }
    return trace;
}

// Newton on det(A - x I), whose logarithmic derivative is -tr((A - x I)^-1).
// The polynomial coefficients carry the rounding of the trace recurrence;
// the determinant does not. A root may not move past half the distance to
// its neighbours, so clustered roots stay distinct.
void polish_roots(std::span<const double> A, std::size_t n, std::vector<double>& roots) {
    const std::vector<double> start = roots;
    for (std::size_t k = 0; k < roots.size(); ++k) {
        double reach = std::numeric_limits<double>::infinity();
        if (k > 0) reach = std::min(reach, 0.5 * (start[k] - start[k - 1]));
        if (k + 1 < start.size()) reach = std::min(reach, 0.5 * (start[k + 1] - start[k]));
        if (!(reach > 0.0)) continue;
        double x = start[k];
        for (int it = 0; it < 8; ++it) {
            const auto tr = resolvent_trace(A, n, x);
            if (!tr || *tr == 0.0) break;
            const double next = x + 1.0 / *tr;
            if (!std::isfinite(next) || std::abs(next - start[k]) > reach) break;
            const bool done = std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x));
            x = next;
            if (done) break;
        }
        roots[k] = x;
    }
}

}  // namespace

DenseSpectrum dense_spectrum(std::span<const double> matrix, std::size_t n) {
    if (matrix.size() != n * n) throw ConfigError("matrix size mismatch");
    DenseSpectrum out;
    double scale = 0.0;
    for (double x : matrix) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) {
        out.char_poly.assign(n + 1, 0.0);
        out.char_poly[n] = 1.0;
        out.real_roots.assign(n, 0.0);
        return out;
    }
    std::vector<double> scaled(matrix.begin(), matrix.end());
    for (double& x : scaled) x /= scale;
    out.scale = scale;
    out.char_poly = characteristic_polynomial(scaled, n);
    out.real_roots = polynomial_real_roots(out.char_poly);
    polish_roots(scaled, n, out.real_roots);
    std::sort(out.real_roots.begin(), out.real_roots.end());
    for (double& r : out.real_roots) r *= scale;
    out.all_real = out.real_roots.size() == n;
    return out;
}

DenseSpectrum dense_spectrum(const JacobianDecomposition& jd) {
    const auto m = jd.dense();
    return dense_spectrum(m, jd.size());
}

std::optional<std::size_t> routh_unstable_count(std::span<const double> coeffs) {
    std::vector<double> a(coeffs.begin(), coeffs.end());
    while (!a.empty() && a.back() == 0.0) a.pop_back();
    if (a.size() <= 1) return 0;
    const std::size_t deg = a.size() - 1;

    double mag = 0.0;
    for (double x : a) mag = std::max(mag, std::abs(x));
    const double tol = 1e-12 * mag;

    // Rows hold descending-power coefficients a_deg, a_{deg-2}, ... and
    // a_{deg-1}, a_{deg-3}, ...
    std::vector<double> r0, r1;
    for (std::size_t k = 0; k <= deg; k += 2) r0.push_back(a[deg - k]);
    for (std::size_t k = 1; k <= deg; k += 2) r1.push_back(a[deg - k]);

    std::vector<double> first{r0[0]};
    for (std::size_t row = 1; row <= deg; ++row) {
        if (r1.empty() || std::abs(r1[0]) <= tol) return std::nullopt;
        first.push_back(r1[0]);
        std::vector<double> next;
        for (std::size_t j = 0; j + 1 < r0.size(); ++j) {
            const double b = j + 1 < r1.size() ? r1[j + 1] : 0.0;
            next.push_back((r1[0] * r0[j + 1] - r0[0] * b) / r1[0]);
        }
        r0 = std::move(r1);
        r1 = std::move(next);
    }
    std::size_t changes = 0;
    for (std::size_t k = 1; k < first.size(); ++k)
        if ((first[k] < 0.0) != (first[k - 1] < 0.0)) ++changes;
    return changes;
}

const char* to_string(Classification c) {
    switch (c) {
        case Classification::stable: return "stable";
        case Classification::unstable: return "unstable";
        case Classification::nonhyperbolic: return "nonhyperbolic";
    }
    return "unknown";
}

const char* to_string(EigenMethod m) {
    switch (m) {
        case EigenMethod::secular: return "secular";
        case EigenMethod::dense_oracle: return "dense_oracle";
    }
    return "unknown";
}

double default_hyperbolicity_tol(const SystemConfig& cfg) {
    const double half_E = cfg.E() / 2.0;
    return 1e-9 * half_E * half_E;
}

namespace {

Classification from_real_spectrum(const std::vector<double>& eig, double tol) {
    bool near_zero = false;
    bool positive = false;
    for (double l : eig) {
        if (std::abs(l) <= tol)
            near_zero = true;
        else if (l > 0.0)
            positive = true;
    }
    if (near_zero) return Classification::nonhyperbolic;
    return positive ? Classification::unstable : Classification::stable;
}

}  // namespace

StabilityVerdict classify_state(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s,
                                double tol_hyp) {
    if (!(tol_hyp > 0.0)) throw ConfigError("hyperbolicity tolerance must be > 0");
    const JacobianDecomposition jd =
        cfg.num_flexible() == 0 ? jacobian_inflexible(cfg, s) : jacobian_vcs(cfg, ctrl, s);

    StabilityVerdict verdict;
    verdict.context = jd.context;
    std::optional<DenseSpectrum> dense;
    if (weight_signs(jd) != WeightSigns::mixed) {
        verdict.eigenvalues = eigenvalues_secular(jd);
        verdict.method = EigenMethod::secular;
    } else {
        dense = dense_spectrum(jd);
        verdict.eigenvalues = dense->real_roots;
        verdict.method = EigenMethod::dense_oracle;
        verdict.complex_pairs = !dense->all_real;
    }

    if (jd.size() <= kOracleCrossCheckMaxSize) {
        if (!dense) dense = dense_spectrum(jd);
        if (dense->all_real && dense->real_roots.size() == verdict.eigenvalues.size()) {
            double diff = 0.0;
            for (std::size_t k = 0; k < dense->real_roots.size(); ++k)
                diff = std::max(diff, std::abs(dense->real_roots[k] - verdict.eigenvalues[k]));
            verdict.oracle_max_diff = diff;
        }
        // Otherwise the polynomial lost roots of a repeated pole; the secular
        // spectrum is real whenever weights share a sign, so nothing to flag.
    }

    if (verdict.method == EigenMethod::dense_oracle && verdict.complex_pairs) {
        const Classification real_part = from_real_spectrum(verdict.eigenvalues, tol_hyp);
        const auto rhp = routh_unstable_count(dense->char_poly);
        if (real_part == Classification::unstable || (rhp && *rhp > 0))
            verdict.classification = Classification::unstable;
        else if (!rhp || real_part == Classification::nonhyperbolic)
            verdict.classification = Classification::nonhyperbolic;
        else
            verdict.classification = Classification::stable;
    } else {
        verdict.classification = from_real_spectrum(verdict.eigenvalues, tol_hyp);
    }
    return verdict;
}

StabilityVerdict classify(const SystemConfig& cfg, const ControllerParams& ctrl, const Equilibrium& eq,
                          double tol_hyp) {
    StabilityVerdict v = classify_state(cfg, ctrl, eq.g_star, tol_hyp);
    if (eq.branch == Branch::fold) v.classification = Classification::nonhyperbolic;
    return v;
}

StabilityVerdict classify(const SystemConfig& cfg, const ControllerParams& ctrl, const Equilibrium& eq) {
    return classify(cfg, ctrl, eq, default_hyperbolicity_tol(cfg));
}

}  // namespace dcvc
