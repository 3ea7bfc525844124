#pragma once

// Linear stability of equilibria. Both Jacobians (plain constant-power loads
// and the gated controller) have the structure diag(d) + u w^T with w = 1,
// so their spectra follow from the poles d_i and the roots of the secular
// function c(lambda) = 1 + sum_i u_i w_i / (d_i - lambda).

#include "dcvc/dynamics.hpp"
#include "dcvc/equilibrium.hpp"
#include "dcvc/network.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dcvc {

enum class JacobianContext { inflexible, vcs };

struct JacobianDecomposition {
    std::vector<double> d;
    std::vector<double> u;
    std::vector<double> w;
    JacobianContext context = JacobianContext::inflexible;

    std::size_t size() const noexcept { return d.size(); }
    /// Row-major diag(d) + u w^T.
    std::vector<double> dense() const;
};

/// Jacobian of g' = -dP(g): d_i = -v^2, u = 2 v^2 g / (g_eq + g_l), w = 1.
JacobianDecomposition jacobian_inflexible(const SystemConfig& cfg, const ConductanceState& s);

/// Jacobian of g' = -A(g) dP(g). Throws SingularGate on a gate pole.
JacobianDecomposition jacobian_vcs(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s);

/// Sign pattern of the rank-one weights u_i w_i.
enum class WeightSigns { all_zero, nonnegative, nonpositive, mixed };
WeightSigns weight_signs(const JacobianDecomposition& jd);

/// Eigenvalues (ascending) from the pole/secular-root structure. Requires the
/// nonzero weights to share one sign; throws NumericalBreakdown otherwise or
/// when a bracket cannot be resolved.
std::vector<double> eigenvalues_secular(const JacobianDecomposition& jd);

/// Characteristic polynomial oracle. Coefficients are ascending and belong
/// to the matrix scaled by 1/scale, so roots of char_poly times scale are
/// the eigenvalues. Real roots are refined by Newton on det(A - lambda I).
struct DenseSpectrum {
    std::vector<double> char_poly;
    double scale = 1.0;
    std::vector<double> real_roots;  ///< ascending, with multiplicity
    bool all_real = true;
};

DenseSpectrum dense_spectrum(std::span<const double> matrix, std::size_t n);
DenseSpectrum dense_spectrum(const JacobianDecomposition& jd);

/// Faddeev-LeVerrier coefficients of det(lambda I - A), ascending, monic.
std::vector<double> characteristic_polynomial(std::span<const double> matrix, std::size_t n);

/// Real roots of a polynomial (ascending coefficients) with multiplicity,
/// isolated through the critical points of its derivatives.
std::vector<double> polynomial_real_roots(std::span<const double> coeffs);

/// Number of roots with positive real part from the Routh array, or nullopt
/// when a pivot vanishes (roots on or symmetric about the imaginary axis).
std::optional<std::size_t> routh_unstable_count(std::span<const double> coeffs);

enum class Classification { stable, unstable, nonhyperbolic };
enum class EigenMethod { secular, dense_oracle };

const char* to_string(Classification c);
const char* to_string(EigenMethod m);

struct StabilityVerdict {
    std::vector<double> eigenvalues;  ///< real eigenvalues, ascending
    Classification classification = Classification::stable;
    EigenMethod method = EigenMethod::secular;
    JacobianContext context = JacobianContext::inflexible;
    bool complex_pairs = false;  ///< the oracle found non-real roots; verdict from the Routh array
    /// Max deviation from the dense oracle after sorting (n <= 6, real spectra only).
    std::optional<double> oracle_max_diff;
};

inline constexpr std::size_t kOracleCrossCheckMaxSize = 6;

/// 1e-9 (E/2)^2.
double default_hyperbolicity_tol(const SystemConfig& cfg);

/// Linearisation verdict at an arbitrary state. Uses the plain constant-power
/// Jacobian when there are no flexible loads and the gated one otherwise.
StabilityVerdict classify_state(const SystemConfig& cfg, const ControllerParams& ctrl, const ConductanceState& s,
                                double tol_hyp);
StabilityVerdict classify(const SystemConfig& cfg, const ControllerParams& ctrl, const Equilibrium& eq,
                          double tol_hyp);
StabilityVerdict classify(const SystemConfig& cfg, const ControllerParams& ctrl, const Equilibrium& eq);

}  // namespace dcvc
