#pragma once
// The quasilinear operator 𝒩 and its structural identities.
//
// Strong form
//   𝒩(w) = (γ2/2) P_g w + 6γ3 Δ_g S − 12γ3 div_g(S ∇w) + 2γ3 div_g(R ∇w),
//   S = Δ_g w + |∇w|²_g,
// weak form
//   ⟨𝒩(w), φ⟩ = γ2/2 ∫ΔwΔφ − γ2 ∫Ric(∇w,∇φ) + 6γ3 ∫SΔφ + 12γ3 ∫S⟨∇w,∇φ⟩
//              + (γ2/3 − 2γ3) ∫R⟨∇w,∇φ⟩.
// Unfiltered (dealias = 0), the discrete strong form is the exact adjoint of
// the discrete weak form, and 4𝒩 is the exact gradient of the discrete J.

#include "ldet/conformal.hpp"

#include "json.hpp"

#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace ldet {

/// `dealias` > 0 low-passes the nonlinear products at that fraction of Nyquist
/// before they are differentiated (1/2 is the stricter rule for cubic terms).
ScalarField apply_N(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                    double dealias = 0.0);

struct WeakPairing {
    double value = 0.0;
    double biharmonic = 0.0, ricci = 0.0, quadratic = 0.0, cubic = 0.0, scalar = 0.0;
};
WeakPairing weak_pair(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                      const ScalarField& phi);

/// Gâteaux derivative d/dt 𝒩(w + t v) at t = 0.
ScalarField linearized_N(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                         const ScalarField& v);

/// A checked identity lhs = rhs with its scale (the larger of |lhs|, |rhs|).
struct IdentityResidual {
    std::string identity;
    std::string inputs_hash;
    double lhs = 0.0, rhs = 0.0, residual = 0.0, scale = 0.0;
    double tolerance = 0.0;
    std::vector<std::pair<std::string, double>> terms; ///< rhs contributions
    double relative() const { return scale > 0.0 ? residual / scale : residual; }
    bool pass() const { return relative() < tolerance; }
};
nlohmann::json to_json(const IdentityResidual& r);

/// FNV-1a over the raw samples (and grid) of the given fields, hex encoded.
std::string fingerprint(std::initializer_list<const ScalarField*> fields);

/// |Richardson-extrapolated (J(w+tφ) − J(w−tφ))/2t − 4⟨𝒩(w),φ⟩|.
/// Since J(w + tφ) is a quartic polynomial in t, one Richardson step is exact.
/// t ≤ 0 selects 10⁻⁵(1 + ‖w‖∞)/‖φ‖∞.
IdentityResidual gradient_identity_residual(const GammaWeights& gamma, const ConformalMetric& m,
                                            const ScalarField& w, const ScalarField& phi, double t = 0.0);

/// ⟨𝒩(w1) − 𝒩(w2), φ⟩ against its five-term expansion in ĝ = e^q g,
/// p = w1 − w2, q = w1 + w2.
IdentityResidual difference_identity_residual(const GammaWeights& gamma, const ConformalMetric& m,
                                              const ScalarField& w1, const ScalarField& w2,
                                              const ScalarField& phi);

/// ∫Ric(∇p,∇φ) = ∫ΔpΔφ − ∫⟨∇²p,∇²φ⟩, all with respect to g.
IdentityResidual bochner_residual(const ConformalMetric& m, const ScalarField& p, const ScalarField& phi);

// --- localized test identity ------------------------------------------------------

enum class PsiKind { linear, m0, truncation };

/// Test profiles ψ with exact ψ', ψ''.
///   linear:      ψ(s) = s
///   m0:          ψ(t) = ∫_{−∞}^t (M0 + s²)^{−2/3} ds
///   truncation:  ψ(s) = k Ψ(s/k), Ψ odd, Ψ(s) = s on [0,1], 8 − 9s^{−1/3} + 2/s beyond
struct PsiProfile {
    PsiKind kind = PsiKind::linear;
    double M0 = 1.0;
    double k = 1.0;

    static PsiProfile from_name(std::string_view name, double param = 1.0);
    std::string name() const;
    double psi(double s) const;
    double dpsi(double s) const;
    double ddpsi(double s) const;
};

/// χ = Π_a (1 + cos(2π(x_a − c_a)/L))/2: a band-limited bump (χ⁴ has four modes per axis).
ScalarField cosine_bump(const Grid4& g, const Vec4& center);

/// ⟨𝒩(w), χ⁴ψ(w − c)⟩ against the expanded right-hand side including the
/// cut-off remainder ℛ.
IdentityResidual localized_identity_residual(const GammaWeights& gamma, const ConformalMetric& m,
                                         const ScalarField& w, const PsiProfile& psi,
                                         const ScalarField& chi, double c);

// --- nonlinear Hodge decomposition -------------------------------------------------

struct HodgeSplit {
    VectorField field;          ///< ∇p / (δ² + |∇p|² + |∇q|²)^{2ε}
    ScalarField phi;            ///< zero-mean solution of Δ²φ = Δ div(field) (discrete symbols)
    VectorField potential_grad; ///< ∇φ (discrete Helmholtz projection)
    VectorField h;              ///< field − ∇φ
    double delta = 0.0, eps = 0.0;
};

/// Requires 0 < ε ≤ 1/8 and 0 < δ ≤ 1; ε = 0 is accepted as the unweighted limit.
HodgeSplit hodge_decompose(const ScalarField& p, const ScalarField& q, double delta, double eps);

/// ‖h‖_s / (ε (δ^{1−4ε} + ‖∇p‖^{1−4ε}_{4(1−ε)} + ‖∇q‖^{1−4ε}_{4(1−ε)})), s = 4(1−ε)/(1−4ε).
double hodge_ratio(const HodgeSplit& split, const ScalarField& p, const ScalarField& q);

/// Λ = Id − 𝒦 with 𝒦F = ∇(Δ²)⁻¹Δ div F.
VectorField lambda_apply(const VectorField& F);

/// S^x F = ((‖F‖²_r + ‖Q‖²_r)/(δ² + |F|² + |Q|²))^{x/2} F.
VectorField s_power(const VectorField& F, const VectorField& Q, double x, double delta, double r);

struct CommutatorReport {
    std::vector<double> x, ratio;
    double K = 0.0;      ///< fitted bound: max ratio
    double spread = 0.0; ///< max/min ratio
    double r = 0.0, rho = 0.0, delta = 0.0;
};

/// ‖Λ(SˣF) − Sˣ(ΛF)‖_{r/(1−x)} / (|x| (δ² + ‖F‖²_r + ‖Q‖²_r)^{ρ/2} ‖F‖_r^{1−ρ}).
double commutator_ratio(const VectorField& F, const VectorField& Q, double x, double delta, double r,
                        double rho);
/// Ratios over the x-grid (|x| ≤ ρ required).
CommutatorReport commutator_check(const VectorField& F, const VectorField& Q, const std::vector<double>& xs,
                                  double delta, double r, double rho);

} // namespace ldet
