#pragma once
// Conformally flat metrics g = e^{2φ0}δ on T^4: curvature, Paneitz operator,
// Q- and U-curvature, and the (γ1, γ2, γ3) weights of the log-determinant
// functional.
//
// Coordinate conventions: gradients are carried as covectors (flat partial
// derivatives ∂_i f); metric contractions insert g^{ij} = e^{−2φ0}δ^{ij}.
// Divergence-form operators are used throughout so that the discrete
// operators are exactly self-adjoint for the weighted sum Σ f h e^{4φ0}.

#include "ldet/field4.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace ldet {

class ConformalMetric;

struct GammaWeights {
    double g1 = 0.0, g2 = 0.0, g3 = 0.0;
    std::string preset; ///< empty for custom triples

    bool has_beta() const { return g3 != 0.0; }
    /// β = γ2/γ3; throws when γ3 = 0.
    double beta_ratio() const;
    /// (24 + β − √(576 + β²))/2: the smallest eigenvalue of the form
    /// βa² + 12(a+b)² in (a, b).
    double coercivity_constant() const;
    /// γ2/γ3 ≥ 6: the regime where the α↦β cubic is monotone.
    bool monotone_regime() const { return has_beta() && beta_ratio() >= 6.0; }
    /// False for triples with β < 0 (e.g. the Paneitz preset).
    bool supported() const { return has_beta() && beta_ratio() > 0.0; }
    /// η = |γ2 − 6γ3| sup (|R| + |Ric|) against a metric.
    double eta(const ConformalMetric& m) const;
};

GammaWeights operator+(const GammaWeights& a, const GammaWeights& b);
GammaWeights gamma_triple(double g1, double g2, double g3);
/// conformal_laplacian, dirac_squared, paneitz.
GammaWeights gamma_preset(std::string_view name);

struct CurvaturePack {
    ScalarField R;            ///< scalar curvature
    SymTensorField Ric;       ///< coordinate components Ric_ij
    ScalarField Q;            ///< Q-curvature, from the transformation law off the flat metric
    ScalarField weyl_sq;      ///< |W|² (identically zero: conformally flat)
    ScalarField laplacian_R;  ///< Δ_g R
    ScalarField ric_norm_sq;  ///< |Ric|²_g
};

class ConformalMetric {
public:
    explicit ConformalMetric(ScalarField phi0);
    static ConformalMetric flat(const Grid4& g);

    const Grid4& grid() const { return phi0_.grid(); }
    const ScalarField& phi0() const { return phi0_; }
    bool is_flat() const { return flat_; }

    const Eigen::ArrayXd& e2() const { return e2_; }     ///< e^{2φ0}
    const Eigen::ArrayXd& em2() const { return em2_; }   ///< e^{−2φ0}
    const Eigen::ArrayXd& em4() const { return em4_; }   ///< e^{−4φ0}
    const ScalarField& density() const { return dens_; } ///< e^{4φ0} (dv_g / dx)
    double volume() const;

    const VectorField& dphi() const;
    const CurvaturePack& curvature() const;

    /// g̃ = e^{2w} g.
    ConformalMetric conformal(const ScalarField& w) const;

private:
    struct Cache {
        std::once_flag grad_once, curv_once;
        VectorField dphi;
        CurvaturePack pack;
    };
    ScalarField phi0_;
    bool flat_ = true;
    Eigen::ArrayXd e2_, em2_, em4_;
    ScalarField dens_;
    std::shared_ptr<Cache> cache_;
};

// --- metric calculus -------------------------------------------------------------

double integrate(const ConformalMetric& m, const ScalarField& f);           ///< ∫ f dv_g
double integrate(const ConformalMetric& m, const Eigen::ArrayXd& f);        ///< ∫ f dv_g
double mean(const ConformalMetric& m, const ScalarField& f);                ///< ⨍ f dv_g
ScalarField laplace(const ConformalMetric& m, const ScalarField& f);        ///< Δ_g f
ScalarField laplace(const ConformalMetric& m, const VectorField& df);       ///< Δ_g from ∂f
Eigen::ArrayXd inner(const ConformalMetric& m, const VectorField& a, const VectorField& b); ///< ⟨a,b⟩_g
/// div_g of a covector field X: e^{−4φ}∂_i(e^{2φ}X_i).
ScalarField divergence(const ConformalMetric& m, const VectorField& X);
/// Covariant Hessian ∇²_g f (coordinate components), from ∂f and ∂∂f.
SymTensorField hessian(const ConformalMetric& m, const VectorField& df, const SymTensorField& ddf);
SymTensorField hessian(const ConformalMetric& m, const ScalarField& f);
/// ⟨A, B⟩_g = e^{−4φ} Σ A_ij B_ij.
Eigen::ArrayXd tensor_inner(const ConformalMetric& m, const SymTensorField& A, const SymTensorField& B);
/// Ric(a♯, b♯) = e^{−4φ} Ric_ij a_i b_j for covectors a, b.
Eigen::ArrayXd ricci_form(const ConformalMetric& m, const VectorField& a, const VectorField& b);
/// The covector Ric(·, a♯)_i = e^{−2φ} Ric_ij a_j.
VectorField ricci_covector(const ConformalMetric& m, const VectorField& a);
VectorField scale(const VectorField& X, const Eigen::ArrayXd& s);

// --- curvature --------------------------------------------------------------------

CurvaturePack curvature_suite(const ConformalMetric& m);
/// Second route: Q = (1/12)(−Δ_g R + R² − 3|Ric|²_g).
ScalarField q_curvature_from_ricci(const ConformalMetric& m);
/// P_g ψ = Δ_g²ψ − div_g(⅔ R ∇ψ − 2 Ric(·,∇ψ)).
ScalarField paneitz_apply(const ConformalMetric& m, const ScalarField& psi);
/// U = γ1|W|² + γ2 Q − γ3 Δ_g R.
ScalarField u_curvature(const ConformalMetric& m, const GammaWeights& gamma);
/// κ_A = −γ1 ∫|W|² − γ2 ∫Q.
double kappa_A(const ConformalMetric& m, const GammaWeights& gamma);

/// Writes `<stem>.ldf` (φ0 container) and `<stem>.json` (grid + preset).
void write_metric(const std::string& stem, const ConformalMetric& m, const std::string& preset = "");
ConformalMetric read_metric(const std::string& stem, std::string* preset = nullptr);

} // namespace ldet
