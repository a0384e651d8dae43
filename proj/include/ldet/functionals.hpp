#pragma once
// Scalar energies of the log-determinant functional and related diagnostics.
//
// Every integral is taken against dv_g of the supplied metric. The quadratic
// part ∫ w P_g w is evaluated in its integrated-by-parts form
//     ∫ (Δ_g w)² + ⅔ R |∇w|² − 2 Ric(∇w, ∇w) dv_g,
// which equals ∫ w · paneitz_apply(m, w) dv_g to round-off because the discrete
// divergence is the exact adjoint of the discrete gradient.

#include "ldet/conformal.hpp"

#include <map>
#include <string>
#include <vector>

namespace ldet {

struct EnergyBreakdown {
    double I = 0.0, II = 0.0, III = 0.0, F_A = 0.0;
    double mu = 0.0; ///< −κ_A / ∫ e^{4w} dv_g
    /// Per-integral contributions, keyed "I.weyl", "I.log", "II.paneitz",
    /// "II.q_linear", "II.log", "III.quartic", "III.laplacian_R", "III.R_grad".
    std::map<std::string, double> terms;
};

/// log ⨍ e^{4w} dv_g, evaluated stably (shifted by max w).
double log_mean_exp4(const ConformalMetric& m, const ScalarField& w);
/// Δ_g w + |∇w|²_g
ScalarField s_field(const ConformalMetric& m, const ScalarField& w);
/// ∫ w P_g w dv_g.
double paneitz_form(const ConformalMetric& m, const ScalarField& w);

double eval_I(const ConformalMetric& m, const ScalarField& w);
double eval_II(const ConformalMetric& m, const ScalarField& w);
double eval_III(const ConformalMetric& m, const ScalarField& w);
EnergyBreakdown eval_FA(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w);
/// F_γ(w) = γ1 I + γ2 II + γ3 III.
double eval_F(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w);

/// J(w) = γ2∫(Δw)² − 2γ2∫Ric(∇w,∇w) + 12γ3∫(Δw+|∇w|²)² + (2γ2/3 − 4γ3)∫R|∇w|².
double eval_J(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w);

/// J(w + a d) − J(w), evaluated from the polynomial coefficients in a so that
/// small increments do not suffer cancellation against J(w).
double eval_J_delta(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                    const ScalarField& d, double a);
/// log ⨍ e^{4(w + a d)} − log ⨍ e^{4w}, via log1p/expm1.
double log_mean_exp4_delta(const ConformalMetric& m, const ScalarField& w, const ScalarField& d, double a);
/// F_ε(w + a d) − F_ε(w) (T ≠ 0 adds the uniform-mass term of eval_F_with_mass).
double eval_F_eps_delta(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                        const ScalarField& d, double a, double eps, double total_mass = 0.0);

/// F_ε(w) = F_γ(w) + ε log ∫ e^{4(w − w̄)} dv_g, with w̄ the dv_g-mean.
double eval_F_eps(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w, double eps);

/// F_γ for the curvature U_g + T/Vol_g, i.e. with an extra uniform density of
/// total mass T:  F_γ(w) − T log ⨍ e^{4(w − w̄)} dv_g.  On the torus ∫U_g = 0,
/// so this is how super-critical total curvature is modelled.
double eval_F_with_mass(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                        double total_mass);

/// Flat-metric Moser–Trudinger deficit (1/8π²)∫(Δw)² + 4w̄ − log∫e^{4w}.
double mt_deficit(const ScalarField& w);

// --- diagnostic norms --------------------------------------------------------------

struct GrandNormSpec {
    double theta = 1.0; ///< in [2/3, 4/3)
    double q = 2.0;
    double eps0 = 0.05;
    int points = 12;    ///< geometric grid ε0, ε0/2, …
    void validate() const;
    std::vector<double> eps_grid() const;
};

/// ‖F‖_p = (∫ |F|^p dx)^{1/p}; |·| pointwise absolute value / Euclidean length.
double lp_norm(const ScalarField& f, double p);
double lp_norm(const VectorField& f, double p);
double lp_norm_values(const Grid4& g, const Eigen::ArrayXd& abs_values, double p);

/// sup over the ε-grid of ε^{θ/q} ‖F‖_{q(1−ε)} (a lower bound for the continuum sup).
double grand_norm(const ScalarField& f, const GrandNormSpec& spec);
double grand_norm(const VectorField& f, const GrandNormSpec& spec);
/// ‖Δw‖_{θ,2)} + ‖∇w‖_{θ,4)}
double grand_sobolev_norm(const ScalarField& w, double theta, double eps0 = 0.05, int points = 12);

/// (sup over periodic cubes of half-side < L/4 of ⨍ (w − w̄_cube)⁴)^{1/4};
/// cube sides 2h, 4h, … (dyadic), every grid point as a corner.
double bmo_seminorm(const ScalarField& w);
/// ∫ ((Δw)² + |∇w|⁴) / (1 + (w − w̄)²)^{2/3} dx.
double weighted_energy(const ScalarField& w);
/// ∫ over {|w − c| < k} ∩ B_ρ(center) of (Δw)² + |∇w|⁴ (periodic distance).
double caccioppoli_energy(const ScalarField& w, double c, double k, const Vec4& center, double rho);

/// β∫(Δw)² + 12∫(Δw + |∇w|²)² over ∫(Δw)² + |∇w|⁴ on the flat torus.
double coercivity_ratio(const ScalarField& w, double beta);

/// Optimal constant of ‖U‖_k ≤ C(k) ‖∇U‖_{4k/(4+k)} on ℝ⁴ (k > 4/3).
double sobolev_constant(double k);
/// lim C(k)/k^{3/4} = (3/8) π^{−1/2} Γ(15/4)^{−1/4}.
double sobolev_constant_limit();

} // namespace ldet
