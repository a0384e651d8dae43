#pragma once
// Fundamental-solution machinery: the α↔β cubic, w0 = Σ αᵢ log d̃(·, pᵢ),
// boundary-flux masses, spherical-mean slope fits and blow-up rescaling.

#include "ldet/conformal.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace ldet {

/// β(α) = −4π²[(γ2+12γ3)α + 18γ3α² + 6γ3α³].
template <class Scalar>
Scalar alpha_beta_cubic(Scalar alpha, double g2, double g3)
{
    constexpr double four_pi2 = 39.47841760435743; // 4π²
    return -four_pi2 * alpha * ((g2 + 12.0 * g3) + alpha * (18.0 * g3 + alpha * (6.0 * g3)));
}

/// The same cubic, evaluated about its inflection point α = −1.
double alpha_to_beta(double alpha, const GammaWeights& gamma);
/// dβ/dα; of one sign everywhere iff γ2/γ3 ≥ 6 (for γ3 ≠ 0).
double alpha_to_beta_derivative(double alpha, const GammaWeights& gamma);
/// Unique real root of β(α) = beta by safeguarded Newton in t = α + 1 (the
/// inflection point); requires γ3 ≠ 0 and γ2/γ3 ≥ 6.
double beta_to_alpha(double beta, const GammaWeights& gamma);

/// Smoothed distance: r for r ≥ ρ0, ρ0 P(r/ρ0) inside, P(s) = (5 + 15s² − 5s⁴ + s⁶)/16
/// (even, C³ at s = 1, minimum 5ρ0/16).
double d_tilde(double r, double rho0);
double d_tilde_derivative(double r, double rho0, int order);

/// Point values and derivatives up to Δ² of a function on R⁴.
struct Jet {
    double u = 0.0;
    Vec4 grad = Vec4::Zero();
    Eigen::Matrix4d hess = Eigen::Matrix4d::Zero();
    Vec4 grad_lap = Vec4::Zero();
    double bilap = 0.0;
    double lap() const { return hess.trace(); }
};
using JetFn = std::function<Jet(const Vec4&)>;

/// Jet of a radial function from f, f', f'', f''', f'''' at r = |x| > 0.
Jet radial_jet(const Vec4& x, double f0, double f1, double f2, double f3, double f4);
/// α log|x − center|.
JetFn radial_log(double alpha, const Vec4& center = Vec4::Zero());

struct SingularData {
    std::vector<Vec4> points;
    std::vector<double> alphas, betas;
    double smoothing = 0.1; ///< ρ0 of d̃

    /// Completes α from β (from_betas) or β from α (from_alphas).
    static SingularData from_betas(std::vector<Vec4> points, std::vector<double> betas, const GammaWeights& gamma,
                                   double smoothing);
    static SingularData from_alphas(std::vector<Vec4> points, std::vector<double> alphas, const GammaWeights& gamma,
                                    double smoothing);
    /// Pairs satisfy the cubic to 1e-10 and points are > 4ρ0 apart (periodic distance if L > 0).
    void validate(const GammaWeights& gamma, double L = 0.0) const;
};
nlohmann::json to_json(const SingularData& d);
SingularData singular_data_from_json(const nlohmann::json& j);

/// w0 = Σ αᵢ log d̃(dist(x, pᵢ)) on the torus (periodic distance).
ScalarField build_w0(const SingularData& data, const Grid4& g);
/// α log d̃(r) sampled on `radii` (> 0) as a radial profile.
RadialProfile build_w0_profile(double alpha, double smoothing, const std::vector<double>& radii);

/// ∮_{∂B_ε} ∂ν[(γ2/2 + 6γ3)Δw0 + 6γ3|∇w0|²] − 12γ3(Δw0 + |∇w0|²)∂ν w0 dσ for w0 = α log r.
double flux_beta(double alpha, const GammaWeights& gamma, double eps);
/// Same flux for an arbitrary jet field over ∂B_ε(center).
double flux_of(const JetFn& w, const GammaWeights& gamma, double eps, const Vec4& center = Vec4::Zero());

enum class SlopeBasis {
    log_const,    ///< α log r + c
    log_const_r2, ///< α log r + c + b r²   (smooth background to second order)
    biharmonic,   ///< α log r + c + b r² + a r⁻²   (radial kernel of Δ²)
    quasilinear   ///< biharmonic + e r² log r: the first correction forced by the
                  ///< cubic terms of 𝒩 around α log r + b r²
};

struct SlopeFit {
    double alpha = 0.0;
    Eigen::VectorXd coeffs;            ///< in basis order, α first
    std::vector<double> radii, means, residuals;
    std::vector<double> k1;            ///< r |∂r M(r) − α/r|
    double rms_residual = 0.0;
    std::string to_csv() const;
};

/// Least-squares fit of spherical means M(r) of w around p over a decreasing
/// geometric sequence of radii (≥ 2h, < L/2). Throws on under-resolved radii.
SlopeFit asymptotic_slope(const ScalarField& w, const Vec4& p, const std::vector<double>& radii,
                          SlopeBasis basis = SlopeBasis::quasilinear);
/// Same fit for any function of x (e.g. an analytic model).
SlopeFit asymptotic_slope(const std::function<double(const Vec4&)>& w, const Vec4& p,
                          const std::vector<double>& radii, SlopeBasis basis = SlopeBasis::quasilinear);

/// r0, r0 q, r0 q², … (count terms, q < 1).
std::vector<double> geometric_radii(double r0, double q, int count);

/// u(y) = w(p + r y) + log r, evaluated by spectral interpolation.
class Rescaled {
public:
    Rescaled(const ScalarField& w, const Vec4& p, double r);
    double operator()(const Vec4& y) const;
    std::vector<double> operator()(const std::vector<Vec4>& ys) const;
    double scale() const { return r_; }

private:
    ScalarField w_;
    Vec4 p_;
    double r_;
};
Rescaled rescale(const ScalarField& w, const Vec4& p, double r);
/// u(s) = w(r s) + log r on radii / r.
RadialProfile rescale(const RadialProfile& w, double r);

} // namespace ldet
