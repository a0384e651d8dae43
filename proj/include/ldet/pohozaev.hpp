#pragma once
// Pohozaev boundary functionals on Euclidean balls and annuli.
//
// For X = x·∇u (dilation about the centre) or X = a·∇u (translation), the flat
// operator satisfies ∫_Ω 𝒩(u) X dx = B(u, Ω) with B a sum of three boundary
// groups. Inputs are analytic jets; no grid derivatives are used on ∂Ω.

#include "ldet/singular.hpp"

#include "json.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ldet {

/// 2π²[9γ3α⁴ + 24γ3α³ + (γ2+12γ3)α²]: minus the dilation boundary value of α log r.
template <class Scalar>
Scalar pohozaev_quartic(Scalar alpha, double g2, double g3)
{
    constexpr double two_pi2 = 19.739208802178716; // 2π²
    return two_pi2 * alpha * alpha * ((g2 + 12.0 * g3) + alpha * (24.0 * g3 + alpha * (9.0 * g3)));
}

/// Flat 𝒩(u) at a point from its jet.
double flat_N(const Jet& j, const GammaWeights& gamma);

// --- analytic jet providers -------------------------------------------------------

struct PlaneWave {
    Vec4 k = Vec4::Zero();
    double amplitude = 0.0, phase = 0.0; ///< a cos(k·x + phase)
};
JetFn plane_wave_sum(std::vector<PlaneWave> waves);
/// `count` waves with integer wave vectors, |k_a| ≤ kmax, amplitudes ~ amp·N(0,1).
std::vector<PlaneWave> random_plane_waves(int count, int kmax, double amp, std::uint64_t seed);
/// a exp(−|x − c|²/(2s²)).
JetFn gaussian_bump(double amplitude, const Vec4& center, double width);
JetFn jet_sum(JetFn a, JetFn b);

// --- domains and boundary terms ---------------------------------------------------

struct PohozaevDomain {
    Vec4 center = Vec4::Zero();
    double radius = 1.0;
    double inner = 0.0;          ///< > 0 for an annulus
    std::optional<Vec4> shift;   ///< set: translation variant X = a·∇u
    void validate() const;
    nlohmann::json to_json() const;
};

struct PohozaevQuadrature {
    int nt = 16, ns = 16, nphi = 32; ///< sphere rule
    int nr = 32;                     ///< Gauss–Legendre points in r
};

/// The three groups of B (each already multiplied by its γ-weight).
struct BoundaryGroups {
    double biharmonic = 0.0; ///< (γ2/2 + 6γ3)∮(X∂νΔu − Δu∂νX + ½(Δu)² V·ν)
    double quartic = 0.0;    ///< −12γ3∮(|∇u|²∂νu X − ¼|∇u|⁴ V·ν)
    double mixed = 0.0;      ///< 6γ3∮(X(∂ν|∇u|² − 2Δu∂νu) + |∇u|²(V·ν Δu − c∂νu − ∇²u[V,ν]))
    double total() const { return biharmonic + quartic + mixed; }
};
/// V = x − centre (dilation, c = 1) or V = a (translation, c = 0). Annuli
/// contribute the outer sphere minus the inner one.
BoundaryGroups boundary_groups(const JetFn& u, const GammaWeights& gamma, const PohozaevDomain& omega,
                               const PohozaevQuadrature& q = {});
double boundary_term(const JetFn& u, const GammaWeights& gamma, const PohozaevDomain& omega,
                     const PohozaevQuadrature& q = {});

struct PohozaevReport {
    double boundary_value = 0.0;
    BoundaryGroups groups;
    /// "bulk_exp" (−μ∫e^{4u}, dilation only), "boundary_exp" (μ/4∮e^{4u}V·ν),
    /// "forcing" (∫X f_extra), and the metric-expansion remainder buckets,
    /// which vanish identically for the Euclidean metric.
    std::map<std::string, double> volume_terms;
    double residual = 0.0;
    double scale = 0.0;            ///< max |term|, for relative statements
    double forcing_defect = 0.0;   ///< max |𝒩(u) − μe^{4u} − f_extra| / scale at the nodes
    PohozaevDomain domain;
    double relative_residual() const { return scale > 0.0 ? std::abs(residual) / scale : std::abs(residual); }
    nlohmann::json to_json() const;
};

/// Residual of ∫_Ω 𝒩(u) X = B for u solving 𝒩(u) = μe^{4u} + f_extra on Ω.
/// Throws std::invalid_argument if the forcing is inconsistent (relative defect
/// above `consistency_tol`).
PohozaevReport pohozaev_residual(const JetFn& u, double mu, const std::function<double(const Vec4&)>& f_extra,
                                 const GammaWeights& gamma, const PohozaevDomain& omega,
                                 const PohozaevQuadrature& q = {}, double consistency_tol = 1e-8);

/// Real roots of Σ cᵢ xⁱ (ascending coefficients) via the companion matrix and Newton polishing.
std::vector<double> real_polynomial_roots(std::vector<double> ascending);

struct QuantizationReport {
    double beta_star = 0.0;                  ///< 8π²γ2
    std::vector<double> cubic_roots;         ///< α with cubic(α) = β*
    std::vector<double> quartic_roots;       ///< α with quartic(α) = β*
    std::vector<double> common_nonzero;      ///< real α ≠ 0 with cubic(α) = quartic(α)
    bool unique_minus_two = false;
    nlohmann::json to_json() const;
};
/// Requires γ2/γ3 ≥ 6.
QuantizationReport quantization_consistency(const GammaWeights& gamma);

} // namespace ldet
