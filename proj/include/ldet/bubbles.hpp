#pragma once
// Standard bubbles φ_{λ,σ} = ¼ log Σ tᵢ Fᵢ⁴, Fᵢ = 2λ/(1 + λ²χ_δ(d(·, xᵢ))²), their
// energy growth in λ, concentration diagnostics and improved Moser–Trudinger scans.

#include "ldet/functionals.hpp"

#include "json.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ldet {

/// t on [0, δ], 2δ on [2δ, ∞), quintic smoothstep blend t + S((t−δ)/δ)(2δ − t)
/// in between (C², non-decreasing, values in [δ, 2δ]).
double chi_delta(double t, double delta);
/// d^k χ_δ / dt^k for k = 0, 1, 2.
double chi_delta_derivative(double t, double delta, int order);

struct BubbleAtom {
    double t = 1.0; ///< mass, > 0
    Vec4 x = Vec4::Zero();
};

struct BubbleSpec {
    std::vector<BubbleAtom> sigma;
    double lambda = 1.0;
    double delta = 0.5;
    bool relax_separation = false; ///< skip the > 4δ pairwise separation check

    int k() const { return int(sigma.size()); }
    double regime() const { return lambda * delta; } ///< λδ; ≫ 1 is the clean regime
    /// Σtᵢ = 1 (to 1e-12), tᵢ > 0, δ ∈ (0, L/8), periodic separation > 4δ.
    void validate(double L) const;
    bool separated(double L) const;
    BubbleSpec with_lambda(double lambda) const;
    nlohmann::json to_json() const;

    /// k points with equal masses 1/k.
    static BubbleSpec equal_masses(std::vector<Vec4> points, double lambda, double delta);
};

/// log F(2δ): the value of φ_{λ,σ} outside ∪ B_{2δ}(xᵢ).
double bubble_plateau(const BubbleSpec& spec);

/// φ, ∇φ and Δφ at y from the sum-of-kernels chain rule.
struct BubblePoint {
    double u = 0.0;
    Vec4 grad = Vec4::Zero();
    double lap = 0.0;
};
BubblePoint bubble_point(const BubbleSpec& spec, const Vec4& y, double L);

/// φ_{λ,σ} sampled on the grid (exactly the plateau value outside the balls).
ScalarField bubble_field(const BubbleSpec& spec, const Grid4& grid);

/// Radial profile of φ about x_i inside B_{2δ}(xᵢ), valid when the points are separated:
/// the other kernels sit on their plateau there.
struct BubbleRadial {
    double u = 0.0, du = 0.0, d2u = 0.0;
    double lap(double r) const { return d2u + 3.0 * du / r; }
};
BubbleRadial bubble_radial(const BubbleSpec& spec, int i, double r);

// --- energies ---------------------------------------------------------------------

enum class EnergyPath { automatic, analytic, grid };

struct BubbleEnergy {
    double lambda = 0.0;
    double F = 0.0;        ///< F_γ(φ)
    double P_part = 0.0;   ///< γ2 ⟨Pφ, φ⟩
    double III_part = 0.0; ///< γ3 III(φ)
    double deficit = 0.0;  ///< ∫(Δφ)²/(8π²) + 4φ̄ − log ∫e^{4φ}
    double mass_gap = 0.0; ///< log ⨍e^{4φ} − 4φ̄, the factor of the total mass in eval_F_with_mass
    std::string path;      ///< "analytic" or "grid"
};

/// Analytic path: flat torus of side L = m.grid().period(), radial Gauss panels in each
/// ball (there F_γ = γ2∫(Δφ)² + 12γ3∫(Δφ + |∇φ|²)² since the curvature vanishes).
/// Grid path: eval_FA on the sampled field; throws std::invalid_argument when λ exceeds
/// half the Nyquist wavenumber π/h. `automatic` picks analytic for the flat metric.
BubbleEnergy bubble_energy(const GammaWeights& gamma, const ConformalMetric& m, const BubbleSpec& spec,
                           EnergyPath path = EnergyPath::automatic);

struct EnergyGrowth {
    std::vector<BubbleEnergy> rows;
    double slope = 0.0, intercept = 0.0;    ///< least squares F ≈ slope·log λ + intercept
    double P_slope = 0.0, III_slope = 0.0;
    double expected_slope = 0.0;            ///< 32kπ²γ2
    double min_regime = 0.0;                ///< λ_min δ
    double relative_error() const { return std::abs(slope - expected_slope) / std::abs(expected_slope); }
    double III_ratio() const { return std::abs(III_slope) / std::abs(slope); }
    std::string to_csv() const; ///< lambda,F,P_part,III_part,deficit
    nlohmann::json to_json() const;
};

/// λ-list must be geometric (ratio constant to 1e-9) and span at least two decades.
EnergyGrowth energy_growth(const GammaWeights& gamma, const ConformalMetric& m, const BubbleSpec& spec,
                           const std::vector<double>& lambdas, EnergyPath path = EnergyPath::automatic);

/// ∫_{B_{2δ}(xᵢ)} e^{4φ} / ∫ e^{4φ} on the flat torus of side L (analytic radial quadrature).
std::vector<double> volume_fractions(const BubbleSpec& spec, double L);

// --- concentration distance ---------------------------------------------------------

struct ConcentrationOptions {
    int kmax = 1;             ///< dictionary: cos/sin(κ·x)/(1 + |κ|), 0 < |m|∞ ≤ kmax, κ = 2πm/L
    double mollifier = 0.0;   ///< Gaussian width for the maxima search; 0 → 2h
    int search = 32;          ///< lattice points per axis of the exhaustive j = 1 search
    int polish_iterations = 400;
};

struct ConcentrationResult {
    double value = 0.0;  ///< dictionary sup at the best candidate σ
    double upper = 0.0;  ///< transport cost to the Voronoi-weighted candidate (bounds d from above)
    double lower = 0.0;  ///< certified lower bound (exhaustive search, j = 1 only; else 0)
    bool lower_certified = false;
    std::vector<BubbleAtom> sigma;
    nlohmann::json to_json() const;
};

/// Surrogate for inf_{σ ∈ M_j} sup_{‖ψ‖_{C¹} ≤ 1} |∫ψ f − ∫ψ dσ| with ‖ψ‖_{C¹} = sup|ψ| + sup|∇ψ|.
/// f is sampled as the discrete measure f h⁴ on the grid. Throws for j ≤ 0, negative
/// samples or ∫f ≠ 1 (to 1e-8).
ConcentrationResult concentration_distance(const ScalarField& f, int j, const ConcentrationOptions& opt = {});

/// e^{4w} / ∫ e^{4w} (flat measure).
ScalarField normalized_exp4(const ScalarField& w);

// --- improved Moser–Trudinger scans ------------------------------------------------------

using Region = std::function<bool(const Vec4&)>;

struct MTRow {
    double log_exp = 0.0;       ///< log ∫ e^{4(w − w̄)} dv_g
    double paneitz = 0.0;       ///< ⟨w, P_g w⟩
    double III = 0.0;
    double lhs = 0.0, rhs = 0.0; ///< 8(ℓ+1)π² log_exp and ⟨w,Pw⟩ + (γ3/γ2) III
    double gap = 0.0;           ///< lhs − (1 + ε̃) rhs
    std::vector<double> fractions; ///< ∫_{Ωᵢ} e^{4w} / ∫ e^{4w}
    bool included = true;
};

struct ImprovedMTReport {
    int regions = 0; ///< ℓ + 1
    double gamma0 = 0.0, eps_tilde = 0.0;
    std::vector<MTRow> rows;
    int excluded = 0;
    double empirical_C = 0.0; ///< max gap over included members (NaN if none)
    nlohmann::json to_json() const;
};

/// Members whose mass fractions fall below γ0 in some region are excluded (and
/// counted), never silently dropped. Regions must be pairwise disjoint on the grid.
ImprovedMTReport improved_mt_check(const GammaWeights& gamma, const ConformalMetric& m,
                                   const std::vector<ScalarField>& family, const std::vector<Region>& partition,
                                   double gamma0, double eps_tilde);

} // namespace ldet
