#pragma once
// Variational solvers on the conformally flat torus.
//
// All descent is done in the flat L²(dx) pairing and preconditioned by
// (c(σ + Δ²))⁻¹, c = 2|γ2 + 12γ3|, the Hessian of J at w = 0 on the flat torus.
// Objectives that are concave (γ2, γ3 < 0) are handled by minimizing −F, so
// SolveTrace::energy always records the objective actually being minimized.

#include "ldet/conformal.hpp"

#include "json.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ldet {

enum class SolverMethod { preconditioned_gradient, lbfgs, damped_newton };
SolverMethod solver_method_from_name(std::string_view name);
std::string to_string(SolverMethod m);

struct SolverConfig {
    SolverMethod method = SolverMethod::lbfgs;
    int max_iters = 500;
    double grad_tol = 1e-8;      ///< relative; also the EL tolerance ‖𝒩(w)+U‖∞ / ‖U‖∞
    double sigma = 1e-2;         ///< preconditioner regularization
    double armijo = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 40;
    int memory = 8;              ///< L-BFGS pairs
    int cg_max_iters = 200;      ///< inner PCG (Newton)
    double cg_tol = 1e-2;        ///< inner PCG forcing term cap
    void validate() const;
};

struct SolveTrace {
    std::string method;
    std::string status; ///< "converged", "max_iters", "line_search_failed", "trivial"
    std::vector<double> energy, grad_norm, step;
    double final_residual = 0.0;
    double wall_time = 0.0;
    int iterations = 0;
    bool converged = false;

    std::string to_csv() const;
    nlohmann::json summary() const;
};

struct SolveResult {
    ScalarField w;
    SolveTrace trace;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, SolveTrace t) : std::runtime_error(what), trace(std::move(t)) {}
    SolveTrace trace;
};

/// Σ βᵢ ρ_s(· − pᵢ) with ρ_s the periodized Gaussian of width s, normalized so
/// that its discrete integral is exactly 1.
struct MeasureApprox {
    std::vector<Vec4> points;
    std::vector<double> masses;
    double width = 0.1;

    double total_mass() const;
    /// Throws unless Σβᵢ equals `total_U` (the balance condition) and width > 0.
    void validate(double total_U = 0.0, double tol = 1e-10) const;
    /// The smooth density with respect to dv_g (so ∫ f dv_g = Σβᵢ).
    ScalarField density(const ConformalMetric& m) const;
};

/// Guard for the γ-regime: γ2 and γ3 of one sign with γ2/γ3 > 3/2, or γ3 = 0, γ2 ≠ 0.
/// Returns the sign of the objective that is minimized.
double objective_sign(const GammaWeights& gamma);

/// argmin of ±F_ε over dv_g-mean-zero fields, started from w_init.
SolveResult minimize_F_eps(const GammaWeights& gamma, const ConformalMetric& m, double eps,
                           const ScalarField& w_init, const SolverConfig& cfg = {});

/// Same with an additional uniform curvature mass (see eval_F_with_mass).
SolveResult minimize_F_with_mass(const GammaWeights& gamma, const ConformalMetric& m, double total_mass,
                                 const ScalarField& w_init, const SolverConfig& cfg = {});

/// Minimizes J(w) − 4∫ f w dv_g, i.e. solves 𝒩(w) = f; f (density w.r.t. dv_g)
/// must have zero dv_g-integral. final_residual is ‖𝒩(w) − f‖ in the
/// (σ+Δ²)^{-1/2} dual norm relative to that of f.
SolveResult solve_N_equals_f(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& f,
                             const SolverConfig& cfg = {});
/// 𝒩(w) = f_n − U_g for mollified Dirac data f_n.
SolveResult solve_N_equals_f(const GammaWeights& gamma, const ConformalMetric& m, const MeasureApprox& f,
                             const SolverConfig& cfg = {});

/// Damped Newton for 𝒩(w) + U = μ e^{4w}, μ = −κ_A/∫e^{4w} (zero on the torus).
/// The residual drops the modes of e^{4φ}(𝒩 + U) with a Nyquist component
/// (outside the range of the discrete operator). Throws SolverError on non-convergence.
SolveResult solve_EL(const GammaWeights& gamma, const ConformalMetric& m, const SolverConfig& cfg = {},
                     const ScalarField* w_init = nullptr);

/// Pointwise EL residual 𝒩(w) + U − μ e^{4w}.
ScalarField el_residual(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w);

/// Flat-L² gradient of F_ε (and of the mass term, if nonzero).
ScalarField gradient_F_eps(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                           double eps, double total_mass = 0.0);

} // namespace ldet
