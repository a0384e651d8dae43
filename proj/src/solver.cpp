#include "ldet/solver.hpp"
#include "ldet/functionals.hpp"
#include "ldet/nonlin_op.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <numbers>
#include <sstream>

namespace ldet {

SolverMethod solver_method_from_name(std::string_view name)
{
    if (name == "preconditioned_gradient")
        return SolverMethod::preconditioned_gradient;
    if (name == "lbfgs")
        return SolverMethod::lbfgs;
    if (name == "damped_newton")
        return SolverMethod::damped_newton;
    throw std::invalid_argument("unknown solver method '" + std::string(name) + "'");
}

std::string to_string(SolverMethod m)
{
    switch (m) {
    case SolverMethod::preconditioned_gradient: return "preconditioned_gradient";
    case SolverMethod::lbfgs: return "lbfgs";
    case SolverMethod::damped_newton: return "damped_newton";
    }
    return "?";
}

void SolverConfig::validate() const
{
    if (!(grad_tol > 0.0))
        throw std::invalid_argument("SolverConfig: grad_tol must be positive");
    if (!(sigma > 0.0))
        throw std::invalid_argument("SolverConfig: sigma must be positive");
    if (max_iters < 0 || max_backtracks < 1 || memory < 1 || cg_max_iters < 1)
        throw std::invalid_argument("SolverConfig: iteration limits must be positive");
    if (!(armijo > 0.0 && armijo < 0.5) || !(backtrack > 0.0 && backtrack < 1.0))
        throw std::invalid_argument("SolverConfig: bad line-search parameters");
    if (!(cg_tol > 0.0 && cg_tol < 1.0))
        throw std::invalid_argument("SolverConfig: cg_tol must lie in (0,1)");
}

std::string SolveTrace::to_csv() const
{
    std::ostringstream os;
    os.precision(17);
    os << "iter,energy,grad_norm,step\n";
    for (std::size_t i = 0; i < energy.size(); ++i)
        os << i << ',' << energy[i] << ',' << grad_norm[i] << ',' << (i < step.size() ? step[i] : 0.0) << '\n';
    return os.str();
}

nlohmann::json SolveTrace::summary() const
{
    return {{"method", method},
            {"status", status},
            {"iterations", iterations},
            {"converged", converged},
            {"final_residual", final_residual},
            {"final_energy", energy.empty() ? 0.0 : energy.back()},
            {"final_grad_norm", grad_norm.empty() ? 0.0 : grad_norm.back()},
            {"wall_time", wall_time}};
}

// --- measures ------------------------------------------------------------------------

double MeasureApprox::total_mass() const
{
    double s = 0.0;
    for (double b : masses)
        s += b;
    return s;
}

void MeasureApprox::validate(double total_U, double tol) const
{
    if (points.size() != masses.size() || points.empty())
        throw std::invalid_argument("MeasureApprox: need one mass per point");
    if (!(width > 0.0))
        throw std::invalid_argument("MeasureApprox: width must be positive");
    double scale = std::abs(total_U);
    for (double b : masses)
        scale = std::max(scale, std::abs(b));
    if (std::abs(total_mass() - total_U) > tol * std::max(scale, 1.0))
        throw std::invalid_argument("MeasureApprox: masses violate the balance condition");
}

ScalarField MeasureApprox::density(const ConformalMetric& m) const
{
    const Grid4& g = m.grid();
    const int n = g.n();
    const double L = g.period(), h = g.spacing();
    const int images = 1 + int(std::ceil(8.0 * width / L));
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(g.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        // separable periodized Gaussian, normalized per axis on the grid
        std::array<std::vector<double>, 4> axis;
        for (int a = 0; a < 4; ++a) {
            axis[a].assign(n, 0.0);
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                double v = 0.0;
                for (int j = -images; j <= images; ++j) {
                    const double d = i * h - points[k][a] + j * L;
                    v += std::exp(-d * d / (2.0 * width * width));
                }
                axis[a][i] = v;
                sum += v * h;
            }
            for (double& v : axis[a])
                v /= sum;
        }
        for (std::size_t s = 0; s < g.size(); ++s) {
            const auto i = g.unflatten(s);
            out[s] += masses[k] * axis[0][i[0]] * axis[1][i[1]] * axis[2][i[2]] * axis[3][i[3]];
        }
    }
    return ScalarField(g, out * m.em4());
}

// --- objectives ----------------------------------------------------------------------

double objective_sign(const GammaWeights& gamma)
{
    if (gamma.g3 == 0.0) {
        if (gamma.g2 == 0.0)
            throw std::domain_error("solver: γ2 = γ3 = 0 gives no principal part");
        return gamma.g2 > 0.0 ? 1.0 : -1.0;
    }
    if (gamma.g2 * gamma.g3 <= 0.0 || gamma.g2 / gamma.g3 <= 1.5)
        throw std::domain_error("solver: coercivity needs γ2/γ3 > 3/2 with γ2, γ3 of one sign");
    return gamma.g2 > 0.0 ? 1.0 : -1.0;
}

ScalarField el_residual(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w)
{
    const double kap = kappa_A(m, gamma);
    Eigen::ArrayXd r = apply_N(gamma, m, w).values() + u_curvature(m, gamma).values();
    if (kap != 0.0) {
        const Eigen::ArrayXd e4 = (4.0 * w.values()).exp();
        r += kap * e4 / integrate(m, e4);
    }
    return ScalarField(w.grid(), r);
}

ScalarField gradient_F_eps(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                           double eps, double total_mass)
{
    Eigen::ArrayXd gd = 4.0 * el_residual(gamma, m, w).values(); // density w.r.t. dv_g
    if (eps != 0.0 || total_mass != 0.0) {
        const double top = w.values().maxCoeff();
        const Eigen::ArrayXd e4 = (4.0 * (w.values() - top)).exp();
        const Eigen::ArrayXd soft = e4 / integrate(m, e4) - 1.0 / m.volume();
        gd += 4.0 * (eps - total_mass) * soft;
    }
    return ScalarField(w.grid(), gd * m.density().values());
}

namespace {

using Clock = std::chrono::steady_clock;

struct Objective {
    std::function<double(const ScalarField&)> value;
    std::function<ScalarField(const ScalarField&)> gradient; ///< flat L²(dx)
    /// value(w + a d) − value(w), free of cancellation against value(w)
    std::function<double(const ScalarField&, const ScalarField&, double)> delta;
    double sign = 1.0;
    double ref_norm = 0.0;    ///< dual norm of the forcing, for relative tolerances
    double hess_scale = 1.0;  ///< c in c(σ + Δ²)
};

double dot(const ScalarField& a, const ScalarField& b) { return (a.values() * b.values()).sum(); }

// (c(σ + Δ²))⁻¹ on the modes the first-derivative symbols can see; the mean
// and every mode with a Nyquist component are frozen (they are invisible to
// ∇ and would otherwise only be reached through aliasing).
ScalarField precondition(const ScalarField& g, double sigma, double c)
{
    const double kn = std::numbers::pi * g.grid().n() / g.grid().period();
    return apply_symbol(g, [sigma, c, kn](const Vec4& k) {
        const double k2 = k.squaredNorm();
        if (k2 == 0.0 || (k.array().abs() >= 0.999 * kn).any())
            return 0.0;
        return 1.0 / (c * (sigma + k2 * k2));
    });
}

// e^{4φ}𝒩(w) is a flat divergence of first-derivative symbols, so it never has
// content on modes with a Nyquist component; that part of e^{4φ}(𝒩 + U) cannot
// be driven to zero and is dropped from the residual.
ScalarField resolved(const ConformalMetric& m, const ScalarField& r)
{
    const Grid4& g = r.grid();
    const double kn = std::numbers::pi * g.n() / g.period();
    const ScalarField dx(g, r.values() * m.density().values());
    const ScalarField p = apply_symbol(dx, [kn](const Vec4& k) { return (k.array().abs() >= 0.999 * kn).any() ? 0.0 : 1.0; });
    return ScalarField(g, p.values() * m.em4());
}

double dual_norm(const ScalarField& g, double sigma)
{
    return std::sqrt(std::max(0.0, dot(g, precondition(g, sigma, 1.0))) / double(g.size()));
}

ScalarField axpy(const ScalarField& x, double a, const ScalarField& d)
{
    return ScalarField(x.grid(), x.values() + a * d.values());
}

SolveResult minimize(const Objective& obj, const ConformalMetric& m, ScalarField w, const SolverConfig& cfg)
{
    cfg.validate();
    const auto t0 = Clock::now();
    SolveResult res;
    SolveTrace& tr = res.trace;
    tr.method = to_string(cfg.method);
    const double s = obj.sign;
    auto E = [&](const ScalarField& x) { return s * obj.value(x); };
    auto G = [&](const ScalarField& x) { return s * obj.gradient(x); };
    auto dE = [&](const ScalarField& x, const ScalarField& d, double a) { return s * obj.delta(x, d, a); };

    w = w + (-mean(m, w));
    double e = E(w);
    ScalarField g = G(w);
    double gn = dual_norm(g, cfg.sigma);
    const double scale = std::max(gn, obj.ref_norm);
    tr.energy.push_back(e);
    tr.grad_norm.push_back(gn);
    tr.step.push_back(0.0);

    struct Pair {
        ScalarField s, y;
        double rho;
    };
    std::deque<Pair> mem;
    tr.status = "max_iters";
    if (scale == 0.0 || gn <= cfg.grad_tol * scale) {
        tr.status = scale == 0.0 ? "trivial" : "converged";
        tr.converged = true;
    }
    for (int it = 0; it < cfg.max_iters && !tr.converged; ++it) {
        ScalarField d;
        if (cfg.method == SolverMethod::lbfgs && !mem.empty()) {
            // two-loop recursion with the spectral preconditioner as H0
            ScalarField q = g;
            std::vector<double> alpha(mem.size());
            for (std::size_t i = mem.size(); i-- > 0;) {
                alpha[i] = mem[i].rho * dot(mem[i].s, q);
                q = axpy(q, -alpha[i], mem[i].y);
            }
            const Pair& last = mem.back();
            const ScalarField Py = precondition(last.y, cfg.sigma, 1.0);
            ScalarField r = (dot(last.s, last.y) / dot(last.y, Py)) * precondition(q, cfg.sigma, 1.0);
            for (std::size_t i = 0; i < mem.size(); ++i) {
                const double b = mem[i].rho * dot(mem[i].y, r);
                r = axpy(r, alpha[i] - b, mem[i].s);
            }
            d = -r;
        } else {
            d = -precondition(g, cfg.sigma, obj.hess_scale);
        }
        double slope = dot(g, d);
        if (!(slope < 0.0)) { // not a descent direction: restart
            mem.clear();
            d = -precondition(g, cfg.sigma, obj.hess_scale);
            slope = dot(g, d);
        }
        // energies are accumulated from exact increments, so the trace stays
        // meaningful when the decrease drops below the round-off of E itself
        double a = 1.0, de = 0.0;
        bool ok = false;
        for (int b = 0; b < cfg.max_backtracks; ++b, a *= cfg.backtrack) {
            de = dE(w, d, a);
            if (std::isfinite(de) && de <= cfg.armijo * a * slope) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            tr.status = "line_search_failed";
            break;
        }
        ScalarField w_new = axpy(w, a, d);
        const double e_new = e + de;
        ScalarField g_new = G(w_new);
        Pair p{axpy(w_new, -1.0, w), axpy(g_new, -1.0, g), 0.0};
        const double sy = dot(p.s, p.y);
        if (sy > 1e-300) {
            p.rho = 1.0 / sy;
            mem.push_back(std::move(p));
            if (int(mem.size()) > cfg.memory)
                mem.pop_front();
        }
        w = std::move(w_new);
        g = std::move(g_new);
        e = e_new;
        gn = dual_norm(g, cfg.sigma);
        tr.energy.push_back(e);
        tr.grad_norm.push_back(gn);
        tr.step.push_back(a);
        tr.iterations = it + 1;
        if (gn <= cfg.grad_tol * scale) {
            tr.status = "converged";
            tr.converged = true;
        }
    }
    res.w = w + (-mean(m, w));
    tr.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

double hessian_scale(const GammaWeights& gamma) { return std::max(2.0 * std::abs(gamma.g2 + 12.0 * gamma.g3), 1e-12); }

SolveResult minimize_functional(const GammaWeights& gamma, const ConformalMetric& m, double eps, double mass,
                                const ScalarField& w_init, const SolverConfig& cfg)
{
    if (eps < 0.0)
        throw std::invalid_argument("minimize_F_eps: eps must be non-negative");
    if (cfg.method == SolverMethod::damped_newton)
        throw std::invalid_argument("minimize_F_eps: damped_newton applies to solve_EL only");
    Objective obj;
    obj.sign = objective_sign(gamma);
    obj.hess_scale = hessian_scale(gamma);
    obj.value = [&](const ScalarField& w) {
        double v = eval_F_eps(gamma, m, w, eps);
        if (mass != 0.0)
            v -= mass * (log_mean_exp4(m, w) - 4.0 * mean(m, w));
        return v;
    };
    obj.gradient = [&](const ScalarField& w) { return gradient_F_eps(gamma, m, w, eps, mass); };
    obj.delta = [&](const ScalarField& w, const ScalarField& d, double a) {
        return eval_F_eps_delta(gamma, m, w, d, a, eps, mass);
    };
    obj.ref_norm = dual_norm(ScalarField(m.grid(), 4.0 * u_curvature(m, gamma).values() * m.density().values()),
                             cfg.sigma);
    SolveResult r = minimize(obj, m, w_init, cfg);
    r.trace.final_residual = el_residual(gamma, m, r.w).max_abs();
    return r;
}

} // namespace

SolveResult minimize_F_eps(const GammaWeights& gamma, const ConformalMetric& m, double eps,
                           const ScalarField& w_init, const SolverConfig& cfg)
{
    return minimize_functional(gamma, m, eps, 0.0, w_init, cfg);
}

SolveResult minimize_F_with_mass(const GammaWeights& gamma, const ConformalMetric& m, double total_mass,
                                 const ScalarField& w_init, const SolverConfig& cfg)
{
    return minimize_functional(gamma, m, 0.0, total_mass, w_init, cfg);
}

SolveResult solve_N_equals_f(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& f,
                             const SolverConfig& cfg)
{
    const double fl1 = integrate(m, Eigen::ArrayXd(f.values().abs()));
    if (std::abs(integrate(m, f)) > 1e-10 * std::max(fl1, 1e-300) && fl1 > 0.0)
        throw std::invalid_argument("solve_N_equals_f: data must have zero mean");
    if (cfg.method == SolverMethod::damped_newton)
        throw std::invalid_argument("solve_N_equals_f: use lbfgs or preconditioned_gradient");
    const ScalarField fdx(f.grid(), f.values() * m.density().values());
    Objective obj;
    obj.sign = objective_sign(gamma);
    obj.hess_scale = hessian_scale(gamma);
    obj.value = [&](const ScalarField& w) { return eval_J(gamma, m, w) - 4.0 * integrate_values(f.grid(), w.values() * fdx.values()); };
    obj.delta = [&](const ScalarField& w, const ScalarField& d, double a) {
        return eval_J_delta(gamma, m, w, d, a) - 4.0 * a * integrate_values(f.grid(), d.values() * fdx.values());
    };
    obj.gradient = [&](const ScalarField& w) {
        return ScalarField(w.grid(), 4.0 * (apply_N(gamma, m, w).values() * m.density().values() - fdx.values()));
    };
    obj.ref_norm = dual_norm(4.0 * fdx, cfg.sigma);
    SolveResult r = minimize(obj, m, ScalarField(f.grid()), cfg);
    const ScalarField res(f.grid(), (apply_N(gamma, m, r.w).values() - f.values()) * m.density().values());
    const double fn = dual_norm(fdx, cfg.sigma);
    r.trace.final_residual = fn > 0.0 ? dual_norm(res, cfg.sigma) / fn : dual_norm(res, cfg.sigma);
    return r;
}

SolveResult solve_N_equals_f(const GammaWeights& gamma, const ConformalMetric& m, const MeasureApprox& f,
                             const SolverConfig& cfg)
{
    const ScalarField U = u_curvature(m, gamma);
    f.validate(integrate(m, U));
    return solve_N_equals_f(gamma, m, f.density(m) - U, cfg);
}

SolveResult solve_EL(const GammaWeights& gamma, const ConformalMetric& m, const SolverConfig& cfg,
                     const ScalarField* w_init)
{
    cfg.validate();
    const auto t0 = Clock::now();
    const double s = objective_sign(gamma);
    const Grid4& g = m.grid();
    const Eigen::ArrayXd& dens = m.density().values();
    const double c = hessian_scale(gamma);
    const double unorm = u_curvature(m, gamma).max_abs();

    SolveResult res;
    SolveTrace& tr = res.trace;
    tr.method = "damped_newton";
    ScalarField w = w_init ? *w_init + (-mean(m, *w_init)) : ScalarField(g);
    ScalarField R = resolved(m, el_residual(gamma, m, w));
    auto merit = [&](const ScalarField& r) { return integrate(m, Eigen::ArrayXd(r.values().square())); };
    double phi = merit(R);
    const double r0 = std::sqrt(phi);
    tr.energy.push_back(phi);
    tr.grad_norm.push_back(R.max_abs());
    tr.step.push_back(0.0);
    tr.status = "max_iters";
    auto done = [&] { return R.max_abs() <= cfg.grad_tol * unorm; };
    if (unorm == 0.0 || done()) {
        tr.converged = true;
        tr.status = unorm == 0.0 ? "trivial" : "converged";
    }

    for (int it = 0; it < cfg.max_iters && !tr.converged; ++it) {
        // PCG on s·e^{4φ}L_w v = −s·e^{4φ}R (symmetric in the flat pairing)
        auto A = [&](const ScalarField& v) {
            return ScalarField(g, s * linearized_N(gamma, m, w, v).values() * dens);
        };
        ScalarField b(g, -s * R.values() * dens);
        b = b + (-b.mean());
        const double bn = std::sqrt(dot(b, b));
        const double forcing = std::min(cfg.cg_tol, std::sqrt(phi) / std::max(r0, 1e-300));
        ScalarField x(g), r = b, z = precondition(r, cfg.sigma, c), p = z;
        double rz = dot(r, z);
        for (int k = 0; k < cfg.cg_max_iters; ++k) {
            const ScalarField Ap = A(p);
            const double pAp = dot(p, Ap);
            if (!(pAp > 0.0)) {
                if (k == 0)
                    x = p; // negative curvature at the start: fall back to the preconditioned residual
                break;
            }
            const double al = rz / pAp;
            x = axpy(x, al, p);
            r = axpy(r, -al, Ap);
            if (std::sqrt(dot(r, r)) <= forcing * bn)
                break;
            z = precondition(r, cfg.sigma, c);
            const double rz_new = dot(r, z);
            p = axpy(z, rz_new / rz, p);
            rz = rz_new;
        }
        double a = 1.0;
        bool ok = false;
        ScalarField w_new, R_new;
        double phi_new = 0.0;
        for (int bt = 0; bt < cfg.max_backtracks; ++bt, a *= cfg.backtrack) {
            w_new = axpy(w, a, x);
            R_new = resolved(m, el_residual(gamma, m, w_new));
            phi_new = merit(R_new);
            if (phi_new <= (1.0 - 2.0 * cfg.armijo * a) * phi) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            tr.status = "line_search_failed";
            break;
        }
        w = std::move(w_new);
        R = std::move(R_new);
        phi = phi_new;
        tr.energy.push_back(phi);
        tr.grad_norm.push_back(R.max_abs());
        tr.step.push_back(a);
        tr.iterations = it + 1;
        if (done()) {
            tr.converged = true;
            tr.status = "converged";
        }
    }
    res.w = w + (-mean(m, w));
    tr.final_residual = unorm > 0.0 ? R.max_abs() / unorm : R.max_abs();
    tr.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!tr.converged)
        throw SolverError("solve_EL: " + tr.status + " after " + std::to_string(tr.iterations) + " iterations", tr);
    return res;
}

} // namespace ldet
