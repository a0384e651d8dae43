#include "ldet/functionals.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ldet {

namespace {
Eigen::ArrayXd grad_sq(const ConformalMetric& m, const VectorField& dw) { return inner(m, dw, dw); }
} // namespace

double log_mean_exp4(const ConformalMetric& m, const ScalarField& w)
{
    const double top = 4.0 * w.values().maxCoeff();
    const double s = integrate(m, Eigen::ArrayXd((4.0 * w.values() - top).exp()));
    return std::log(s / m.volume()) + top;
}

ScalarField s_field(const ConformalMetric& m, const ScalarField& w)
{
    const VectorField dw = gradient(w);
    return ScalarField(w.grid(), laplace(m, w).values() + grad_sq(m, dw));
}

double paneitz_form(const ConformalMetric& m, const ScalarField& w)
{
    const VectorField dw = gradient(w);
    const ScalarField lw = m.is_flat() ? laplacian(w) : laplace(m, dw);
    double v = integrate(m, Eigen::ArrayXd(lw.values().square()));
    if (!m.is_flat()) {
        const CurvaturePack& c = m.curvature();
        v += integrate(m, Eigen::ArrayXd((2.0 / 3.0) * c.R.values() * grad_sq(m, dw)
                                         - 2.0 * ricci_form(m, dw, dw)));
    }
    return v;
}

EnergyBreakdown eval_FA(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w)
{
    const CurvaturePack& c = m.curvature();
    const double lme = log_mean_exp4(m, w);
    EnergyBreakdown e;
    auto& t = e.terms;

    t["I.weyl"] = 4.0 * integrate(m, w * c.weyl_sq);
    t["I.log"] = -integrate(m, c.weyl_sq) * lme;
    e.I = t["I.weyl"] + t["I.log"];

    t["II.paneitz"] = paneitz_form(m, w);
    t["II.q_linear"] = 4.0 * integrate(m, c.Q * w);
    t["II.log"] = -integrate(m, c.Q) * lme;
    e.II = t["II.paneitz"] + t["II.q_linear"] + t["II.log"];

    const VectorField dw = gradient(w);
    const Eigen::ArrayXd g2 = grad_sq(m, dw);
    const ScalarField lw = m.is_flat() ? laplacian(w) : laplace(m, dw);
    t["III.quartic"] = 12.0 * integrate(m, Eigen::ArrayXd((lw.values() + g2).square()));
    t["III.laplacian_R"] = -4.0 * integrate(m, w * c.laplacian_R);
    t["III.R_grad"] = -4.0 * integrate(m, Eigen::ArrayXd(c.R.values() * g2));
    e.III = t["III.quartic"] + t["III.laplacian_R"] + t["III.R_grad"];

    e.F_A = gamma.g1 * e.I + gamma.g2 * e.II + gamma.g3 * e.III;
    e.mu = -kappa_A(m, gamma) / integrate(m, Eigen::ArrayXd((4.0 * w.values()).exp()));
    return e;
}

double eval_I(const ConformalMetric& m, const ScalarField& w) { return eval_FA(gamma_triple(1, 0, 0), m, w).I; }
double eval_II(const ConformalMetric& m, const ScalarField& w) { return eval_FA(gamma_triple(0, 1, 0), m, w).II; }
double eval_III(const ConformalMetric& m, const ScalarField& w) { return eval_FA(gamma_triple(0, 0, 1), m, w).III; }

double eval_F(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w)
{
    return eval_FA(gamma, m, w).F_A;
}

double eval_J(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w)
{
    const VectorField dw = gradient(w);
    const Eigen::ArrayXd g2 = grad_sq(m, dw);
    const ScalarField lw = m.is_flat() ? laplacian(w) : laplace(m, dw);
    Eigen::ArrayXd dens = gamma.g2 * lw.values().square() + 12.0 * gamma.g3 * (lw.values() + g2).square();
    if (!m.is_flat()) {
        const CurvaturePack& c = m.curvature();
        dens += -2.0 * gamma.g2 * ricci_form(m, dw, dw)
              + (2.0 * gamma.g2 / 3.0 - 4.0 * gamma.g3) * c.R.values() * g2;
    }
    return integrate(m, dens);
}

double eval_J_delta(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                    const ScalarField& d, double a)
{
    const VectorField dw = gradient(w), dd = gradient(d);
    const Eigen::ArrayXd a0 = (m.is_flat() ? laplacian(w) : laplace(m, dw)).values();
    const Eigen::ArrayXd a1 = (m.is_flat() ? laplacian(d) : laplace(m, dd)).values();
    const Eigen::ArrayXd b1 = 2.0 * inner(m, dw, dd), b2 = inner(m, dd, dd);
    // S(a) = s0 + a s1 + a² s2
    const Eigen::ArrayXd s0 = a0 + grad_sq(m, dw), s1 = a1 + b1, s2 = b2;
    const Eigen::ArrayXd dS2 = a * (2.0 * s0 * s1 + a * (s1.square() + 2.0 * s0 * s2 + a * (2.0 * s1 * s2 + a * s2.square())));
    Eigen::ArrayXd dens = gamma.g2 * a * (2.0 * a0 * a1 + a * a1.square()) + 12.0 * gamma.g3 * dS2;
    if (!m.is_flat()) {
        const CurvaturePack& c = m.curvature();
        dens += -2.0 * gamma.g2 * a * (2.0 * ricci_form(m, dw, dd) + a * ricci_form(m, dd, dd))
              + (2.0 * gamma.g2 / 3.0 - 4.0 * gamma.g3) * c.R.values() * a * (b1 + a * b2);
    }
    return integrate(m, dens);
}

double log_mean_exp4_delta(const ConformalMetric& m, const ScalarField& w, const ScalarField& d, double a)
{
    const Eigen::ArrayXd e4 = (4.0 * (w.values() - w.values().maxCoeff())).exp();
    const Eigen::ArrayXd x = 4.0 * a * d.values();
    const Eigen::ArrayXd em1 = x.unaryExpr([](double v) { return std::expm1(v); });
    return std::log1p(integrate(m, Eigen::ArrayXd(e4 * em1)) / integrate(m, e4));
}

double eval_F_eps_delta(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                        const ScalarField& d, double a, double eps, double total_mass)
{
    // F = J + 4∫U w + κ_A log ⨍ e^{4w}
    const double dl = log_mean_exp4_delta(m, w, d, a);
    const double dmean = a * mean(m, d);
    double v = eval_J_delta(gamma, m, w, d, a) + 4.0 * a * integrate(m, u_curvature(m, gamma) * d)
             + kappa_A(m, gamma) * dl;
    v += (eps - total_mass) * (dl - 4.0 * dmean);
    return v;
}

double eval_F_eps(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w, double eps)
{
    if (eps < 0.0)
        throw std::invalid_argument("eval_F_eps: eps must be non-negative");
    const double F = eval_F(gamma, m, w);
    if (eps == 0.0)
        return F;
    // log ∫ e^{4(w − w̄)} = log Vol + log ⨍ e^{4w} − 4 w̄
    return F + eps * (std::log(m.volume()) + log_mean_exp4(m, w) - 4.0 * mean(m, w));
}

double eval_F_with_mass(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                        double total_mass)
{
    return eval_F(gamma, m, w) - total_mass * (log_mean_exp4(m, w) - 4.0 * mean(m, w));
}

double mt_deficit(const ScalarField& w)
{
    const double top = 4.0 * w.values().maxCoeff();
    const double lse = std::log(integrate_values(w.grid(), (4.0 * w.values() - top).exp())) + top;
    const double dirichlet = integrate_values(w.grid(), laplacian(w).values().square());
    return dirichlet / (8.0 * std::numbers::pi * std::numbers::pi) + 4.0 * w.mean() - lse;
}

// --- diagnostic norms -------------------------------------------------------------

void GrandNormSpec::validate() const
{
    if (!(theta >= 2.0 / 3.0 && theta < 4.0 / 3.0))
        throw std::invalid_argument("GrandNormSpec: theta outside [2/3, 4/3)");
    if (!(q > 1.0) || !(eps0 > 0.0 && eps0 < 1.0) || points < 1)
        throw std::invalid_argument("GrandNormSpec: bad q, eps0 or grid size");
}

std::vector<double> GrandNormSpec::eps_grid() const
{
    std::vector<double> e;
    for (int i = 0; i < points; ++i)
        e.push_back(eps0 * std::ldexp(1.0, -i));
    return e;
}

double lp_norm_values(const Grid4& g, const Eigen::ArrayXd& a, double p)
{
    const double top = a.maxCoeff();
    if (top == 0.0)
        return 0.0;
    return top * std::pow(integrate_values(g, (a / top).pow(p)), 1.0 / p);
}

double lp_norm(const ScalarField& f, double p) { return lp_norm_values(f.grid(), f.values().abs(), p); }
double lp_norm(const VectorField& f, double p) { return lp_norm_values(f.grid(), f.norm_sq().sqrt(), p); }

namespace {
double grand_from_abs(const Grid4& g, const Eigen::ArrayXd& a, const GrandNormSpec& spec)
{
    spec.validate();
    double best = 0.0;
    for (double e : spec.eps_grid())
        best = std::max(best, std::pow(e, spec.theta / spec.q) * lp_norm_values(g, a, spec.q * (1.0 - e)));
    return best;
}
} // namespace

double grand_norm(const ScalarField& f, const GrandNormSpec& spec)
{
    return grand_from_abs(f.grid(), f.values().abs(), spec);
}

double grand_norm(const VectorField& f, const GrandNormSpec& spec)
{
    return grand_from_abs(f.grid(), f.norm_sq().sqrt(), spec);
}

double grand_sobolev_norm(const ScalarField& w, double theta, double eps0, int points)
{
    return grand_norm(laplacian(w), {theta, 2.0, eps0, points})
         + grand_norm(gradient(w), {theta, 4.0, eps0, points});
}

namespace {
// Periodic running mean over c consecutive cells along every axis.
Eigen::ArrayXd box_mean(const Grid4& g, const Eigen::ArrayXd& v, int c)
{
    const int n = g.n();
    Eigen::ArrayXd cur = v, next(v.size());
    for (int a = 0; a < 4; ++a) {
        MultiIndex e{0, 0, 0, 0};
        e[a] = 1;
        const std::size_t stride = g.index(e[0], e[1], e[2], e[3]) - g.index(0, 0, 0, 0);
        for (std::size_t s = 0; s < g.size(); ++s) {
            auto i = g.unflatten(s);
            if (i[a] != 0)
                continue;
            double acc = 0.0;
            for (int j = 0; j < c; ++j)
                acc += cur[s + j * stride];
            for (int j = 0; j < n; ++j) {
                next[s + j * stride] = acc / c;
                acc += cur[s + ((j + c) % n) * stride] - cur[s + j * stride];
            }
        }
        std::swap(cur, next);
    }
    return cur;
}
} // namespace

double bmo_seminorm(const ScalarField& w)
{
    const Grid4& g = w.grid();
    const Eigen::ArrayXd v = w.values() - w.mean();
    const Eigen::ArrayXd v2 = v.square();
    double best = 0.0;
    // half-side c·h/2 < i0 = L/4
    for (int c = 2; 2 * c < g.n(); c *= 2) {
        const Eigen::ArrayXd m1 = box_mean(g, v, c), m2 = box_mean(g, v2, c),
                             m3 = box_mean(g, v2 * v, c), m4 = box_mean(g, v2 * v2, c);
        const Eigen::ArrayXd osc = m4 - 4.0 * m1 * m3 + 6.0 * m1.square() * m2 - 3.0 * m1.square().square();
        best = std::max(best, osc.maxCoeff());
    }
    return std::pow(std::max(best, 0.0), 0.25);
}

double weighted_energy(const ScalarField& w)
{
    const Eigen::ArrayXd lw = laplacian(w).values();
    const Eigen::ArrayXd g2 = gradient(w).norm_sq();
    const Eigen::ArrayXd wt = (1.0 + (w.values() - w.mean()).square()).pow(-2.0 / 3.0);
    return integrate_values(w.grid(), (lw.square() + g2.square()) * wt);
}

double caccioppoli_energy(const ScalarField& w, double c, double k, const Vec4& center, double rho)
{
    if (!(k > 0.0))
        throw std::invalid_argument("caccioppoli_energy: k must be positive");
    const Grid4& g = w.grid();
    const Eigen::ArrayXd lw = laplacian(w).values();
    const Eigen::ArrayXd g2 = gradient(w).norm_sq();
    Eigen::ArrayXd dens = lw.square() + g2.square();
    for (std::size_t s = 0; s < g.size(); ++s)
        if (!(std::abs(w[s] - c) < k && periodic_delta(g.point(s), center, g.period()).norm() < rho))
            dens[s] = 0.0;
    return integrate_values(g, dens);
}

double coercivity_ratio(const ScalarField& w, double beta)
{
    const Eigen::ArrayXd a = laplacian(w).values();
    const Eigen::ArrayXd b = gradient(w).norm_sq();
    const double num = integrate_values(w.grid(), beta * a.square() + 12.0 * (a + b).square());
    return num / integrate_values(w.grid(), a.square() + b.square());
}

double sobolev_constant(double k)
{
    if (!(k > 4.0 / 3.0))
        throw std::domain_error("sobolev_constant: k must exceed 4/3");
    const double lc = -0.5 * std::log(std::numbers::pi) - (4.0 + k) / (4.0 * k) * std::log(4.0)
                    + (3.0 * k - 4.0) / (4.0 * k) * std::log((3.0 * k - 4.0) / 16.0)
                    + 0.25 * (std::lgamma(3.0) + std::lgamma(4.0) - std::lgamma((4.0 + k) / k)
                              - std::lgamma((15.0 * k - 20.0) / (4.0 * k)));
    return std::exp(lc);
}

double sobolev_constant_limit()
{
    return 0.375 / std::sqrt(std::numbers::pi) * std::exp(-0.25 * std::lgamma(3.75));
}

} // namespace ldet
