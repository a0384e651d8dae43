#include "ldet/nonlin_op.hpp"
#include "ldet/functionals.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace ldet {

namespace {

ScalarField maybe_lowpass(ScalarField f, double dealias)
{
    return dealias > 0.0 ? lowpass(f, dealias) : f;
}

VectorField scaled(const VectorField& X, const Eigen::ArrayXd& s, double dealias)
{
    VectorField Y;
    for (int i = 0; i < 4; ++i)
        Y[i] = maybe_lowpass(ScalarField(X.grid(), X[i].values() * s), dealias);
    return Y;
}

ScalarField lap(const ConformalMetric& m, const ScalarField& f, const VectorField& df)
{
    return m.is_flat() ? laplacian(f) : laplace(m, df);
}

ScalarField lap(const ConformalMetric& m, const ScalarField& f)
{
    return m.is_flat() ? laplacian(f) : laplace(m, f);
}

double residual_scale(double a, double b) { return std::max(std::abs(a), std::abs(b)); }

IdentityResidual finish(std::string name, double lhs, double rhs, double tol)
{
    IdentityResidual r;
    r.identity = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.residual = std::abs(lhs - rhs);
    r.scale = residual_scale(lhs, rhs);
    r.tolerance = tol;
    return r;
}

} // namespace

ScalarField apply_N(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w, double dealias)
{
    const Grid4& g = w.grid();
    const VectorField dw = gradient(w);
    ScalarField out = (gamma.g2 / 2.0) * paneitz_apply(m, w);
    if (gamma.g3 != 0.0) {
        const ScalarField lw = lap(m, w, dw);
        const ScalarField S = maybe_lowpass(ScalarField(g, lw.values() + inner(m, dw, dw)), dealias);
        out = out + (6.0 * gamma.g3) * lap(m, S)
            - (12.0 * gamma.g3) * divergence(m, scaled(dw, S.values(), dealias));
        if (!m.is_flat())
            out = out + (2.0 * gamma.g3) * divergence(m, scaled(dw, m.curvature().R.values(), dealias));
    }
    return out;
}

WeakPairing weak_pair(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                      const ScalarField& phi)
{
    const VectorField dw = gradient(w), dp = gradient(phi);
    const ScalarField lw = lap(m, w, dw), lp = lap(m, phi, dp);
    const Eigen::ArrayXd S = lw.values() + inner(m, dw, dw);
    const Eigen::ArrayXd wp = inner(m, dw, dp);
    WeakPairing r;
    r.biharmonic = 0.5 * gamma.g2 * integrate(m, Eigen::ArrayXd(lw.values() * lp.values()));
    r.quadratic = 6.0 * gamma.g3 * integrate(m, Eigen::ArrayXd(S * lp.values()));
    r.cubic = 12.0 * gamma.g3 * integrate(m, Eigen::ArrayXd(S * wp));
    if (!m.is_flat()) {
        r.ricci = -gamma.g2 * integrate(m, ricci_form(m, dw, dp));
        r.scalar = (gamma.g2 / 3.0 - 2.0 * gamma.g3)
                 * integrate(m, Eigen::ArrayXd(m.curvature().R.values() * wp));
    }
    r.value = r.biharmonic + r.ricci + r.quadratic + r.cubic + r.scalar;
    return r;
}

ScalarField linearized_N(const GammaWeights& gamma, const ConformalMetric& m, const ScalarField& w,
                         const ScalarField& v)
{
    const Grid4& g = w.grid();
    const VectorField dw = gradient(w), dv = gradient(v);
    ScalarField out = (gamma.g2 / 2.0) * paneitz_apply(m, v);
    if (gamma.g3 != 0.0) {
        const Eigen::ArrayXd S = lap(m, w, dw).values() + inner(m, dw, dw);
        const ScalarField dS(g, lap(m, v, dv).values() + 2.0 * inner(m, dw, dv));
        VectorField X;
        for (int i = 0; i < 4; ++i)
            X[i] = ScalarField(g, dS.values() * dw[i].values() + S * dv[i].values());
        out = out + (6.0 * gamma.g3) * lap(m, dS) - (12.0 * gamma.g3) * divergence(m, X);
        if (!m.is_flat())
            out = out + (2.0 * gamma.g3) * divergence(m, scale(dv, m.curvature().R.values()));
    }
    return out;
}

nlohmann::json to_json(const IdentityResidual& r)
{
    nlohmann::json j;
    j["identity"] = r.identity;
    j["inputs_hash"] = r.inputs_hash;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["residual"] = r.residual;
    j["relative"] = r.relative();
    j["tolerance"] = r.tolerance;
    j["pass"] = r.pass();
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : r.terms)
        t[k] = v;
    j["terms"] = t;
    return j;
}

std::string fingerprint(std::initializer_list<const ScalarField*> fields)
{
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const ScalarField* f : fields) {
        const int n = f->grid().n();
        const double L = f->grid().period();
        mix(&n, sizeof n);
        mix(&L, sizeof L);
        mix(f->values().data(), sizeof(double) * f->size());
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

IdentityResidual gradient_identity_residual(const GammaWeights& gamma, const ConformalMetric& m,
                                            const ScalarField& w, const ScalarField& phi, double t)
{
    const double pn = phi.max_abs();
    const double pair = 4.0 * weak_pair(gamma, m, w, phi).value;
    if (pn == 0.0)
        return finish("gradient_law", 0.0, pair, 1e-6);
    if (!(t > 0.0))
        t = 1e-5 * (1.0 + w.max_abs()) / pn;
    auto central = [&](double s) {
        return (eval_J(gamma, m, w + s * phi) - eval_J(gamma, m, w + (-s) * phi)) / (2.0 * s);
    };
    const double d = (4.0 * central(0.5 * t) - central(t)) / 3.0;
    IdentityResidual r = finish("gradient_law", d, pair, 1e-6);
    r.inputs_hash = fingerprint({&w, &phi, &m.phi0()});
    return r;
}

IdentityResidual difference_identity_residual(const GammaWeights& gamma, const ConformalMetric& m,
                                              const ScalarField& w1, const ScalarField& w2,
                                              const ScalarField& phi)
{
    const double lhs = weak_pair(gamma, m, w1, phi).value - weak_pair(gamma, m, w2, phi).value;
    const ScalarField p = w1 - w2, q = w1 + w2;
    const ConformalMetric mh(m.phi0() + 0.5 * q); // ĝ = e^q g
    const VectorField dp = gradient(p), df = gradient(phi);
    const SymTensorField hp = ldet::hessian(p), hf = ldet::hessian(phi);
    const double g3 = gamma.g3, g2 = gamma.g2;

    std::vector<std::pair<std::string, double>> t;
    t.emplace_back("hat_laplacian",
                   3.0 * g3 * integrate(mh, laplace(mh, dp) * laplace(mh, df)));
    t.emplace_back("hat_hessian",
                   6.0 * g3 * integrate(mh, tensor_inner(mh, hessian(mh, dp, hp), hessian(mh, df, hf))));
    t.emplace_back("hat_quartic",
                   3.0 * g3 * integrate(mh, Eigen::ArrayXd(inner(mh, dp, dp) * inner(mh, dp, df))));
    t.emplace_back("laplacian", (g2 / 2.0 - 3.0 * g3) * integrate(m, lap(m, p, dp) * lap(m, phi, df)));
    double curv = 0.0;
    if (!m.is_flat())
        curv = (2.0 * g3 - g2 / 3.0)
             * integrate(m, Eigen::ArrayXd(3.0 * ricci_form(m, dp, df)
                                           - m.curvature().R.values() * inner(m, dp, df)));
    t.emplace_back("curvature", curv);

    double rhs = 0.0;
    for (const auto& [k, v] : t)
        rhs += v;
    IdentityResidual r = finish("difference", lhs, rhs, 1e-6);
    r.terms = std::move(t);
    r.inputs_hash = fingerprint({&w1, &w2, &phi, &m.phi0()});
    return r;
}

IdentityResidual bochner_residual(const ConformalMetric& m, const ScalarField& p, const ScalarField& phi)
{
    const VectorField dp = gradient(p), df = gradient(phi);
    const double lhs = m.is_flat() ? 0.0 : integrate(m, ricci_form(m, dp, df));
    const double a = integrate(m, lap(m, p, dp) * lap(m, phi, df));
    const double b = integrate(m, tensor_inner(m, hessian(m, dp, ldet::hessian(p)),
                                               hessian(m, df, ldet::hessian(phi))));
    IdentityResidual r = finish("bochner", lhs, a - b, 1e-6);
    r.terms = {{"laplacian", a}, {"hessian", -b}};
    // the two sides can cancel: measure against the largest ingredient
    r.scale = std::max({std::abs(lhs), std::abs(a), std::abs(b)});
    r.inputs_hash = fingerprint({&p, &phi, &m.phi0()});
    return r;
}

// --- ψ profiles ------------------------------------------------------------------

PsiProfile PsiProfile::from_name(std::string_view name, double param)
{
    PsiProfile p;
    if (name == "linear")
        p.kind = PsiKind::linear;
    else if (name == "m0") {
        if (!(param > 0.0))
            throw std::invalid_argument("psi profile m0 needs M0 > 0");
        p.kind = PsiKind::m0;
        p.M0 = param;
    } else if (name == "truncation") {
        if (!(param > 0.0))
            throw std::invalid_argument("psi profile truncation needs k > 0");
        p.kind = PsiKind::truncation;
        p.k = param;
    } else
        throw std::invalid_argument("unknown psi profile: " + std::string(name));
    return p;
}

std::string PsiProfile::name() const
{
    switch (kind) {
    case PsiKind::linear: return "linear";
    case PsiKind::m0: return "m0";
    case PsiKind::truncation: return "truncation";
    }
    return "";
}

namespace {
// Ψ on s ≥ 0 and its derivatives
double trunc0(double s) { return s <= 1.0 ? s : 8.0 - 9.0 * std::cbrt(1.0 / s) + 2.0 / s; }
double trunc1(double s) { return s <= 1.0 ? 1.0 : 3.0 * std::pow(s, -4.0 / 3.0) - 2.0 / (s * s); }
double trunc2(double s) { return s <= 1.0 ? 0.0 : -4.0 * std::pow(s, -7.0 / 3.0) + 4.0 / (s * s * s); }
} // namespace

double PsiProfile::psi(double s) const
{
    switch (kind) {
    case PsiKind::linear: return s;
    case PsiKind::truncation: return s >= 0.0 ? k * trunc0(s / k) : -k * trunc0(-s / k);
    case PsiKind::m0: {
        // ψ(0) = ½ ∫_ℝ (M0 + s²)^{−2/3} = ½ M0^{−1/6} √π Γ(1/6)/Γ(2/3)
        const double half = 0.5 * std::pow(M0, -1.0 / 6.0) * std::sqrt(std::numbers::pi)
                          * std::tgamma(1.0 / 6.0) / std::tgamma(2.0 / 3.0);
        const double width = 0.5 * std::sqrt(M0);
        const int panels = std::max(1, int(std::ceil(std::abs(s) / width)));
        static const GaussRule unit = gauss_legendre(10, 0.0, 1.0);
        double acc = 0.0;
        const double hpan = s / panels;
        for (int p = 0; p < panels; ++p)
            for (std::size_t i = 0; i < unit.x.size(); ++i)
                acc += hpan * unit.w[i] * dpsi((p + unit.x[i]) * hpan);
        return half + acc;
    }
    }
    return 0.0;
}

double PsiProfile::dpsi(double s) const
{
    switch (kind) {
    case PsiKind::linear: return 1.0;
    case PsiKind::truncation: return trunc1(std::abs(s) / k);
    case PsiKind::m0: return std::pow(M0 + s * s, -2.0 / 3.0);
    }
    return 0.0;
}

double PsiProfile::ddpsi(double s) const
{
    switch (kind) {
    case PsiKind::linear: return 0.0;
    case PsiKind::truncation: return (s >= 0.0 ? 1.0 : -1.0) * trunc2(std::abs(s) / k) / k;
    case PsiKind::m0: return -(4.0 / 3.0) * s * std::pow(M0 + s * s, -5.0 / 3.0);
    }
    return 0.0;
}

ScalarField cosine_bump(const Grid4& g, const Vec4& center)
{
    const double k = 2.0 * std::numbers::pi / g.period();
    return ScalarField::from_function(g, [&](const Vec4& x) {
        double v = 1.0;
        for (int a = 0; a < 4; ++a)
            v *= 0.5 * (1.0 + std::cos(k * (x[a] - center[a])));
        return v;
    });
}

IdentityResidual localized_identity_residual(const GammaWeights& gamma, const ConformalMetric& m,
                                         const ScalarField& w, const PsiProfile& psi,
                                         const ScalarField& chi, double c)
{
    const Grid4& g = w.grid();
    const std::size_t N = g.size();
    Eigen::ArrayXd ps(N), p1(N), p2(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double s = w[i] - c;
        ps[i] = psi.psi(s);
        p1[i] = psi.dpsi(s);
        p2[i] = psi.ddpsi(s);
    }
    const ScalarField chi4(g, chi.values().square().square());
    const ScalarField test(g, chi4.values() * ps);
    const double lhs = integrate(m, apply_N(gamma, m, w) * test);

    const double g2 = gamma.g2, g3 = gamma.g3, a = g2 / 2.0 + 6.0 * g3, b = g2 / 3.0 - 2.0 * g3;
    const VectorField dw = gradient(w), dc = gradient(chi4);
    const Eigen::ArrayXd lw = lap(m, w, dw).values();
    const Eigen::ArrayXd gw = inner(m, dw, dw);
    const Eigen::ArrayXd wc = inner(m, dw, dc);
    const Eigen::ArrayXd lc = lap(m, chi4, dc).values();
    const Eigen::ArrayXd& X = chi4.values();
    Eigen::ArrayXd R = Eigen::ArrayXd::Zero(N), ric_ww = R, ric_wc = R;
    if (!m.is_flat()) {
        R = m.curvature().R.values();
        ric_ww = ricci_form(m, dw, dw);
        ric_wc = ricci_form(m, dw, dc);
    }

    std::vector<std::pair<std::string, double>> t;
    t.emplace_back("laplacian_sq", a * integrate(m, Eigen::ArrayXd(X * p1 * lw.square())));
    t.emplace_back("mixed", integrate(m, Eigen::ArrayXd(X * (18.0 * g3 * p1 + a * p2) * lw * gw)));
    t.emplace_back("quartic", 6.0 * g3 * integrate(m, Eigen::ArrayXd(X * (2.0 * p1 + p2) * gw.square())));
    t.emplace_back("curvature", integrate(m, Eigen::ArrayXd(X * p1 * (b * R * gw - g2 * ric_ww))));
    const double rem = integrate(m, Eigen::ArrayXd((a * lw + 6.0 * g3 * gw) * (ps * lc + 2.0 * p1 * wc)))
                     + 12.0 * g3 * integrate(m, Eigen::ArrayXd((lw + gw) * ps * wc))
                     + integrate(m, Eigen::ArrayXd(ps * (b * R * wc - g2 * ric_wc)));
    t.emplace_back("remainder", rem);

    double rhs = 0.0;
    for (const auto& [k, v] : t)
        rhs += v;
    IdentityResidual r = finish("localized_test", lhs, rhs, 1e-6);
    r.terms = std::move(t);
    r.inputs_hash = fingerprint({&w, &chi, &m.phi0()});
    return r;
}

// --- Hodge -------------------------------------------------------------------------

HodgeSplit hodge_decompose(const ScalarField& p, const ScalarField& q, double delta, double eps)
{
    if (!(eps >= 0.0 && eps <= 0.125))
        throw std::invalid_argument("hodge_decompose: eps must lie in (0, 1/8]");
    if (!(delta > 0.0 && delta <= 1.0))
        throw std::invalid_argument("hodge_decompose: delta must lie in (0, 1]");
    const VectorField dp = gradient(p), dq = gradient(q);
    const Eigen::ArrayXd wgt = (delta * delta + dp.norm_sq() + dq.norm_sq()).pow(-2.0 * eps);
    HodgeSplit s;
    s.delta = delta;
    s.eps = eps;
    s.field = scale(dp, wgt);
    s.phi = helmholtz_potential(s.field);
    s.potential_grad = gradient(s.phi);
    for (int i = 0; i < 4; ++i)
        s.h[i] = s.field[i] - s.potential_grad[i];
    return s;
}

double hodge_ratio(const HodgeSplit& split, const ScalarField& p, const ScalarField& q)
{
    const double e = split.eps;
    if (!(e > 0.0 && e < 0.25))
        throw std::invalid_argument("hodge_ratio: eps must lie in (0, 1/4)");
    const double s = 4.0 * (1.0 - e) / (1.0 - 4.0 * e);
    const double r = 4.0 * (1.0 - e), k = 1.0 - 4.0 * e;
    const double denom = e * (std::pow(split.delta, k) + std::pow(lp_norm(gradient(p), r), k)
                              + std::pow(lp_norm(gradient(q), r), k));
    return lp_norm(split.h, s) / denom;
}

VectorField lambda_apply(const VectorField& F)
{
    const VectorField K = gradient_projection(F);
    VectorField out;
    for (int i = 0; i < 4; ++i)
        out[i] = F[i] - K[i];
    return out;
}

VectorField s_power(const VectorField& F, const VectorField& Q, double x, double delta, double r)
{
    const double nF = lp_norm(F, r), nQ = lp_norm(Q, r);
    const Eigen::ArrayXd w = ((nF * nF + nQ * nQ) / (delta * delta + F.norm_sq() + Q.norm_sq())).pow(0.5 * x);
    return scale(F, w);
}

double commutator_ratio(const VectorField& F, const VectorField& Q, double x, double delta, double r,
                        double rho)
{
    if (!(std::abs(x) <= rho) || x == 0.0)
        throw std::invalid_argument("commutator_ratio: need 0 < |x| <= rho");
    if (!(r > 1.0) || !(rho > 0.0 && rho < std::min(1.0, r - 1.0)))
        throw std::invalid_argument("commutator_ratio: need r > 1 and 0 < rho < min(1, r-1)");
    const VectorField a = lambda_apply(s_power(F, Q, x, delta, r));
    const VectorField b = s_power(lambda_apply(F), Q, x, delta, r);
    VectorField d;
    for (int i = 0; i < 4; ++i)
        d[i] = a[i] - b[i];
    const double nF = lp_norm(F, r), nQ = lp_norm(Q, r);
    const double scale_ = std::abs(x) * std::pow(delta * delta + nF * nF + nQ * nQ, 0.5 * rho)
                        * std::pow(nF, 1.0 - rho);
    return lp_norm(d, r / (1.0 - x)) / scale_;
}

CommutatorReport commutator_check(const VectorField& F, const VectorField& Q, const std::vector<double>& xs,
                                  double delta, double r, double rho)
{
    CommutatorReport rep;
    rep.r = r;
    rep.rho = rho;
    rep.delta = delta;
    double lo = INFINITY;
    for (double x : xs) {
        const double v = commutator_ratio(F, Q, x, delta, r, rho);
        rep.x.push_back(x);
        rep.ratio.push_back(v);
        rep.K = std::max(rep.K, v);
        lo = std::min(lo, v);
    }
    rep.spread = xs.empty() ? 0.0 : rep.K / lo;
    return rep;
}

} // namespace ldet
