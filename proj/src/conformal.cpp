#include "ldet/conformal.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ldet {

// --- γ weights ---------------------------------------------------------------------

double GammaWeights::beta_ratio() const
{
    if (g3 == 0.0)
        throw std::domain_error("beta_ratio: gamma3 is zero");
    return g2 / g3;
}

double GammaWeights::coercivity_constant() const
{
    const double b = beta_ratio();
    return 0.5 * (24.0 + b - std::sqrt(576.0 + b * b));
}

double GammaWeights::eta(const ConformalMetric& m) const
{
    const CurvaturePack& c = m.curvature();
    // |Ric|_g = sqrt(|Ric|²_g)
    const Eigen::ArrayXd s = c.R.values().abs() + c.ric_norm_sq.values().sqrt();
    return std::abs(g2 - 6.0 * g3) * s.maxCoeff();
}

GammaWeights operator+(const GammaWeights& a, const GammaWeights& b)
{
    return gamma_triple(a.g1 + b.g1, a.g2 + b.g2, a.g3 + b.g3);
}

GammaWeights gamma_triple(double g1, double g2, double g3)
{
    GammaWeights w;
    w.g1 = g1;
    w.g2 = g2;
    w.g3 = g3;
    return w;
}

GammaWeights gamma_preset(std::string_view name)
{
    GammaWeights w;
    if (name == "conformal_laplacian")
        w = gamma_triple(1.0, -4.0, -2.0 / 3.0);
    else if (name == "dirac_squared")
        w = gamma_triple(-7.0, -88.0, -14.0 / 3.0);
    else if (name == "paneitz")
        w = gamma_triple(-0.25, -14.0, 8.0 / 3.0);
    else
        throw std::invalid_argument("unknown gamma preset: " + std::string(name));
    w.preset = std::string(name);
    return w;
}

// --- metric ------------------------------------------------------------------------

ConformalMetric::ConformalMetric(ScalarField phi0)
    : phi0_(std::move(phi0)), cache_(std::make_shared<Cache>())
{
    const Eigen::ArrayXd& p = phi0_.values();
    if (!p.allFinite())
        throw std::invalid_argument("ConformalMetric: non-finite conformal factor");
    flat_ = (p == 0.0).all();
    e2_ = (2.0 * p).exp();
    em2_ = (-2.0 * p).exp();
    em4_ = (-4.0 * p).exp();
    dens_ = ScalarField(phi0_.grid(), (4.0 * p).exp());
}

ConformalMetric ConformalMetric::flat(const Grid4& g) { return ConformalMetric(ScalarField(g, 0.0)); }

double ConformalMetric::volume() const { return ldet::integrate(dens_); }

const VectorField& ConformalMetric::dphi() const
{
    std::call_once(cache_->grad_once, [this] { cache_->dphi = gradient(phi0_); });
    return cache_->dphi;
}

const CurvaturePack& ConformalMetric::curvature() const
{
    std::call_once(cache_->curv_once, [this] { cache_->pack = curvature_suite(*this); });
    return cache_->pack;
}

ConformalMetric ConformalMetric::conformal(const ScalarField& w) const { return ConformalMetric(phi0_ + w); }

// --- metric calculus --------------------------------------------------------------

double integrate(const ConformalMetric& m, const ScalarField& f) { return ldet::integrate(f, m.density()); }

double integrate(const ConformalMetric& m, const Eigen::ArrayXd& f)
{
    return integrate_values(m.grid(), f * m.density().values());
}

double mean(const ConformalMetric& m, const ScalarField& f) { return integrate(m, f) / m.volume(); }

VectorField scale(const VectorField& X, const Eigen::ArrayXd& s)
{
    VectorField Y;
    for (int i = 0; i < 4; ++i)
        Y[i] = ScalarField(X.grid(), X[i].values() * s);
    return Y;
}

ScalarField divergence(const ConformalMetric& m, const VectorField& X)
{
    if (m.is_flat())
        return ldet::divergence(X);
    const ScalarField d = ldet::divergence(scale(X, m.e2()));
    return ScalarField(m.grid(), d.values() * m.em4());
}

ScalarField laplace(const ConformalMetric& m, const VectorField& df) { return divergence(m, df); }

ScalarField laplace(const ConformalMetric& m, const ScalarField& f)
{
    if (m.is_flat())
        return laplacian(f);
    return divergence(m, gradient(f));
}

Eigen::ArrayXd inner(const ConformalMetric& m, const VectorField& a, const VectorField& b)
{
    Eigen::ArrayXd s = a[0].values() * b[0].values();
    for (int i = 1; i < 4; ++i)
        s += a[i].values() * b[i].values();
    if (!m.is_flat())
        s *= m.em2();
    return s;
}

SymTensorField hessian(const ConformalMetric& m, const VectorField& df, const SymTensorField& ddf)
{
    if (m.is_flat())
        return ddf;
    const VectorField& dp = m.dphi();
    Eigen::ArrayXd pf = dp[0].values() * df[0].values();
    for (int k = 1; k < 4; ++k)
        pf += dp[k].values() * df[k].values();
    SymTensorField H;
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            Eigen::ArrayXd v = ddf(i, j).values() - dp[i].values() * df[j].values()
                             - dp[j].values() * df[i].values();
            if (i == j)
                v += pf;
            H(i, j) = ScalarField(m.grid(), std::move(v));
        }
    return H;
}

SymTensorField hessian(const ConformalMetric& m, const ScalarField& f)
{
    return hessian(m, gradient(f), ldet::hessian(f));
}

Eigen::ArrayXd tensor_inner(const ConformalMetric& m, const SymTensorField& A, const SymTensorField& B)
{
    Eigen::ArrayXd s = A.contract(B);
    if (!m.is_flat())
        s *= m.em4();
    return s;
}

Eigen::ArrayXd ricci_form(const ConformalMetric& m, const VectorField& a, const VectorField& b)
{
    Eigen::ArrayXd s = Eigen::ArrayXd::Zero(m.grid().size());
    if (m.is_flat())
        return s;
    const SymTensorField& Ric = m.curvature().Ric;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            s += Ric(i, j).values() * a[i].values() * b[j].values();
    return s * m.em4();
}

VectorField ricci_covector(const ConformalMetric& m, const VectorField& a)
{
    VectorField out;
    const Grid4& g = m.grid();
    for (int i = 0; i < 4; ++i) {
        Eigen::ArrayXd s = Eigen::ArrayXd::Zero(g.size());
        if (!m.is_flat()) {
            const SymTensorField& Ric = m.curvature().Ric;
            for (int j = 0; j < 4; ++j)
                s += Ric(i, j).values() * a[j].values();
            s *= m.em2();
        }
        out[i] = ScalarField(g, std::move(s));
    }
    return out;
}

// --- curvature ---------------------------------------------------------------------------

CurvaturePack curvature_suite(const ConformalMetric& m)
{
    const Grid4& g = m.grid();
    CurvaturePack c;
    c.weyl_sq = ScalarField(g, 0.0);
    if (m.is_flat()) {
        c.R = c.Q = c.laplacian_R = c.ric_norm_sq = ScalarField(g, 0.0);
        for (auto& x : c.Ric.c)
            x = ScalarField(g, 0.0);
        return c;
    }
    const ScalarField& phi = m.phi0();
    const VectorField& dp = m.dphi();
    const SymTensorField ddp = ldet::hessian(phi);
    const Eigen::ArrayXd lap = ddp.trace();
    const Eigen::ArrayXd gsq = dp.norm_sq();

    // n = 4 conformal change of the flat metric:
    //   Ric_ij = −2(φ_ij − φ_i φ_j) − (Δφ + 2|∂φ|²) δ_ij,  R = −6 e^{−2φ}(Δφ + |∂φ|²).
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            Eigen::ArrayXd v = -2.0 * (ddp(i, j).values() - dp[i].values() * dp[j].values());
            if (i == j)
                v -= lap + 2.0 * gsq;
            c.Ric(i, j) = ScalarField(g, std::move(v));
        }
    c.R = ScalarField(g, -6.0 * m.em2() * (lap + gsq));
    c.ric_norm_sq = ScalarField(g, c.Ric.contract(c.Ric) * m.em4());
    c.laplacian_R = laplace(m, c.R);
    // P_flat φ0 + 2·0 = 2 Q_g e^{4φ0}
    c.Q = ScalarField(g, 0.5 * m.em4() * bilaplacian(phi).values());
    return c;
}

ScalarField q_curvature_from_ricci(const ConformalMetric& m)
{
    const CurvaturePack& c = m.curvature();
    return ScalarField(m.grid(), (-c.laplacian_R.values() + c.R.values().square()
                                  - 3.0 * c.ric_norm_sq.values()) / 12.0);
}

ScalarField paneitz_apply(const ConformalMetric& m, const ScalarField& psi)
{
    if (m.is_flat())
        return bilaplacian(psi);
    const VectorField dpsi = gradient(psi);
    const ScalarField lap = laplace(m, dpsi);
    const ScalarField lap2 = laplace(m, lap);
    const CurvaturePack& c = m.curvature();
    const VectorField ric = ricci_covector(m, dpsi);
    VectorField X;
    for (int i = 0; i < 4; ++i)
        X[i] = ScalarField(m.grid(), (2.0 / 3.0) * c.R.values() * dpsi[i].values() - 2.0 * ric[i].values());
    return lap2 - divergence(m, X);
}

ScalarField u_curvature(const ConformalMetric& m, const GammaWeights& gamma)
{
    const CurvaturePack& c = m.curvature();
    return ScalarField(m.grid(), gamma.g1 * c.weyl_sq.values() + gamma.g2 * c.Q.values()
                                     - gamma.g3 * c.laplacian_R.values());
}

double kappa_A(const ConformalMetric& m, const GammaWeights& gamma)
{
    const CurvaturePack& c = m.curvature();
    return -gamma.g1 * integrate(m, c.weyl_sq) - gamma.g2 * integrate(m, c.Q);
}

// --- IO ------------------------------------------------------------------------------------

void write_metric(const std::string& stem, const ConformalMetric& m, const std::string& preset)
{
    write_field(stem + ".ldf", m.phi0());
    nlohmann::json j;
    j["n"] = m.grid().n();
    j["L"] = m.grid().period();
    j["field"] = stem + ".ldf";
    j["gamma_preset"] = preset;
    std::ofstream out(stem + ".json");
    out << j.dump(2) << '\n';
}

ConformalMetric read_metric(const std::string& stem, std::string* preset)
{
    std::ifstream in(stem + ".json");
    if (!in)
        throw std::runtime_error("missing metric sidecar " + stem + ".json");
    const nlohmann::json j = nlohmann::json::parse(in);
    auto f = read_field(stem + ".ldf");
    if (f.size() != 1 || f[0].grid().n() != j.at("n").get<int>())
        throw std::runtime_error("metric container does not match its sidecar");
    if (preset)
        *preset = j.value("gamma_preset", "");
    return ConformalMetric(f[0]);
}

} // namespace ldet
