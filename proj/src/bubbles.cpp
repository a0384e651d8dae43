#include "ldet/bubbles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ldet {

namespace {
constexpr double pi = std::numbers::pi;
constexpr double two_pi2 = 2.0 * pi * pi; // |S³|

// quintic smoothstep and its derivatives on [0, 1]
double smooth(double s, int order)
{
    switch (order) {
    case 0: return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
    case 1: return 30.0 * s * s * (1.0 - s) * (1.0 - s);
    default: return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    }
}

// log-derivatives of F(s) = 2λ/(1 + λ²s²)
double f1(double s, double lam) { return -2.0 * lam * lam * s / (1.0 + lam * lam * s * s); }
double f2(double s, double lam)
{
    const double q = 1.0 + lam * lam * s * s;
    return -2.0 * lam * lam * (1.0 - 3.0 * lam * lam * s * s) / (q * q);
}
double log_F(double s, double lam) { return std::log(2.0 * lam) - std::log1p(lam * lam * s * s); }

// G(d) = F(χ_δ(d)): G'/G, G''/G and (G'/G)/d (finite at d = 0)
struct KernelLog {
    double logG, g1, g2, g1_over_d;
};
KernelLog kernel_log(double d, double lam, double delta)
{
    const double c = chi_delta(d, delta), c1 = chi_delta_derivative(d, delta, 1),
                 c2 = chi_delta_derivative(d, delta, 2);
    KernelLog k;
    k.logG = log_F(c, lam);
    k.g1 = f1(c, lam) * c1;
    k.g2 = f2(c, lam) * c1 * c1 + f1(c, lam) * c2;
    k.g1_over_d = d <= delta ? -2.0 * lam * lam / (1.0 + lam * lam * d * d) : k.g1 / d;
    return k;
}

// Gauss panels on [0, 2δ]: a core panel, doubling panels up to δ, then the cutoff layer.
struct RadialRule {
    std::vector<double> r, w; // w includes the 2π² r³ volume factor
};
RadialRule radial_rule(double lambda, double delta)
{
    std::vector<double> cuts{0.0};
    double a = std::min(delta, 0.125 / lambda);
    while (a < delta) {
        cuts.push_back(a);
        a *= 2.0;
    }
    cuts.push_back(delta);
    for (int i = 1; i <= 4; ++i)
        cuts.push_back(delta * (1.0 + 0.25 * i));
    RadialRule rule;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        const GaussRule g = gauss_legendre(24, cuts[p], cuts[p + 1]);
        for (std::size_t q = 0; q < g.x.size(); ++q) {
            rule.r.push_back(g.x[q]);
            rule.w.push_back(g.w[q] * two_pi2 * std::pow(g.x[q], 3));
        }
    }
    return rule;
}

// per-ball integrals of the analytic path
struct BallIntegrals {
    double lap_sq = 0.0, s_sq = 0.0, phi_excess = 0.0, exp_excess = 0.0, exp_total = 0.0;
};
BallIntegrals ball_integrals(const BubbleSpec& spec, int i)
{
    const RadialRule rule = radial_rule(spec.lambda, spec.delta);
    const double t = spec.sigma[i].t, c = bubble_plateau(spec);
    BallIntegrals b;
    for (std::size_t q = 0; q < rule.r.size(); ++q) {
        const double r = rule.r[q], w = rule.w[q];
        const BubbleRadial br = bubble_radial(spec, i, r);
        const double lap = br.lap(r), s = lap + br.du * br.du;
        b.lap_sq += w * lap * lap;
        b.s_sq += w * s * s;
        // φ − c = ¼ log(t (G/F(2δ))⁴ + 1 − t)
        const double ratio4 = std::exp(4.0 * (log_F(chi_delta(r, spec.delta), spec.lambda) - c));
        b.phi_excess += w * 0.25 * std::log(t * ratio4 + (1.0 - t));
        b.exp_excess += w * t * (ratio4 - 1.0) * std::exp(4.0 * c);
        b.exp_total += w * (t * ratio4 + 1.0 - t) * std::exp(4.0 * c);
    }
    return b;
}

void require_separated(const BubbleSpec& spec, double L, const char* who)
{
    spec.validate(L);
    if (!spec.separated(L))
        throw std::invalid_argument(std::string(who) + ": analytic evaluation needs points separated by > 4δ");
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y, double* intercept = nullptr)
{
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxy / sxx;
    if (intercept)
        *intercept = my - slope * mx;
    return slope;
}
} // namespace

double chi_delta(double t, double delta)
{
    if (t <= delta)
        return t;
    if (t >= 2.0 * delta)
        return 2.0 * delta;
    const double s = (t - delta) / delta;
    return t + smooth(s, 0) * (2.0 * delta - t);
}

double chi_delta_derivative(double t, double delta, int order)
{
    if (order == 0)
        return chi_delta(t, delta);
    if (order < 0 || order > 2)
        throw std::invalid_argument("chi_delta_derivative: order in 0..2");
    if (t <= delta)
        return order == 1 ? 1.0 : 0.0;
    if (t >= 2.0 * delta)
        return 0.0;
    const double s = (t - delta) / delta, rest = 2.0 * delta - t;
    if (order == 1)
        return 1.0 - smooth(s, 0) + smooth(s, 1) / delta * rest;
    return smooth(s, 2) / (delta * delta) * rest - 2.0 * smooth(s, 1) / delta;
}

// --- BubbleSpec ---------------------------------------------------------------------

bool BubbleSpec::separated(double L) const
{
    for (std::size_t a = 0; a < sigma.size(); ++a)
        for (std::size_t b = a + 1; b < sigma.size(); ++b)
            if (periodic_delta(sigma[a].x, sigma[b].x, L).norm() <= 4.0 * delta)
                return false;
    return true;
}

void BubbleSpec::validate(double L) const
{
    if (sigma.empty())
        throw std::invalid_argument("BubbleSpec: at least one point");
    double total = 0.0;
    for (const auto& a : sigma) {
        if (!(a.t > 0.0))
            throw std::invalid_argument("BubbleSpec: masses must be positive");
        total += a.t;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("BubbleSpec: masses must sum to 1");
    if (!(lambda > 0.0))
        throw std::invalid_argument("BubbleSpec: lambda > 0");
    if (!(delta > 0.0 && delta < L / 8.0))
        throw std::invalid_argument("BubbleSpec: delta must lie in (0, L/8)");
    if (!relax_separation && !separated(L))
        throw std::invalid_argument("BubbleSpec: points closer than 4 delta");
}

BubbleSpec BubbleSpec::with_lambda(double l) const
{
    BubbleSpec s = *this;
    s.lambda = l;
    return s;
}

nlohmann::json BubbleSpec::to_json() const
{
    nlohmann::json j;
    j["lambda"] = lambda;
    j["delta"] = delta;
    j["k"] = k();
    j["regime"] = regime();
    j["relax_separation"] = relax_separation;
    for (const auto& a : sigma)
        j["sigma"].push_back({{"t", a.t}, {"x", {a.x[0], a.x[1], a.x[2], a.x[3]}}});
    return j;
}

BubbleSpec BubbleSpec::equal_masses(std::vector<Vec4> points, double lambda, double delta)
{
    BubbleSpec s;
    for (const auto& p : points)
        s.sigma.push_back({1.0 / double(points.size()), p});
    s.lambda = lambda;
    s.delta = delta;
    return s;
}

// --- the field ----------------------------------------------------------------------

double bubble_plateau(const BubbleSpec& spec) { return log_F(2.0 * spec.delta, spec.lambda); }

BubblePoint bubble_point(const BubbleSpec& spec, const Vec4& y, double L)
{
    const std::size_t k = spec.sigma.size();
    bool plateau = true;
    for (const auto& a : spec.sigma)
        plateau = plateau && periodic_delta(y, a.x, L).norm() >= 2.0 * spec.delta;
    if (plateau)
        return BubblePoint{bubble_plateau(spec), Vec4::Zero(), 0.0};
    std::vector<double> logs(k);
    std::vector<KernelLog> kl(k);
    std::vector<Vec4> e(k);
    for (std::size_t j = 0; j < k; ++j) {
        const Vec4 d = periodic_delta(y, spec.sigma[j].x, L);
        const double r = d.norm();
        e[j] = r > 0.0 ? Vec4(d / r) : Vec4::Zero();
        kl[j] = kernel_log(r, spec.lambda, spec.delta);
        logs[j] = std::log(spec.sigma[j].t) + 4.0 * kl[j].logG;
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0;
    for (double l : logs)
        sum += std::exp(l - top);
    BubblePoint p;
    p.u = 0.25 * (top + std::log(sum));
    double lap = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double q = std::exp(logs[j] - top) / sum;
        p.grad += q * kl[j].g1 * e[j];
        lap += q * (3.0 * kl[j].g1 * kl[j].g1 + kl[j].g2 + 3.0 * kl[j].g1_over_d);
    }
    p.lap = lap - 4.0 * p.grad.squaredNorm();
    return p;
}

ScalarField bubble_field(const BubbleSpec& spec, const Grid4& grid)
{
    spec.validate(grid.period());
    const double L = grid.period();
    return ScalarField::from_function(grid, [&](const Vec4& y) { return bubble_point(spec, y, L).u; });
}

BubbleRadial bubble_radial(const BubbleSpec& spec, int i, double r)
{
    const double t = spec.sigma.at(i).t;
    const KernelLog k = kernel_log(r, spec.lambda, spec.delta);
    // q = tG⁴ / (tG⁴ + (1 − t)F(2δ)⁴)
    const double q = 1.0 / (1.0 + (1.0 - t) / t * std::exp(4.0 * (bubble_plateau(spec) - k.logG)));
    BubbleRadial b;
    b.u = bubble_plateau(spec) + 0.25 * std::log(t * std::exp(4.0 * (k.logG - bubble_plateau(spec))) + 1.0 - t);
    b.du = q * k.g1;
    b.d2u = q * k.g2 + (3.0 * q - 4.0 * q * q) * k.g1 * k.g1;
    return b;
}

// --- energies -----------------------------------------------------------------------

BubbleEnergy bubble_energy(const GammaWeights& gamma, const ConformalMetric& m, const BubbleSpec& spec, EnergyPath path)
{
    const double L = m.grid().period();
    if (path == EnergyPath::automatic)
        path = m.is_flat() ? EnergyPath::analytic : EnergyPath::grid;
    BubbleEnergy out;
    out.lambda = spec.lambda;
    if (path == EnergyPath::analytic) {
        if (!m.is_flat())
            throw std::invalid_argument("bubble_energy: the analytic path needs the flat metric");
        require_separated(spec, L, "bubble_energy");
        double lap_sq = 0, s_sq = 0, phi_excess = 0, exp_excess = 0;
        for (int i = 0; i < spec.k(); ++i) {
            const BallIntegrals b = ball_integrals(spec, i);
            lap_sq += b.lap_sq;
            s_sq += b.s_sq;
            phi_excess += b.phi_excess;
            exp_excess += b.exp_excess;
        }
        const double c = bubble_plateau(spec), vol = L * L * L * L;
        out.P_part = gamma.g2 * lap_sq;
        out.III_part = gamma.g3 * 12.0 * s_sq;
        out.F = out.P_part + out.III_part;
        const double phibar = c + phi_excess / vol;
        const double log_int = 4.0 * c + std::log(vol + exp_excess * std::exp(-4.0 * c));
        out.deficit = lap_sq / (8.0 * pi * pi) + 4.0 * phibar - log_int;
        out.mass_gap = log_int - std::log(vol) - 4.0 * phibar;
        out.path = "analytic";
        return out;
    }
    const double nyquist = pi / m.grid().spacing();
    if (spec.lambda > 0.5 * nyquist)
        throw std::invalid_argument("bubble_energy: lambda exceeds half the Nyquist wavenumber (under-resolved core)");
    const ScalarField phi = bubble_field(spec, m.grid());
    out.F = eval_F(gamma, m, phi);
    out.P_part = gamma.g2 * paneitz_form(m, phi);
    out.III_part = gamma.g3 * eval_III(m, phi);
    out.deficit = mt_deficit(phi);
    out.mass_gap = log_mean_exp4(m, phi) - 4.0 * mean(m, phi);
    out.path = "grid";
    return out;
}

std::string EnergyGrowth::to_csv() const
{
    std::ostringstream os;
    os.precision(17);
    os << "lambda,F,P_part,III_part,deficit\n";
    for (const auto& r : rows)
        os << r.lambda << ',' << r.F << ',' << r.P_part << ',' << r.III_part << ',' << r.deficit << '\n';
    return os.str();
}

nlohmann::json EnergyGrowth::to_json() const
{
    nlohmann::json j;
    j["slope"] = slope;
    j["intercept"] = intercept;
    j["P_slope"] = P_slope;
    j["III_slope"] = III_slope;
    j["expected_slope"] = expected_slope;
    j["relative_error"] = relative_error();
    j["III_ratio"] = III_ratio();
    j["min_regime"] = min_regime;
    for (const auto& r : rows)
        j["rows"].push_back({{"lambda", r.lambda}, {"F", r.F}, {"P_part", r.P_part}, {"III_part", r.III_part},
                             {"deficit", r.deficit}, {"mass_gap", r.mass_gap}, {"path", r.path}});
    return j;
}

EnergyGrowth energy_growth(const GammaWeights& gamma, const ConformalMetric& m, const BubbleSpec& spec,
                           const std::vector<double>& lambdas, EnergyPath path)
{
    if (lambdas.size() < 3)
        throw std::invalid_argument("energy_growth: at least three lambdas");
    const double ratio = lambdas[1] / lambdas[0];
    if (!(lambdas[0] > 0.0) || !(ratio > 1.0))
        throw std::invalid_argument("energy_growth: lambdas must be positive and increasing");
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (std::abs(lambdas[i] / lambdas[i - 1] / ratio - 1.0) > 1e-9)
            throw std::invalid_argument("energy_growth: lambdas must be geometric");
    if (lambdas.back() / lambdas.front() < 100.0 * (1.0 - 1e-12))
        throw std::invalid_argument("energy_growth: lambdas must span two decades");

    EnergyGrowth g;
    std::vector<double> x, F, P, III;
    for (double l : lambdas) {
        g.rows.push_back(bubble_energy(gamma, m, spec.with_lambda(l), path));
        x.push_back(std::log(l));
        F.push_back(g.rows.back().F);
        P.push_back(g.rows.back().P_part);
        III.push_back(g.rows.back().III_part);
    }
    g.slope = least_squares_slope(x, F, &g.intercept);
    g.P_slope = least_squares_slope(x, P);
    g.III_slope = least_squares_slope(x, III);
    g.expected_slope = 32.0 * spec.k() * pi * pi * gamma.g2;
    g.min_regime = lambdas.front() * spec.delta;
    return g;
}

std::vector<double> volume_fractions(const BubbleSpec& spec, double L)
{
    require_separated(spec, L, "volume_fractions");
    const double c = bubble_plateau(spec), vol = L * L * L * L;
    std::vector<double> inside;
    double excess = 0.0;
    for (int i = 0; i < spec.k(); ++i) {
        const BallIntegrals b = ball_integrals(spec, i);
        inside.push_back(b.exp_total);
        excess += b.exp_excess;
    }
    const double total = vol * std::exp(4.0 * c) + excess;
    for (double& v : inside)
        v /= total;
    return inside;
}

// --- concentration distance -----------------------------------------------------------

namespace {
struct Dictionary {
    std::vector<Vec4> kappa;
    std::vector<double> norm; // 1 + |κ|
    Eigen::ArrayXd a_cos, a_sin; // ∫ f cos, ∫ f sin
    double lipschitz = 0.0;      // max |κ| / (1 + |κ|)
};

Dictionary make_dictionary(const ScalarField& f, int kmax)
{
    const Grid4& g = f.grid();
    const double L = g.period(), k0 = 2.0 * pi / L;
    Dictionary d;
    std::vector<std::array<int, 4>> ms;
    for (int a = -kmax; a <= kmax; ++a)
        for (int b = -kmax; b <= kmax; ++b)
            for (int c = -kmax; c <= kmax; ++c)
                for (int e = -kmax; e <= kmax; ++e) {
                    const std::array<int, 4> m{a, b, c, e};
                    // one of ±m: the first non-zero entry positive
                    auto nz = std::find_if(m.begin(), m.end(), [](int v) { return v != 0; });
                    if (nz == m.end() || *nz < 0)
                        continue;
                    ms.push_back(m);
                }
    const int W = 2 * kmax + 1;
    for (const auto& m : ms) {
        const Vec4 kap = k0 * Vec4(m[0], m[1], m[2], m[3]);
        d.kappa.push_back(kap);
        d.norm.push_back(1.0 + kap.norm());
        d.lipschitz = std::max(d.lipschitz, kap.norm() / (1.0 + kap.norm()));
    }
    Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(ms.size());
    const double cell = g.cell_volume();
    std::vector<std::complex<double>> pw(4 * W);
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (f[s] == 0.0)
            continue;
        const auto idx = g.unflatten(s);
        for (int a = 0; a < 4; ++a)
            for (int q = -kmax; q <= kmax; ++q)
                pw[a * W + q + kmax] = std::polar(1.0, 2.0 * pi * q * idx[a] / g.n());
        const double mass = f[s] * cell;
        for (std::size_t w = 0; w < ms.size(); ++w)
            acc[w] += mass * pw[ms[w][0] + kmax] * pw[W + ms[w][1] + kmax] * pw[2 * W + ms[w][2] + kmax] *
                      pw[3 * W + ms[w][3] + kmax];
    }
    d.a_cos = acc.real();
    d.a_sin = acc.imag();
    return d;
}

// max over the dictionary of |∫ψ f − Σ tᵢ ψ(xᵢ)|
double dictionary_sup(const Dictionary& d, const std::vector<BubbleAtom>& sigma, std::vector<double>* signed_cos = nullptr,
                      std::vector<double>* signed_sin = nullptr)
{
    double best = 0.0;
    for (std::size_t w = 0; w < d.kappa.size(); ++w) {
        double rc = d.a_cos[w], rs = d.a_sin[w];
        for (const auto& a : sigma) {
            const double ph = d.kappa[w].dot(a.x);
            rc -= a.t * std::cos(ph);
            rs -= a.t * std::sin(ph);
        }
        if (signed_cos) {
            (*signed_cos)[w] = rc / d.norm[w];
            (*signed_sin)[w] = rs / d.norm[w];
        }
        best = std::max({best, std::abs(rc) / d.norm[w], std::abs(rs) / d.norm[w]});
    }
    return best;
}

// Euclidean projection onto the probability simplex
void project_simplex(std::vector<double>& t)
{
    std::vector<double> u = t;
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cum += u[i];
        const double th = (cum - 1.0) / double(i + 1);
        if (u[i] - th > 0.0)
            theta = th;
    }
    for (double& v : t)
        v = std::max(v - theta, 0.0);
}

int wrap(int i, int n) { return ((i % n) + n) % n; }
} // namespace

ScalarField normalized_exp4(const ScalarField& w)
{
    const double top = w.values().maxCoeff();
    const Eigen::ArrayXd e = (4.0 * (w.values() - top)).exp();
    return ScalarField(w.grid(), e / integrate_values(w.grid(), e));
}

nlohmann::json ConcentrationResult::to_json() const
{
    nlohmann::json j;
    j["value"] = value;
    j["upper"] = upper;
    j["lower"] = lower;
    j["lower_certified"] = lower_certified;
    for (const auto& a : sigma)
        j["sigma"].push_back({{"t", a.t}, {"x", {a.x[0], a.x[1], a.x[2], a.x[3]}}});
    return j;
}

ConcentrationResult concentration_distance(const ScalarField& f, int j, const ConcentrationOptions& opt)
{
    if (j <= 0)
        throw std::invalid_argument("concentration_distance: j must be positive");
    if (f.values().minCoeff() < 0.0)
        throw std::invalid_argument("concentration_distance: f must be nonnegative");
    if (std::abs(integrate(f) - 1.0) > 1e-8)
        throw std::invalid_argument("concentration_distance: f must integrate to 1");
    const Grid4& g = f.grid();
    const double L = g.period(), h = g.spacing(), cell = g.cell_volume();
    const int n = g.n();

    // candidate points: strongest separated maxima of the mollified density
    const double width = opt.mollifier > 0.0 ? opt.mollifier : 2.0 * h;
    const ScalarField fm = apply_symbol(f, [&](const Vec4& k) { return std::exp(-0.5 * k.squaredNorm() * width * width); });
    std::vector<std::size_t> maxima, order(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) {
        order[s] = s;
        const auto i = g.unflatten(s);
        bool is_max = true;
        for (int o = 0; o < 81 && is_max; ++o) {
            if (o == 40)
                continue;
            const int d0 = o / 27 - 1, d1 = (o / 9) % 3 - 1, d2 = (o / 3) % 3 - 1, d3 = o % 3 - 1;
            const std::size_t t = g.index(wrap(i[0] + d0, n), wrap(i[1] + d1, n), wrap(i[2] + d2, n), wrap(i[3] + d3, n));
            is_max = fm[s] > fm[t] || (fm[s] == fm[t] && s < t);
        }
        if (is_max)
            maxima.push_back(s);
    }
    auto by_value = [&](std::size_t a, std::size_t b) { return fm[a] > fm[b]; };
    std::sort(maxima.begin(), maxima.end(), by_value);
    std::vector<Vec4> pts;
    auto try_add = [&](std::size_t s) {
        const Vec4 y = g.point(s);
        for (const auto& p : pts)
            if (periodic_delta(y, p, L).norm() < 2.0 * width)
                return;
        pts.push_back(y);
    };
    for (std::size_t s : maxima)
        if (int(pts.size()) < j)
            try_add(s);
    if (int(pts.size()) < j) {
        std::sort(order.begin(), order.end(), by_value);
        for (std::size_t s : order)
            if (int(pts.size()) < j)
                try_add(s);
    }

    auto nearest = [&](const Vec4& y, double* dist) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double d = periodic_delta(y, pts[i], L).norm();
            if (d < bd) {
                bd = d;
                best = int(i);
            }
        }
        if (dist)
            *dist = bd;
        return best;
    };
    // one local-centroid step within 2·width of each candidate
    {
        std::vector<Vec4> shift(pts.size(), Vec4::Zero());
        std::vector<double> mass(pts.size(), 0.0);
        for (std::size_t s = 0; s < g.size(); ++s) {
            if (f[s] == 0.0)
                continue;
            const Vec4 y = g.point(s);
            const int i = nearest(y, nullptr);
            const Vec4 d = periodic_delta(y, pts[i], L);
            if (d.norm() < 2.0 * width) {
                shift[i] += f[s] * d;
                mass[i] += f[s];
            }
        }
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (mass[i] > 0.0)
                pts[i] += shift[i] / mass[i];
    }

    // Voronoi masses and the transport bound
    ConcentrationResult res;
    std::vector<double> t(pts.size(), 0.0);
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (f[s] == 0.0)
            continue;
        double d = 0.0;
        const int i = nearest(g.point(s), &d);
        t[i] += f[s] * cell;
        res.upper += f[s] * cell * d;
    }
    const double tsum = std::accumulate(t.begin(), t.end(), 0.0);
    for (double& v : t)
        v /= tsum;

    const Dictionary dict = make_dictionary(f, opt.kmax);
    auto atoms = [&](const std::vector<double>& w) {
        std::vector<BubbleAtom> a;
        for (std::size_t i = 0; i < pts.size(); ++i)
            a.push_back({w[i], pts[i]});
        return a;
    };
    // weight polish: projected subgradient on the simplex, keeping the best iterate
    std::vector<double> best_t = t;
    double best = dictionary_sup(dict, atoms(t));
    if (pts.size() > 1) {
        std::vector<double> rc(dict.kappa.size()), rs(dict.kappa.size()), cur = t;
        for (int it = 0; it < opt.polish_iterations; ++it) {
            dictionary_sup(dict, atoms(cur), &rc, &rs);
            std::size_t w = 0;
            bool is_cos = true;
            double top = -1.0;
            for (std::size_t q = 0; q < rc.size(); ++q) {
                if (std::abs(rc[q]) > top) { top = std::abs(rc[q]); w = q; is_cos = true; }
                if (std::abs(rs[q]) > top) { top = std::abs(rs[q]); w = q; is_cos = false; }
            }
            const double sgn = (is_cos ? rc[w] : rs[w]) > 0 ? 1.0 : -1.0;
            const double step = 0.05 / std::sqrt(1.0 + it);
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double ph = dict.kappa[w].dot(pts[i]);
                // ∂/∂tᵢ of |r| = −sgn ψ(xᵢ)
                cur[i] += step * sgn * (is_cos ? std::cos(ph) : std::sin(ph)) / dict.norm[w];
            }
            project_simplex(cur);
            const double v = dictionary_sup(dict, atoms(cur));
            if (v < best) {
                best = v;
                best_t = cur;
            }
        }
    }
    res.value = best;
    res.sigma = atoms(best_t);

    if (j == 1) {
        // exhaustive lattice search over δ_x, with the Lipschitz margin of the dictionary
        const int M = opt.search;
        const int kmax = opt.kmax, W = 2 * kmax + 1;
        std::vector<std::complex<double>> tab(std::size_t(M) * W);
        for (int i = 0; i < M; ++i)
            for (int q = -kmax; q <= kmax; ++q)
                tab[std::size_t(i) * W + q + kmax] = std::polar(1.0, 2.0 * pi * q * i / M);
        std::vector<std::array<int, 4>> ms;
        const double k0 = 2.0 * pi / L;
        for (const auto& kap : dict.kappa)
            ms.push_back({int(std::lround(kap[0] / k0)), int(std::lround(kap[1] / k0)), int(std::lround(kap[2] / k0)),
                          int(std::lround(kap[3] / k0))});
        double lattice_min = std::numeric_limits<double>::infinity();
        std::array<int, 4> arg{0, 0, 0, 0};
        for (int i0 = 0; i0 < M; ++i0)
            for (int i1 = 0; i1 < M; ++i1)
                for (int i2 = 0; i2 < M; ++i2)
                    for (int i3 = 0; i3 < M; ++i3) {
                        double v = 0.0;
                        for (std::size_t w = 0; w < ms.size() && v < lattice_min; ++w) {
                            const auto& m = ms[w];
                            const std::complex<double> z = tab[std::size_t(i0) * W + m[0] + kmax] *
                                                           tab[std::size_t(i1) * W + m[1] + kmax] *
                                                           tab[std::size_t(i2) * W + m[2] + kmax] *
                                                           tab[std::size_t(i3) * W + m[3] + kmax];
                            v = std::max({v, std::abs(dict.a_cos[w] - z.real()) / dict.norm[w],
                                          std::abs(dict.a_sin[w] - z.imag()) / dict.norm[w]});
                        }
                        if (v < lattice_min) {
                            lattice_min = v;
                            arg = {i0, i1, i2, i3};
                        }
                    }
        // every point lies within L/M (half the cell diagonal in 4D) of the lattice
        res.lower = std::max(0.0, lattice_min - dict.lipschitz * L / M);
        res.lower_certified = true;
        if (lattice_min < res.value) {
            res.value = lattice_min;
            res.sigma = {{1.0, Vec4(arg[0], arg[1], arg[2], arg[3]) * (L / M)}};
        }
    }
    return res;
}

// --- improved Moser–Trudinger -----------------------------------------------------------

nlohmann::json ImprovedMTReport::to_json() const
{
    nlohmann::json j;
    j["regions"] = regions;
    j["gamma0"] = gamma0;
    j["eps_tilde"] = eps_tilde;
    j["excluded"] = excluded;
    j["empirical_C"] = std::isfinite(empirical_C) ? nlohmann::json(empirical_C) : nlohmann::json(nullptr);
    for (const auto& r : rows)
        j["rows"].push_back({{"log_exp", r.log_exp}, {"paneitz", r.paneitz}, {"III", r.III}, {"lhs", r.lhs},
                             {"rhs", r.rhs}, {"gap", r.gap}, {"fractions", r.fractions}, {"included", r.included}});
    return j;
}

ImprovedMTReport improved_mt_check(const GammaWeights& gamma, const ConformalMetric& m,
                                   const std::vector<ScalarField>& family, const std::vector<Region>& partition,
                                   double gamma0, double eps_tilde)
{
    if (partition.empty())
        throw std::invalid_argument("improved_mt_check: at least one region");
    if (gamma.g2 == 0.0)
        throw std::invalid_argument("improved_mt_check: needs gamma2 != 0");
    const Grid4& g = m.grid();
    std::vector<Eigen::ArrayXd> masks(partition.size(), Eigen::ArrayXd::Zero(g.size()));
    for (std::size_t s = 0; s < g.size(); ++s) {
        const Vec4 y = g.point(s);
        int hits = 0;
        for (std::size_t r = 0; r < partition.size(); ++r)
            if (partition[r](y)) {
                masks[r][s] = 1.0;
                ++hits;
            }
        if (hits > 1)
            throw std::invalid_argument("improved_mt_check: regions overlap");
    }
    ImprovedMTReport rep;
    rep.regions = int(partition.size());
    rep.gamma0 = gamma0;
    rep.eps_tilde = eps_tilde;
    rep.empirical_C = std::numeric_limits<double>::quiet_NaN();
    for (const auto& w : family) {
        if (w.grid() != g)
            throw std::invalid_argument("improved_mt_check: family member on a different grid");
        MTRow row;
        row.log_exp = std::log(m.volume()) + log_mean_exp4(m, w) - 4.0 * mean(m, w);
        row.paneitz = paneitz_form(m, w);
        row.III = eval_III(m, w);
        row.lhs = 8.0 * rep.regions * pi * pi * row.log_exp;
        row.rhs = row.paneitz + gamma.g3 / gamma.g2 * row.III;
        row.gap = row.lhs - (1.0 + eps_tilde) * row.rhs;
        const Eigen::ArrayXd e = (4.0 * (w.values() - w.values().maxCoeff())).exp() * m.density().values();
        const double total = e.sum();
        for (const auto& mk : masks) {
            row.fractions.push_back((e * mk).sum() / total);
            if (row.fractions.back() < gamma0)
                row.included = false;
        }
        if (row.included)
            rep.empirical_C = std::isnan(rep.empirical_C) ? row.gap : std::max(rep.empirical_C, row.gap);
        else
            ++rep.excluded;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

} // namespace ldet
