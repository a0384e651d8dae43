#include "ldet/singular.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ldet {

namespace {
constexpr double pi = std::numbers::pi;
constexpr double sphere_area = 2.0 * pi * pi; // |S³|

void require_monotone(const GammaWeights& gamma)
{
    if (!gamma.monotone_regime())
        throw std::domain_error("beta_to_alpha: requires γ3 ≠ 0 and γ2/γ3 ≥ 6 (monotone cubic)");
}

// P(s) = (5 + 15s² − 5s⁴ + s⁶)/16 and its derivatives
double poly_p(double s, int order)
{
    const double s2 = s * s;
    switch (order) {
    case 0: return (5.0 + s2 * (15.0 + s2 * (-5.0 + s2))) / 16.0;
    case 1: return s * (30.0 + s2 * (-20.0 + 6.0 * s2)) / 16.0;
    case 2: return (30.0 + s2 * (-60.0 + 30.0 * s2)) / 16.0;
    case 3: return s * (-120.0 + 120.0 * s2) / 16.0;
    case 4: return (-120.0 + 360.0 * s2) / 16.0;
    default: throw std::invalid_argument("d_tilde_derivative: order must be 0..4");
    }
}

// 4π²(γ2 − 6γ3) t + 24π²γ3 t³
double shifted_odd_part(double t, const GammaWeights& gamma)
{
    return 4.0 * pi * pi * t * ((gamma.g2 - 6.0 * gamma.g3) + 6.0 * gamma.g3 * t * t);
}

double periodic_distance(const Vec4& x, const Vec4& y, double L)
{
    return L > 0.0 ? periodic_delta(x, y, L).norm() : (x - y).norm();
}
} // namespace

// Expanded about the inflection point α = −1:
//   β = 4π²γ2 − 4π²(γ2 − 6γ3) t − 24π²γ3 t³,  t = α + 1.
// At γ2 = 6γ3 (conformal Laplacian) the monomial form loses α to ~ulp^{1/3}
// near α = −1; this form keeps the inverse well conditioned.
double alpha_to_beta(double alpha, const GammaWeights& gamma)
{
    const double t = alpha + 1.0;
    return 4.0 * pi * pi * gamma.g2 - shifted_odd_part(t, gamma);
}

double alpha_to_beta_derivative(double alpha, const GammaWeights& gamma)
{
    const double g2 = gamma.g2, g3 = gamma.g3;
    return -4.0 * pi * pi * ((g2 + 12.0 * g3) + 36.0 * g3 * alpha + 18.0 * g3 * alpha * alpha);
}

double beta_to_alpha(double beta, const GammaWeights& gamma)
{
    require_monotone(gamma);
    // Solve q(t) := shifted_odd_part(t) = rhs; q is odd and non-decreasing
    // (q' = 4π²(γ2 − 6γ3) + 72π²γ3 t² has the sign of γ3 everywhere).
    const double rhs = 4.0 * pi * pi * gamma.g2 - beta;
    const double s = gamma.g3 > 0.0 ? 1.0 : -1.0;
    const double lin = gamma.g2 - 6.0 * gamma.g3;
    if (lin == 0.0)
        return std::cbrt(rhs / (24.0 * pi * pi * gamma.g3)) - 1.0;
    auto f = [&](double t) { return s * (shifted_odd_part(t, gamma) - rhs); };
    auto df = [&](double t) { return s * 4.0 * pi * pi * (lin + 18.0 * gamma.g3 * t * t); };
    double lo = -1.0, hi = 1.0;
    while (f(lo) > 0.0)
        lo *= 2.0;
    while (f(hi) < 0.0)
        hi *= 2.0;
    double t = rhs == 0.0 ? 0.0 : 0.5 * (lo + hi);
    for (int it = 0; it < 300; ++it) {
        const double ft = f(t);
        if (ft == 0.0)
            break;
        (ft < 0.0 ? lo : hi) = t;
        const double d = df(t);
        if (d < 0.0)
            throw std::logic_error("beta_to_alpha: monotonicity certificate failed");
        double next = d > 0.0 ? t - ft / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        const bool done = std::abs(next - t) <= 1e-16 * std::max(1.0, std::abs(t));
        t = next;
        if (done || hi - lo <= 4e-16 * std::max(1.0, std::abs(t)))
            break;
    }
    return t - 1.0;
}

double d_tilde(double r, double rho0)
{
    return d_tilde_derivative(r, rho0, 0);
}

double d_tilde_derivative(double r, double rho0, int order)
{
    if (!(rho0 > 0.0))
        throw std::invalid_argument("d_tilde: smoothing radius must be positive");
    r = std::abs(r);
    if (r >= rho0)
        return order == 0 ? r : (order == 1 ? 1.0 : 0.0);
    return std::pow(rho0, 1 - order) * poly_p(r / rho0, order);
}

Jet radial_jet(const Vec4& x, double f0, double f1, double f2, double f3, double f4)
{
    const double r = x.norm();
    if (!(r > 0.0))
        throw std::domain_error("radial_jet: the centre itself is excluded");
    const Vec4 e = x / r;
    Jet j;
    j.u = f0;
    j.grad = f1 * e;
    const Eigen::Matrix4d P = e * e.transpose();
    j.hess = f2 * P + (f1 / r) * (Eigen::Matrix4d::Identity() - P);
    j.grad_lap = (f3 + 3.0 * f2 / r - 3.0 * f1 / (r * r)) * e;
    j.bilap = f4 + 6.0 * f3 / r + 3.0 * f2 / (r * r) - 3.0 * f1 / (r * r * r);
    return j;
}

JetFn radial_log(double alpha, const Vec4& center)
{
    return [alpha, center](const Vec4& x) {
        const Vec4 y = x - center;
        const double r = y.norm();
        if (!(r > 0.0))
            throw std::domain_error("radial_log: evaluated at the singular point");
        // exact Cartesian forms (no cancellation in Δ² = 0)
        Jet j;
        const double r2 = r * r;
        j.u = alpha * std::log(r);
        j.grad = alpha * y / r2;
        j.hess = alpha * (Eigen::Matrix4d::Identity() / r2 - 2.0 * y * y.transpose() / (r2 * r2));
        j.grad_lap = -4.0 * alpha * y / (r2 * r2);
        j.bilap = 0.0;
        return j;
    };
}

// --- singular data -------------------------------------------------------------

SingularData SingularData::from_betas(std::vector<Vec4> points, std::vector<double> betas, const GammaWeights& gamma,
                                      double smoothing)
{
    if (points.size() != betas.size())
        throw std::invalid_argument("SingularData: points and betas differ in length");
    SingularData d;
    d.points = std::move(points);
    d.betas = std::move(betas);
    d.smoothing = smoothing;
    for (double b : d.betas)
        d.alphas.push_back(beta_to_alpha(b, gamma));
    return d;
}

SingularData SingularData::from_alphas(std::vector<Vec4> points, std::vector<double> alphas, const GammaWeights& gamma,
                                       double smoothing)
{
    if (points.size() != alphas.size())
        throw std::invalid_argument("SingularData: points and alphas differ in length");
    SingularData d;
    d.points = std::move(points);
    d.alphas = std::move(alphas);
    d.smoothing = smoothing;
    for (double a : d.alphas)
        d.betas.push_back(alpha_to_beta(a, gamma));
    return d;
}

void SingularData::validate(const GammaWeights& gamma, double L) const
{
    if (!(smoothing > 0.0))
        throw std::invalid_argument("SingularData: smoothing radius must be positive");
    if (points.size() != alphas.size() || points.size() != betas.size())
        throw std::invalid_argument("SingularData: points, alphas and betas differ in length");
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double b = alpha_to_beta(alphas[i], gamma);
        if (std::abs(b - betas[i]) > 1e-10 * std::max(1.0, std::abs(betas[i])))
            throw std::invalid_argument("SingularData: (alpha, beta) pair " + std::to_string(i) +
                                        " does not satisfy the cubic");
        for (std::size_t j = 0; j < i; ++j)
            if (periodic_distance(points[i], points[j], L) <= 4.0 * smoothing)
                throw std::invalid_argument("SingularData: smoothing regions of points " + std::to_string(j) +
                                            " and " + std::to_string(i) + " overlap");
    }
}

nlohmann::json to_json(const SingularData& d)
{
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec4& p : d.points)
        pts.push_back({p[0], p[1], p[2], p[3]});
    return {{"points", pts}, {"alphas", d.alphas}, {"betas", d.betas}, {"smoothing", d.smoothing}};
}

SingularData singular_data_from_json(const nlohmann::json& j)
{
    SingularData d;
    for (const auto& p : j.at("points")) {
        if (p.size() != 4)
            throw std::invalid_argument("SingularData: points must have 4 coordinates");
        d.points.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>());
    }
    d.alphas = j.at("alphas").get<std::vector<double>>();
    d.betas = j.at("betas").get<std::vector<double>>();
    d.smoothing = j.at("smoothing").get<double>();
    return d;
}

ScalarField build_w0(const SingularData& data, const Grid4& g)
{
    if (data.points.size() != data.alphas.size())
        throw std::invalid_argument("build_w0: points and alphas differ in length");
    for (std::size_t i = 0; i < data.points.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (periodic_distance(data.points[i], data.points[j], g.period()) <= 4.0 * data.smoothing)
                throw std::invalid_argument("build_w0: overlapping smoothing regions");
    if (!(data.smoothing > 0.0) || data.smoothing >= g.period() / 4)
        throw std::invalid_argument("build_w0: smoothing radius must lie in (0, L/4)");
    return ScalarField::from_function(g, [&](const Vec4& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < data.points.size(); ++i)
            if (data.alphas[i] != 0.0)
                s += data.alphas[i] * std::log(d_tilde(periodic_distance(x, data.points[i], g.period()), data.smoothing));
        return s;
    });
}

RadialProfile build_w0_profile(double alpha, double smoothing, const std::vector<double>& radii)
{
    std::vector<double> v;
    v.reserve(radii.size());
    for (double r : radii) {
        if (!(r > 0.0))
            throw std::invalid_argument("build_w0_profile: radii must be positive");
        v.push_back(alpha * std::log(d_tilde(r, smoothing)));
    }
    return RadialProfile(radii, v);
}

double flux_of(const JetFn& w, const GammaWeights& gamma, double eps, const Vec4& center)
{
    if (!(eps > 0.0))
        throw std::invalid_argument("flux: radius must be positive");
    const double a = gamma.g2 / 2.0 + 6.0 * gamma.g3, b = 6.0 * gamma.g3, c = 12.0 * gamma.g3;
    const SphereRule& rule = SphereRule::standard();
    return sphere_integral(
        [&](const Vec4& x, const Vec4& nu) {
            const Jet j = w(x);
            const double dnu = j.grad.dot(nu);
            const Vec4 grad_sq = 2.0 * j.hess * j.grad; // ∇|∇w|²
            return nu.dot(a * j.grad_lap + b * grad_sq) - c * (j.lap() + j.grad.squaredNorm()) * dnu;
        },
        eps, center, rule);
}

double flux_beta(double alpha, const GammaWeights& gamma, double eps)
{
    return flux_of(radial_log(alpha), gamma, eps);
}

// --- slope fitting -------------------------------------------------------------

std::vector<double> geometric_radii(double r0, double q, int count)
{
    if (!(r0 > 0.0) || !(q > 0.0 && q < 1.0) || count < 1)
        throw std::invalid_argument("geometric_radii: need r0 > 0, 0 < q < 1, count ≥ 1");
    std::vector<double> r(count);
    for (int i = 0; i < count; ++i)
        r[i] = r0 * std::pow(q, i);
    return r;
}

namespace {

int basis_size(SlopeBasis b)
{
    switch (b) {
    case SlopeBasis::log_const: return 2;
    case SlopeBasis::log_const_r2: return 3;
    case SlopeBasis::biharmonic: return 4;
    case SlopeBasis::quasilinear: return 5;
    }
    return 2;
}

void check_radii(const std::vector<double>& radii, SlopeBasis basis)
{
    if (static_cast<int>(radii.size()) < basis_size(basis) + 1)
        throw std::invalid_argument("asymptotic_slope: need more radii than basis functions");
    const double q = radii[1] / radii[0];
    if (!(radii.back() > 0.0) || !(q < 1.0))
        throw std::invalid_argument("asymptotic_slope: radii must be positive and decreasing");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (std::abs(radii[i] / radii[i - 1] - q) > 1e-9)
            throw std::invalid_argument("asymptotic_slope: radii must form a geometric sequence");
}

SlopeFit fit(std::vector<double> radii, std::vector<double> means, std::vector<double> dmeans, SlopeBasis basis)
{
    const int m = static_cast<int>(radii.size()), k = basis_size(basis);
    Eigen::MatrixXd A(m, k);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        const double r = radii[i];
        A(i, 0) = std::log(r);
        A(i, 1) = 1.0;
        if (k > 2)
            A(i, 2) = r * r;
        if (k > 3)
            A(i, 3) = 1.0 / (r * r);
        if (k > 4)
            A(i, 4) = r * r * std::log(r);
        y[i] = means[i];
    }
    // column scaling keeps the normal equations out of it
    Eigen::VectorXd scale = A.colwise().norm().transpose();
    for (int j = 0; j < k; ++j)
        A.col(j) /= scale[j];
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd res = y - A * c;
    c = c.cwiseQuotient(scale);

    SlopeFit f;
    f.alpha = c[0];
    f.coeffs = c;
    f.radii = std::move(radii);
    f.means = std::move(means);
    f.residuals.assign(res.data(), res.data() + m);
    f.rms_residual = std::sqrt(res.squaredNorm() / m);
    for (int i = 0; i < m; ++i)
        f.k1.push_back(f.radii[i] * std::abs(dmeans[i] - f.alpha / f.radii[i]));
    return f;
}

} // namespace

std::string SlopeFit::to_csv() const
{
    std::ostringstream os;
    os.precision(17);
    os << "r,mean,residual,k1\n";
    for (std::size_t i = 0; i < radii.size(); ++i)
        os << radii[i] << ',' << means[i] << ',' << residuals[i] << ',' << k1[i] << '\n';
    return os.str();
}

SlopeFit asymptotic_slope(const ScalarField& w, const Vec4& p, const std::vector<double>& radii, SlopeBasis basis)
{
    check_radii(radii, basis);
    const Grid4& g = w.grid();
    if (radii.back() < 2.0 * g.spacing())
        throw std::invalid_argument("asymptotic_slope: smallest radius below two grid spacings (under-resolved)");
    if (radii.front() >= g.period() / 2)
        throw std::invalid_argument("asymptotic_slope: largest radius must stay below L/2");
    // Spherical means of the trigonometric interpolant are exact Fourier
    // multipliers: mean over S³_r of e^{ik·x} is e^{ik·p}·2J₁(|k|r)/(|k|r).
    const double k0 = 2.0 * pi / g.period();
    std::vector<double> means, dmeans;
    for (double r : radii) {
        std::unordered_map<long, std::pair<double, double>> cache;
        auto symbols = [&](const Vec4& k) -> const std::pair<double, double>& {
            const long key = std::lround(k.squaredNorm() / (k0 * k0));
            auto it = cache.find(key);
            if (it != cache.end())
                return it->second;
            const double z = k.norm() * r;
            std::pair<double, double> v{1.0, 0.0};
            if (z > 0.0)
                v = {2.0 * std::cyl_bessel_j(1.0, z) / z, -2.0 * std::cyl_bessel_j(2.0, z) / r};
            return cache.emplace(key, v).first->second;
        };
        const ScalarField M = apply_symbol(w, [&](const Vec4& k) { return symbols(k).first; });
        const ScalarField dM = apply_symbol(w, [&](const Vec4& k) { return symbols(k).second; });
        means.push_back(interpolate(M, {p})[0]);
        dmeans.push_back(interpolate(dM, {p})[0]);
    }
    return fit(radii, std::move(means), std::move(dmeans), basis);
}

SlopeFit asymptotic_slope(const std::function<double(const Vec4&)>& w, const Vec4& p,
                          const std::vector<double>& radii, SlopeBasis basis)
{
    check_radii(radii, basis);
    const SphereRule& rule = SphereRule::standard();
    auto mean = [&](double r) {
        return sphere_integral([&](const Vec4& x, const Vec4&) { return w(x); }, r, p, rule) / (sphere_area * r * r * r);
    };
    std::vector<double> means, dmeans;
    for (double r : radii) {
        means.push_back(mean(r));
        const double h = 1e-4 * r;
        dmeans.push_back((mean(r + h) - mean(r - h)) / (2.0 * h));
    }
    return fit(radii, std::move(means), std::move(dmeans), basis);
}

// --- rescaling -----------------------------------------------------------------

Rescaled::Rescaled(const ScalarField& w, const Vec4& p, double r) : w_(w), p_(p), r_(r)
{
    if (!(r > 0.0))
        throw std::invalid_argument("rescale: r must be positive");
    if (r >= w.grid().period() / 2)
        throw std::invalid_argument("rescale: window B_r(p) exceeds the fundamental domain");
}

double Rescaled::operator()(const Vec4& y) const
{
    return (*this)(std::vector<Vec4>{y})[0];
}

std::vector<double> Rescaled::operator()(const std::vector<Vec4>& ys) const
{
    std::vector<Vec4> xs;
    xs.reserve(ys.size());
    for (const Vec4& y : ys)
        xs.push_back(p_ + r_ * y);
    std::vector<double> v = interpolate(w_, xs);
    const double lr = std::log(r_);
    for (double& x : v)
        x += lr;
    return v;
}

Rescaled rescale(const ScalarField& w, const Vec4& p, double r)
{
    return Rescaled(w, p, r);
}

RadialProfile rescale(const RadialProfile& w, double r)
{
    if (!(r > 0.0))
        throw std::invalid_argument("rescale: r must be positive");
    std::vector<double> s, v;
    const double lr = std::log(r);
    for (std::size_t i = 0; i < w.radii().size(); ++i) {
        s.push_back(w.radii()[i] / r);
        v.push_back(w.values()[i] + lr);
    }
    return RadialProfile(s, v);
}

} // namespace ldet
