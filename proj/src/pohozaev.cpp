#include "ldet/pohozaev.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ldet {

namespace {
constexpr double pi = std::numbers::pi;

struct NValue {
    double value, magnitude; // 𝒩 and the sum of |terms|
};

NValue flat_N_terms(const Jet& j, const GammaWeights& gamma)
{
    const double g3 = gamma.g3, c1 = gamma.g2 / 2.0 + 6.0 * g3;
    const double lap = j.lap(), gsq = j.grad.squaredNorm();
    const double p[] = {c1 * j.bilap,
                        12.0 * g3 * j.hess.squaredNorm(),
                        12.0 * g3 * j.grad.dot(j.grad_lap),
                        -12.0 * g3 * j.grad_lap.dot(j.grad),
                        -24.0 * g3 * j.grad.dot(j.hess * j.grad),
                        -12.0 * g3 * (lap + gsq) * lap};
    NValue n{0.0, 0.0};
    for (double t : p) {
        n.value += t;
        n.magnitude += std::abs(t);
    }
    return n;
}

bool finite(const Jet& j)
{
    return std::isfinite(j.u) && j.grad.allFinite() && j.hess.allFinite() && j.grad_lap.allFinite() &&
           std::isfinite(j.bilap);
}

// the spheres bounding Ω with their orientation (+1 outer, −1 inner)
std::vector<std::pair<double, double>> spheres(const PohozaevDomain& omega)
{
    std::vector<std::pair<double, double>> s{{omega.radius, 1.0}};
    if (omega.inner > 0.0)
        s.emplace_back(omega.inner, -1.0);
    return s;
}
} // namespace

double flat_N(const Jet& j, const GammaWeights& gamma)
{
    return flat_N_terms(j, gamma).value;
}

// --- jets ---------------------------------------------------------------------

JetFn plane_wave_sum(std::vector<PlaneWave> waves)
{
    return [waves = std::move(waves)](const Vec4& x) {
        Jet j;
        for (const PlaneWave& w : waves) {
            const double th = w.k.dot(x) + w.phase;
            const double c = w.amplitude * std::cos(th), s = w.amplitude * std::sin(th);
            const double k2 = w.k.squaredNorm();
            j.u += c;
            j.grad -= s * w.k;
            j.hess -= c * w.k * w.k.transpose();
            j.grad_lap += s * k2 * w.k;
            j.bilap += c * k2 * k2;
        }
        return j;
    };
}

std::vector<PlaneWave> random_plane_waves(int count, int kmax, double amp, std::uint64_t seed)
{
    if (count < 0 || kmax < 0)
        throw std::invalid_argument("random_plane_waves: count and kmax must be non-negative");
    NormalStream rng(seed);
    std::vector<PlaneWave> w;
    for (int i = 0; i < count; ++i) {
        PlaneWave p;
        for (int a = 0; a < 4; ++a)
            p.k[a] = std::min(kmax, static_cast<int>(rng.uniform() * (2 * kmax + 1))) - kmax;
        p.amplitude = amp * rng.next();
        p.phase = 2.0 * pi * rng.uniform();
        w.push_back(p);
    }
    return w;
}

JetFn gaussian_bump(double amplitude, const Vec4& center, double width)
{
    if (!(width > 0.0))
        throw std::invalid_argument("gaussian_bump: width must be positive");
    const double b = 1.0 / (width * width);
    return [=](const Vec4& x) {
        const Vec4 y = x - center;
        const double r2 = y.squaredNorm();
        const double u = amplitude * std::exp(-0.5 * b * r2);
        Jet j;
        j.u = u;
        j.grad = -b * u * y;
        j.hess = u * (b * b * y * y.transpose() - b * Eigen::Matrix4d::Identity());
        j.grad_lap = u * b * b * (6.0 - b * r2) * y;
        const double g = b * b * r2 - 4.0 * b;
        j.bilap = u * (g * g - 4.0 * b * b * b * r2 + 8.0 * b * b);
        return j;
    };
}

JetFn jet_sum(JetFn a, JetFn b)
{
    return [a = std::move(a), b = std::move(b)](const Vec4& x) {
        Jet p = a(x);
        const Jet q = b(x);
        p.u += q.u;
        p.grad += q.grad;
        p.hess += q.hess;
        p.grad_lap += q.grad_lap;
        p.bilap += q.bilap;
        return p;
    };
}

// --- domain -------------------------------------------------------------------

void PohozaevDomain::validate() const
{
    if (!(radius > 0.0))
        throw std::invalid_argument("PohozaevDomain: radius must be positive");
    if (!(inner >= 0.0 && inner < radius))
        throw std::invalid_argument("PohozaevDomain: inner radius must lie in [0, radius)");
}

nlohmann::json PohozaevDomain::to_json() const
{
    nlohmann::json j{{"center", {center[0], center[1], center[2], center[3]}},
                     {"radius", radius},
                     {"inner", inner},
                     {"variant", shift ? "translation" : "dilation"}};
    if (shift)
        j["shift"] = {(*shift)[0], (*shift)[1], (*shift)[2], (*shift)[3]};
    return j;
}

BoundaryGroups boundary_groups(const JetFn& u, const GammaWeights& gamma, const PohozaevDomain& omega,
                               const PohozaevQuadrature& q)
{
    omega.validate();
    const SphereRule rule = SphereRule::make(q.nt, q.ns, q.nphi);
    const double g3 = gamma.g3, c1 = gamma.g2 / 2.0 + 6.0 * g3;
    const bool dilation = !omega.shift.has_value();
    BoundaryGroups out;
    for (auto [r, orient] : spheres(omega)) {
        double A = 0.0, Bq = 0.0, C = 0.0;
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const Vec4 nu = orient * rule.nodes[k];
            const Vec4 x = omega.center + r * rule.nodes[k];
            const Jet j = u(x);
            if (!finite(j))
                throw std::domain_error("boundary_term: jet is not finite on the boundary");
            const Vec4 V = dilation ? Vec4(x - omega.center) : *omega.shift;
            const double X = V.dot(j.grad), Vn = V.dot(nu), dnu = j.grad.dot(nu);
            const double lap = j.lap(), gsq = j.grad.squaredNorm();
            const double dX = nu.dot(j.hess * V) + (dilation ? dnu : 0.0);
            const double a = X * nu.dot(j.grad_lap) - lap * dX + 0.5 * lap * lap * Vn;
            const double b = gsq * dnu * X - 0.25 * gsq * gsq * Vn;
            const double c = X * (2.0 * nu.dot(j.hess * j.grad) - 2.0 * lap * dnu) +
                             gsq * (Vn * lap - (dilation ? dnu : 0.0) - nu.dot(j.hess * V));
            const double w = rule.weights[k];
            A += w * a;
            Bq += w * b;
            C += w * c;
        }
        const double r3 = r * r * r;
        out.biharmonic += c1 * A * r3;
        out.quartic += -12.0 * g3 * Bq * r3;
        out.mixed += 6.0 * g3 * C * r3;
    }
    return out;
}

double boundary_term(const JetFn& u, const GammaWeights& gamma, const PohozaevDomain& omega,
                     const PohozaevQuadrature& q)
{
    return boundary_groups(u, gamma, omega, q).total();
}

nlohmann::json PohozaevReport::to_json() const
{
    return {{"boundary_value", boundary_value},
            {"boundary_groups",
             {{"biharmonic", groups.biharmonic}, {"quartic", groups.quartic}, {"mixed", groups.mixed}}},
            {"volume_terms", volume_terms},
            {"residual", residual},
            {"relative_residual", relative_residual()},
            {"scale", scale},
            {"forcing_defect", forcing_defect},
            {"domain", domain.to_json()}};
}

PohozaevReport pohozaev_residual(const JetFn& u, double mu, const std::function<double(const Vec4&)>& f_extra,
                                 const GammaWeights& gamma, const PohozaevDomain& omega,
                                 const PohozaevQuadrature& q, double consistency_tol)
{
    omega.validate();
    PohozaevReport rep;
    rep.domain = omega;
    rep.groups = boundary_groups(u, gamma, omega, q);
    rep.boundary_value = rep.groups.total();
    const bool dilation = !omega.shift.has_value();
    const SphereRule rule = SphereRule::make(q.nt, q.ns, q.nphi);

    // bulk: ∫ e^{4u}, ∫ X f_extra, and the forcing consistency at the nodes
    const GaussRule gr = gauss_legendre(q.nr, omega.inner, omega.radius);
    double bulk_exp = 0.0, forcing = 0.0, defect = 0.0, nscale = 0.0;
    for (std::size_t i = 0; i < gr.x.size(); ++i) {
        const double r = gr.x[i], shell_w = gr.w[i] * r * r * r;
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const Vec4 x = omega.center + r * rule.nodes[k];
            const Jet j = u(x);
            const Vec4 V = dilation ? Vec4(x - omega.center) : *omega.shift;
            const double e4 = std::exp(4.0 * j.u), f = f_extra ? f_extra(x) : 0.0;
            const NValue n = flat_N_terms(j, gamma);
            defect = std::max(defect, std::abs(n.value - mu * e4 - f));
            nscale = std::max({nscale, n.magnitude, std::abs(mu * e4), std::abs(f)});
            const double w = shell_w * rule.weights[k];
            bulk_exp += w * e4;
            forcing += w * V.dot(j.grad) * f;
        }
    }
    double boundary_exp = 0.0;
    for (auto [r, orient] : spheres(omega)) {
        boundary_exp += orient * sphere_integral(
                                     [&](const Vec4& x, const Vec4& nu) {
                                         const Vec4 V = dilation ? Vec4(x - omega.center) : *omega.shift;
                                         return std::exp(4.0 * u(x).u) * V.dot(nu);
                                     },
                                     r, omega.center, rule);
    }
    rep.forcing_defect = nscale > 0.0 ? defect / nscale : defect;
    if (rep.forcing_defect > consistency_tol)
        throw std::invalid_argument("pohozaev_residual: u does not solve N(u) = mu e^{4u} + f_extra (relative defect " +
                                    std::to_string(rep.forcing_defect) + ")");

    rep.volume_terms["bulk_exp"] = dilation ? -mu * bulk_exp : 0.0;
    rep.volume_terms["boundary_exp"] = 0.25 * mu * boundary_exp;
    rep.volume_terms["forcing"] = forcing;
    // metric-expansion remainders: O(|x|²) in the volume element and O(|x|)
    // corrections to x^i u_{;i}; both carry curvature factors that vanish here
    rep.volume_terms["remainder_volume_metric"] = 0.0;
    rep.volume_terms["remainder_boundary_metric"] = 0.0;
    rep.volume_terms["remainder_covariant_derivative"] = 0.0;

    double rhs = 0.0;
    rep.scale = std::abs(rep.boundary_value);
    for (const auto& [name, v] : rep.volume_terms) {
        rhs += v;
        rep.scale = std::max(rep.scale, std::abs(v));
    }
    for (double g : {rep.groups.biharmonic, rep.groups.quartic, rep.groups.mixed})
        rep.scale = std::max(rep.scale, std::abs(g));
    rep.residual = rep.boundary_value - rhs;
    return rep;
}

// --- quantization ---------------------------------------------------------------

std::vector<double> real_polynomial_roots(std::vector<double> c)
{
    while (!c.empty() && c.back() == 0.0)
        c.pop_back();
    if (c.size() < 2)
        return {};
    const int deg = static_cast<int>(c.size()) - 1;
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 1; i < deg; ++i)
        comp(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i)
        comp(i, deg - 1) = -c[i] / c[deg];
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(comp, false).eigenvalues();
    auto p = [&](double x) {
        double v = 0.0, d = 0.0;
        for (int i = deg; i >= 0; --i) {
            d = d * x + v;
            v = v * x + c[i];
        }
        return std::pair{v, d};
    };
    std::vector<double> roots;
    for (const auto& z : ev) {
        if (std::abs(z.imag()) > 1e-6 * std::max(1.0, std::abs(z)))
            continue;
        double x = z.real();
        for (int it = 0; it < 50; ++it) {
            const auto [v, d] = p(x);
            if (d == 0.0)
                break;
            const double step = v / d;
            x -= step;
            if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x)))
                break;
        }
        // merge numerically repeated roots
        if (std::none_of(roots.begin(), roots.end(),
                         [&](double y) { return std::abs(y - x) <= 1e-9 * std::max(1.0, std::abs(x)); }))
            roots.push_back(x);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

nlohmann::json QuantizationReport::to_json() const
{
    return {{"beta_star", beta_star},
            {"cubic_roots", cubic_roots},
            {"quartic_roots", quartic_roots},
            {"common_nonzero", common_nonzero},
            {"unique_minus_two", unique_minus_two}};
}

QuantizationReport quantization_consistency(const GammaWeights& gamma)
{
    if (!gamma.monotone_regime())
        throw std::domain_error("quantization_consistency: requires γ3 ≠ 0 and γ2/γ3 ≥ 6");
    const double g2 = gamma.g2, g3 = gamma.g3, P = pi * pi;
    QuantizationReport rep;
    rep.beta_star = 8.0 * P * g2;
    // cubic(α) − β* and quartic(α) − β*, ascending
    rep.cubic_roots = real_polynomial_roots(
        {-rep.beta_star, -4.0 * P * (g2 + 12.0 * g3), -4.0 * P * 18.0 * g3, -4.0 * P * 6.0 * g3});
    rep.quartic_roots = real_polynomial_roots(
        {-rep.beta_star, 0.0, 2.0 * P * (g2 + 12.0 * g3), 2.0 * P * 24.0 * g3, 2.0 * P * 9.0 * g3});
    // (quartic − cubic)/(2π²α) = 9γ3α³ + 36γ3α² + (γ2+48γ3)α + 2(γ2+12γ3)
    for (double a : real_polynomial_roots({2.0 * (g2 + 12.0 * g3), g2 + 48.0 * g3, 36.0 * g3, 9.0 * g3}))
        if (a != 0.0)
            rep.common_nonzero.push_back(a);
    // cross-check against the two root lists
    auto contains = [](const std::vector<double>& v, double x) {
        return std::any_of(v.begin(), v.end(), [&](double y) { return std::abs(y - x) < 1e-9; });
    };
    rep.unique_minus_two = rep.common_nonzero.size() == 1 && std::abs(rep.common_nonzero[0] + 2.0) < 1e-10 &&
                           rep.cubic_roots.size() == 1 && contains(rep.cubic_roots, -2.0) &&
                           contains(rep.quartic_roots, -2.0);
    return rep;
}

} // namespace ldet
