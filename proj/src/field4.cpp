#include "ldet/field4.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

namespace ldet {

namespace {

constexpr double kPi = std::numbers::pi;

// Plans are built once per grid size with FFTW_ESTIMATE (deterministic
// algorithm choice) and FFTW_UNALIGNED so they can run on any buffer via the
// thread-safe new-array execute functions.
struct Plans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
    fftw_plan c2c_back = nullptr;
};

const Plans& plans_for(int n)
{
    static std::mutex mtx;
    static std::map<int, Plans> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end())
        return it->second;
    const int dims[4] = {n, n, n, n};
    const std::size_t N = std::size_t(n) * n * n * n;
    const std::size_t H = std::size_t(n) * n * n * (n / 2 + 1);
    double* r = fftw_alloc_real(N);
    fftw_complex* c = fftw_alloc_complex(std::max(N, H));
    fftw_complex* c2 = fftw_alloc_complex(N);
    Plans p;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    p.r2c = fftw_plan_dft_r2c(4, dims, r, c, flags);
    p.c2r = fftw_plan_dft_c2r(4, dims, c, r, flags);
    p.c2c_back = fftw_plan_dft(4, dims, c, c2, FFTW_BACKWARD, flags);
    fftw_free(r);
    fftw_free(c);
    fftw_free(c2);
    if (!p.r2c || !p.c2r || !p.c2c_back)
        throw std::runtime_error("fftw: plan creation failed");
    return cache.emplace(n, p).first->second;
}

Eigen::ArrayXcd forward(const Grid4& g, const Eigen::ArrayXd& v)
{
    Eigen::ArrayXcd out(g.spectral_size());
    Eigen::ArrayXd in = v; // r2c may not preserve input for rank > 1
    fftw_execute_dft_r2c(plans_for(g.n()).r2c, in.data(),
                         reinterpret_cast<fftw_complex*>(out.data()));
    out /= double(g.size());
    return out;
}

Eigen::ArrayXd backward(const Grid4& g, Eigen::ArrayXcd spec)
{
    Eigen::ArrayXd out(g.size());
    fftw_execute_dft_c2r(plans_for(g.n()).c2r, reinterpret_cast<fftw_complex*>(spec.data()),
                         out.data());
    return out;
}

void require_same(const Grid4& a, const Grid4& b)
{
    if (a != b)
        throw std::invalid_argument("field grids differ");
}

// Visits every half-layout spectral index with its per-axis spectral indices.
template <class F>
void for_each_mode(const Grid4& g, F&& f)
{
    const int n = g.n(), h = g.half();
    std::size_t s = 0;
    for (int j0 = 0; j0 < n; ++j0)
        for (int j1 = 0; j1 < n; ++j1)
            for (int j2 = 0; j2 < n; ++j2)
                for (int j3 = 0; j3 < h; ++j3, ++s)
                    f(s, std::array<int, 4>{j0, j1, j2, j3});
}

double axis_k(const Grid4& g, int j) { return g.wavenumber(j); }

} // namespace

// --- Grid4 -----------------------------------------------------------------

Grid4::Grid4(int n, double period) : n_(n), L_(period)
{
    if (n < 8 || n % 2 != 0)
        throw std::invalid_argument("Grid4: n must be even and >= 8");
    if (!(period > 0.0))
        throw std::invalid_argument("Grid4: period must be positive");
    size_ = std::size_t(n) * n * n * n;
    k_.resize(n);
    for (int j = 0; j < n; ++j)
        k_[j] = 2.0 * kPi / L_ * (j <= n / 2 ? j : j - n);
}

std::array<int, 4> Grid4::unflatten(std::size_t flat) const
{
    std::array<int, 4> i{};
    for (int a = 3; a >= 0; --a) {
        i[a] = int(flat % n_);
        flat /= n_;
    }
    return i;
}

Vec4 Grid4::point(std::size_t flat) const
{
    const auto i = unflatten(flat);
    const double h = spacing();
    return Vec4(i[0] * h, i[1] * h, i[2] * h, i[3] * h);
}

// --- ScalarField -------------------------------------------------------------

ScalarField::ScalarField(const Grid4& g, double value)
    : grid_(g), values_(Eigen::ArrayXd::Constant(g.size(), value))
{
}

ScalarField::ScalarField(const Grid4& g, Eigen::ArrayXd values)
    : grid_(g), values_(std::move(values))
{
    if (std::size_t(values_.size()) != g.size())
        throw std::invalid_argument("ScalarField: value count does not match grid");
}

ScalarField ScalarField::from_function(const Grid4& g, const std::function<double(const Vec4&)>& f)
{
    Eigen::ArrayXd v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        v[i] = f(g.point(i));
    return ScalarField(g, std::move(v));
}

ScalarField ScalarField::from_spectrum(const Grid4& g, const Eigen::ArrayXcd& coeffs)
{
    if (std::size_t(coeffs.size()) != g.spectral_size())
        throw std::invalid_argument("from_spectrum: wrong coefficient count");
    return ScalarField(g, backward(g, coeffs));
}

const Eigen::ArrayXcd& ScalarField::spectrum() const
{
    std::call_once(cache_->once, [this] { cache_->coeffs = forward(grid_, values_); });
    return cache_->coeffs;
}

ScalarField operator+(const ScalarField& a, const ScalarField& b)
{
    require_same(a.grid(), b.grid());
    return ScalarField(a.grid(), a.values() + b.values());
}
ScalarField operator-(const ScalarField& a, const ScalarField& b)
{
    require_same(a.grid(), b.grid());
    return ScalarField(a.grid(), a.values() - b.values());
}
ScalarField operator*(const ScalarField& a, const ScalarField& b)
{
    require_same(a.grid(), b.grid());
    return ScalarField(a.grid(), a.values() * b.values());
}
ScalarField operator*(double s, const ScalarField& a) { return ScalarField(a.grid(), s * a.values()); }
ScalarField operator+(const ScalarField& a, double s) { return ScalarField(a.grid(), a.values() + s); }
ScalarField operator-(const ScalarField& a) { return ScalarField(a.grid(), -a.values()); }
ScalarField exp(const ScalarField& a) { return ScalarField(a.grid(), a.values().exp()); }

Eigen::ArrayXd VectorField::norm_sq() const
{
    Eigen::ArrayXd s = c[0].values().square();
    for (int i = 1; i < 4; ++i)
        s += c[i].values().square();
    return s;
}

int SymTensorField::slot(int i, int j)
{
    if (i > j)
        std::swap(i, j);
    // rows of the upper triangle: (0,0..3)=0..3, (1,1..3)=4..6, (2,2..3)=7..8, (3,3)=9
    static constexpr int start[4] = {0, 4, 7, 9};
    return start[i] + (j - i);
}

Eigen::ArrayXd SymTensorField::trace() const
{
    return (*this)(0, 0).values() + (*this)(1, 1).values() + (*this)(2, 2).values()
         + (*this)(3, 3).values();
}

Eigen::ArrayXd SymTensorField::contract(const SymTensorField& o) const
{
    Eigen::ArrayXd s = Eigen::ArrayXd::Zero(grid().size());
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            s += (*this)(i, j).values() * o(i, j).values();
    return s;
}

// --- spectral calculus ----------------------------------------------------

ScalarField derive(const ScalarField& f, const MultiIndex& m)
{
    int order = 0;
    for (int a : m) {
        if (a < 0)
            throw std::invalid_argument("derive: negative order");
        order += a;
    }
    if (order > 4)
        throw std::invalid_argument("derive: total order above 4 is not supported");
    if (order == 0)
        return f;
    const Grid4& g = f.grid();
    Eigen::ArrayXcd spec = f.spectrum();
    for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
        cplx sym(1.0, 0.0);
        for (int a = 0; a < 4; ++a) {
            if (m[a] == 0)
                continue;
            if ((m[a] % 2) && g.is_nyquist(j[a])) {
                sym = 0.0;
                break;
            }
            const double k = g.is_nyquist(j[a]) ? 2.0 * kPi / g.period() * (g.n() / 2)
                                                : axis_k(g, j[a]);
            sym *= std::pow(cplx(0.0, k), m[a]);
        }
        spec[s] *= sym;
    });
    return ScalarField(g, backward(g, std::move(spec)));
}

VectorField gradient(const ScalarField& f)
{
    VectorField v;
    for (int a = 0; a < 4; ++a) {
        MultiIndex m{0, 0, 0, 0};
        m[a] = 1;
        v[a] = derive(f, m);
    }
    return v;
}

SymTensorField hessian(const ScalarField& f)
{
    SymTensorField H;
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            MultiIndex m{0, 0, 0, 0};
            m[i] += 1;
            m[j] += 1;
            H(i, j) = derive(f, m);
        }
    return H;
}

namespace {
double ksq(const Grid4& g, const std::array<int, 4>& j)
{
    double s = 0.0;
    for (int a = 0; a < 4; ++a) {
        const double k = g.is_nyquist(j[a]) ? 2.0 * kPi / g.period() * (g.n() / 2) : g.wavenumber(j[a]);
        s += k * k;
    }
    return s;
}
} // namespace

ScalarField laplacian(const ScalarField& f)
{
    const Grid4& g = f.grid();
    Eigen::ArrayXcd spec = f.spectrum();
    for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) { spec[s] *= -ksq(g, j); });
    return ScalarField(g, backward(g, std::move(spec)));
}

ScalarField bilaplacian(const ScalarField& f)
{
    const Grid4& g = f.grid();
    Eigen::ArrayXcd spec = f.spectrum();
    for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
        const double k2 = ksq(g, j);
        spec[s] *= k2 * k2;
    });
    return ScalarField(g, backward(g, std::move(spec)));
}

ScalarField divergence(const VectorField& X)
{
    const Grid4& g = X.grid();
    Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(g.spectral_size());
    for (int a = 0; a < 4; ++a) {
        require_same(g, X[a].grid());
        const Eigen::ArrayXcd& c = X[a].spectrum();
        for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
            if (!g.is_nyquist(j[a]))
                acc[s] += cplx(0.0, g.wavenumber(j[a])) * c[s];
        });
    }
    return ScalarField(g, backward(g, std::move(acc)));
}

ScalarField helmholtz_potential(const VectorField& F)
{
    const Grid4& g = F.grid();
    Eigen::ArrayXcd kf = Eigen::ArrayXcd::Zero(g.spectral_size());
    Eigen::ArrayXd k2 = Eigen::ArrayXd::Zero(g.spectral_size());
    for (int a = 0; a < 4; ++a) {
        require_same(g, F[a].grid());
        const Eigen::ArrayXcd& c = F[a].spectrum();
        for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
            const double k = g.is_nyquist(j[a]) ? 0.0 : g.wavenumber(j[a]);
            kf[s] += k * c[s];
            k2[s] += k * k;
        });
    }
    // φ̂ = −i (k·F̂)/|k|² with the first-derivative symbols
    for (Eigen::Index s = 0; s < kf.size(); ++s)
        kf[s] = (k2[s] > 0.0) ? cplx(0.0, -1.0) * kf[s] / k2[s] : cplx(0.0, 0.0);
    return ScalarField(g, backward(g, std::move(kf)));
}

VectorField gradient_projection(const VectorField& F) { return gradient(helmholtz_potential(F)); }

ScalarField invert_bilaplacian(const ScalarField& f, double mean_tol)
{
    const double scale = std::max(f.max_abs(), 1e-300);
    if (std::abs(f.mean()) > mean_tol * scale)
        throw std::invalid_argument("invert_bilaplacian: input has nonzero mean");
    const Grid4& g = f.grid();
    Eigen::ArrayXcd spec = f.spectrum();
    for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
        const double k2 = ksq(g, j);
        spec[s] = (k2 > 0.0) ? spec[s] / (k2 * k2) : cplx(0.0, 0.0);
    });
    return ScalarField(g, backward(g, std::move(spec)));
}

ScalarField apply_symbol(const ScalarField& f, const std::function<double(const Vec4&)>& symbol)
{
    const Grid4& g = f.grid();
    Eigen::ArrayXcd spec = f.spectrum();
    for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
        Vec4 k;
        for (int a = 0; a < 4; ++a)
            k[a] = g.is_nyquist(j[a]) ? 2.0 * kPi / g.period() * (g.n() / 2) : g.wavenumber(j[a]);
        spec[s] *= symbol(k);
    });
    return ScalarField(g, backward(g, std::move(spec)));
}

ScalarField lowpass(const ScalarField& f, double fraction)
{
    const Grid4& g = f.grid();
    const double cut = fraction * (g.n() / 2);
    Eigen::ArrayXcd spec = f.spectrum();
    for_each_mode(g, [&](std::size_t s, const std::array<int, 4>& j) {
        for (int a = 0; a < 4; ++a) {
            const int jj = (j[a] <= g.n() / 2) ? j[a] : g.n() - j[a];
            if (jj > cut) {
                spec[s] = 0.0;
                return;
            }
        }
    });
    return ScalarField(g, backward(g, std::move(spec)));
}

double integrate_values(const Grid4& g, const Eigen::ArrayXd& v) { return v.sum() * g.cell_volume(); }

double integrate(const ScalarField& f) { return integrate_values(f.grid(), f.values()); }

double integrate(const ScalarField& f, const ScalarField& weight)
{
    require_same(f.grid(), weight.grid());
    return integrate_values(f.grid(), f.values() * weight.values());
}

double spectral_inner(const ScalarField& f, const ScalarField& g)
{
    require_same(f.grid(), g.grid());
    const Grid4& gr = f.grid();
    const Eigen::ArrayXcd& a = f.spectrum();
    const Eigen::ArrayXcd& b = g.spectrum();
    double acc = 0.0;
    const int n = gr.n();
    for_each_mode(gr, [&](std::size_t s, const std::array<int, 4>& j) {
        // modes with 0 < j3 < n/2 stand for themselves and their conjugates
        const double mult = (j[3] == 0 || 2 * j[3] == n) ? 1.0 : 2.0;
        acc += mult * (a[s] * std::conj(b[s])).real();
    });
    return acc * gr.volume();
}

std::vector<double> interpolate(const ScalarField& f, const std::vector<Vec4>& points)
{
    const Grid4& g = f.grid();
    const int n = g.n(), h = g.half();
    const Eigen::ArrayXcd& c = f.spectrum();
    std::vector<double> out(points.size());
    std::vector<cplx> E0(n), E1(n), E2(n), E3(h);
    auto fill = [&](std::vector<cplx>& E, int count, double x) {
        for (int j = 0; j < count; ++j) {
            if (g.is_nyquist(j)) {
                E[j] = std::cos(2.0 * kPi / g.period() * (n / 2) * x);
            } else {
                const double k = g.wavenumber(j);
                E[j] = cplx(std::cos(k * x), std::sin(k * x));
            }
        }
    };
    for (std::size_t p = 0; p < points.size(); ++p) {
        fill(E0, n, points[p][0]);
        fill(E1, n, points[p][1]);
        fill(E2, n, points[p][2]);
        fill(E3, h, points[p][3]);
        for (int j = 1; j < h - 1; ++j)
            E3[j] *= 2.0;
        double acc = 0.0;
        std::size_t s = 0;
        for (int j0 = 0; j0 < n; ++j0)
            for (int j1 = 0; j1 < n; ++j1) {
                const cplx e01 = E0[j0] * E1[j1];
                for (int j2 = 0; j2 < n; ++j2) {
                    const cplx e012 = e01 * E2[j2];
                    cplx inner(0.0, 0.0);
                    for (int j3 = 0; j3 < h; ++j3, ++s)
                        inner += c[s] * E3[j3];
                    acc += (inner * e012).real();
                }
            }
        out[p] = acc;
    }
    return out;
}

Vec4 periodic_delta(const Vec4& x, const Vec4& y, double L)
{
    Vec4 d = x - y;
    for (int a = 0; a < 4; ++a)
        d[a] -= L * std::round(d[a] / L);
    return d;
}

// --- random fields ---------------------------------------------------------------

std::string RandomRecipe::name() const
{
    return "gauss-kmax" + std::to_string(kmax) + "-amp" + std::to_string(amplitude) + "-decay"
         + std::to_string(decay);
}

namespace {
std::uint64_t splitmix(std::uint64_t& x)
{
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
} // namespace

NormalStream::NormalStream(std::uint64_t seed)
{
    std::uint64_t s = seed;
    for (auto& v : state_)
        v = splitmix(s);
}

// xoshiro256** step
std::uint64_t NormalStream::next_u64()
{
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double NormalStream::uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

double NormalStream::next()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
}

ScalarField random_field(const Grid4& g, const RandomRecipe& recipe, std::uint64_t seed)
{
    const int n = g.n();
    if (recipe.kmax < 1 || 2 * recipe.kmax >= n)
        throw std::invalid_argument("random_field: kmax out of range for the grid");
    NormalStream rng(seed);
    Eigen::ArrayXcd full = Eigen::ArrayXcd::Zero(g.size());
    const int K = recipe.kmax;
    auto wrap = [n](int k) { return k >= 0 ? k : k + n; };
    for (int a = -K; a <= K; ++a)
        for (int b = -K; b <= K; ++b)
            for (int c = -K; c <= K; ++c)
                for (int d = -K; d <= K; ++d) {
                    const double re = rng.next(), im = rng.next();
                    if (a == 0 && b == 0 && c == 0 && d == 0)
                        continue;
                    const double damp = std::exp(-recipe.decay * double(a * a + b * b + c * c + d * d));
                    full[g.index(wrap(a), wrap(b), wrap(c), wrap(d))] = damp * cplx(re, im);
                }
    Eigen::ArrayXcd out(g.size());
    fftw_execute_dft(plans_for(n).c2c_back, reinterpret_cast<fftw_complex*>(full.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    Eigen::ArrayXd v = out.real();
    v -= v.mean();
    const double m = v.abs().maxCoeff();
    if (m > 0.0)
        v *= recipe.amplitude / m;
    return ScalarField(g, std::move(v));
}

// --- radial profiles ------------------------------------------------------------

RadialProfile::RadialProfile(std::vector<double> radii, std::vector<double> values)
    : r_(std::move(radii)), v_(std::move(values))
{
    const std::size_t m = r_.size();
    if (m < 2 || v_.size() != m)
        throw std::invalid_argument("RadialProfile: need >= 2 matching samples");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(r_[i] > 0.0) || !std::isfinite(v_[i]))
            throw std::invalid_argument("RadialProfile: radii must be positive, values finite");
        if (i && !(r_[i] > r_[i - 1]))
            throw std::invalid_argument("RadialProfile: radii must increase strictly");
    }
    // Fritsch–Carlson slopes
    std::vector<double> delta(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i)
        delta[i] = (v_[i + 1] - v_[i]) / (r_[i + 1] - r_[i]);
    d_.assign(m, 0.0);
    d_[0] = delta[0];
    d_[m - 1] = delta[m - 2];
    for (std::size_t i = 1; i + 1 < m; ++i)
        d_[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        if (delta[i] == 0.0) {
            d_[i] = d_[i + 1] = 0.0;
            continue;
        }
        const double a = d_[i] / delta[i], b = d_[i + 1] / delta[i];
        const double s = a * a + b * b;
        if (s > 9.0) {
            const double t = 3.0 / std::sqrt(s);
            d_[i] = t * a * delta[i];
            d_[i + 1] = t * b * delta[i];
        }
    }
}

std::size_t RadialProfile::locate(double r) const
{
    if (r < r_.front() || r > r_.back())
        throw std::out_of_range("RadialProfile: radius outside sampled range");
    auto it = std::upper_bound(r_.begin(), r_.end(), r);
    std::size_t i = std::size_t(it - r_.begin());
    return std::min(i == 0 ? 0 : i - 1, r_.size() - 2);
}

double RadialProfile::operator()(double r) const
{
    const std::size_t i = locate(r);
    const double hh = r_[i + 1] - r_[i], t = (r - r_[i]) / hh;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    return h00 * v_[i] + h10 * hh * d_[i] + h01 * v_[i + 1] + h11 * hh * d_[i + 1];
}

double RadialProfile::derivative(double r) const
{
    const std::size_t i = locate(r);
    const double hh = r_[i + 1] - r_[i], t = (r - r_[i]) / hh;
    const double d00 = 6 * t * t - 6 * t, d10 = 3 * t * t - 4 * t + 1;
    const double d01 = -6 * t * t + 6 * t, d11 = 3 * t * t - 2 * t;
    return (d00 * v_[i] + d01 * v_[i + 1]) / hh + d10 * d_[i] + d11 * d_[i + 1];
}

// --- quadrature ---------------------------------------------------------------------

GaussRule gauss_legendre(int n, double a, double b)
{
    if (n < 1)
        throw std::invalid_argument("gauss_legendre: n >= 1");
    GaussRule g;
    g.x.resize(n);
    g.w.resize(n);
    if (n == 1) {
        g.x[0] = 0.5 * (a + b);
        g.w[0] = b - a;
        return g;
    }
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        g.x[i] = 0.5 * (b - a) * x + 0.5 * (b + a);
        g.w[i] = (b - a) / ((1.0 - x * x) * dp * dp);
    }
    return g;
}

SphereRule SphereRule::make(int nt, int ns, int nphi)
{
    if (nt < 1 || ns < 1 || nphi < 1)
        throw std::invalid_argument("SphereRule: sizes must be positive");
    SphereRule rule;
    const GaussRule gs = gauss_legendre(ns);
    for (int i = 1; i <= nt; ++i) {
        // Gauss–Chebyshev of the second kind: weight sqrt(1−t²) = sin²ψ dψ / dt
        const double ang = i * kPi / (nt + 1);
        const double t = std::cos(ang), st = std::sin(ang);
        const double wt = kPi / (nt + 1) * st * st;
        for (int j = 0; j < ns; ++j) {
            const double s = gs.x[j], ss = std::sqrt(std::max(0.0, 1.0 - s * s));
            for (int k = 0; k < nphi; ++k) {
                const double ph = 2.0 * kPi * k / nphi;
                rule.nodes.emplace_back(t, st * s, st * ss * std::cos(ph), st * ss * std::sin(ph));
                rule.weights.push_back(wt * gs.w[j] * 2.0 * kPi / nphi);
            }
        }
    }
    return rule;
}

const SphereRule& SphereRule::standard()
{
    static const SphereRule rule = make(8, 8, 16);
    return rule;
}

// --- serialisation ---------------------------------------------------------------------

namespace {
void write_components(const std::string& path, FieldKind kind, const std::vector<const ScalarField*>& comps)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path);
    const Grid4& g = comps.front()->grid();
    const char magic[4] = {'L', 'D', 'F', '4'};
    const std::uint32_t hdr[4] = {1u, std::uint32_t(g.n()), std::uint32_t(kind),
                                  std::uint32_t(comps.size())};
    const double L = g.period();
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    out.write(reinterpret_cast<const char*>(&L), sizeof(L));
    for (const ScalarField* c : comps)
        out.write(reinterpret_cast<const char*>(c->values().data()),
                  std::streamsize(sizeof(double) * c->size()));
}
} // namespace

void write_field(const std::string& path, const ScalarField& f)
{
    write_components(path, FieldKind::scalar, {&f});
}

void write_field(const std::string& path, const VectorField& f)
{
    write_components(path, FieldKind::vector, {&f[0], &f[1], &f[2], &f[3]});
}

void write_field(const std::string& path, const SymTensorField& f)
{
    std::vector<const ScalarField*> c;
    for (const auto& x : f.c)
        c.push_back(&x);
    write_components(path, FieldKind::sym_tensor, c);
}

std::vector<ScalarField> read_field(const std::string& path, FieldKind* kind)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    char magic[4];
    std::uint32_t hdr[4];
    double L = 0.0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    in.read(reinterpret_cast<char*>(&L), sizeof(L));
    if (!in || std::string(magic, 4) != "LDF4" || hdr[0] != 1u)
        throw std::runtime_error("not a field container: " + path);
    if (kind)
        *kind = FieldKind(hdr[2]);
    const Grid4 g(int(hdr[1]), L);
    std::vector<ScalarField> out;
    for (std::uint32_t c = 0; c < hdr[3]; ++c) {
        Eigen::ArrayXd v(g.size());
        in.read(reinterpret_cast<char*>(v.data()), std::streamsize(sizeof(double) * g.size()));
        if (!in)
            throw std::runtime_error("truncated field container: " + path);
        out.emplace_back(g, std::move(v));
    }
    return out;
}

void write_slice_csv(const std::string& path, const ScalarField& f, int axis, const std::array<int, 4>& at)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path);
    out.precision(17);
    out << "x,value\n";
    const Grid4& g = f.grid();
    auto idx = at;
    for (int i = 0; i < g.n(); ++i) {
        idx[axis] = i;
        out << i * g.spacing() << ',' << f[g.index(idx[0], idx[1], idx[2], idx[3])] << '\n';
    }
}

} // namespace ldet
