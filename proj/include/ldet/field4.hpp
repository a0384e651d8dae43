#pragma once
// Periodic spectral calculus on the flat torus T^4 = [0,L)^4 and quadrature on
// Euclidean spheres/balls in R^4.
//
// Sign convention: the Laplacian is the trace of the Hessian, Δ = Σ ∂_ii, so
// that −Δ has non-negative spectrum.
//
// Storage is axis-major with the last axis fastest:
//   flat = ((i0*n + i1)*n + i2)*n + i3,  x_a = i_a * L/n.
// Spectral coefficients use the real-to-complex half layout (last axis keeps
// n/2+1 modes) and are normalised so that f(x) = Σ_k c_k e^{i k·x}.

#include <Eigen/Core>

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace ldet {

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using MultiIndex = std::array<int, 4>;
using cplx = std::complex<double>;

class Grid4 {
public:
    Grid4() = default;
    Grid4(int n, double period);

    int n() const { return n_; }
    double period() const { return L_; }
    double spacing() const { return L_ / n_; }
    std::size_t size() const { return size_; }
    int half() const { return n_ / 2 + 1; }
    std::size_t spectral_size() const { return std::size_t(n_) * n_ * n_ * half(); }
    double volume() const { return L_ * L_ * L_ * L_; }
    double cell_volume() const { double h = spacing(); return h * h * h * h; }

    /// Signed wavenumber of spectral index j on a full axis (j in [0,n)).
    double wavenumber(int j) const { return k_[j]; }
    bool is_nyquist(int j) const { return 2 * j == n_; }

    std::size_t index(int i0, int i1, int i2, int i3) const
    {
        return ((std::size_t(i0) * n_ + i1) * n_ + i2) * n_ + i3;
    }
    std::array<int, 4> unflatten(std::size_t flat) const;
    Vec4 point(std::size_t flat) const;

    bool operator==(const Grid4& o) const { return n_ == o.n_ && L_ == o.L_; }
    bool operator!=(const Grid4& o) const { return !(*this == o); }

private:
    int n_ = 0;
    double L_ = 0.0;
    std::size_t size_ = 0;
    std::vector<double> k_;
};

/// Real scalar field sampled on a Grid4.  Values are immutable once built; the
/// spectrum is computed lazily and shared between copies.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const Grid4& g, double value = 0.0);
    ScalarField(const Grid4& g, Eigen::ArrayXd values);
    template <class Derived>
    ScalarField(const Grid4& g, const Eigen::ArrayBase<Derived>& expr)
        : ScalarField(g, Eigen::ArrayXd(expr))
    {
    }

    static ScalarField from_function(const Grid4& g, const std::function<double(const Vec4&)>& f);
    static ScalarField from_spectrum(const Grid4& g, const Eigen::ArrayXcd& coeffs);

    const Grid4& grid() const { return grid_; }
    const Eigen::ArrayXd& values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t size() const { return values_.size(); }

    /// Normalised half-layout spectrum (exact DFT of the samples).
    const Eigen::ArrayXcd& spectrum() const;

    double mean() const { return values_.mean(); }
    double max_abs() const { return values_.abs().maxCoeff(); }

private:
    struct Cache {
        std::once_flag once;
        Eigen::ArrayXcd coeffs;
    };
    Grid4 grid_;
    Eigen::ArrayXd values_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

ScalarField operator+(const ScalarField& a, const ScalarField& b);
ScalarField operator-(const ScalarField& a, const ScalarField& b);
ScalarField operator*(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double s, const ScalarField& a);
ScalarField operator+(const ScalarField& a, double s);
ScalarField operator-(const ScalarField& a);
ScalarField exp(const ScalarField& a);

struct VectorField {
    std::array<ScalarField, 4> c;

    const Grid4& grid() const { return c[0].grid(); }
    ScalarField& operator[](int i) { return c[i]; }
    const ScalarField& operator[](int i) const { return c[i]; }
    Eigen::ArrayXd norm_sq() const;
};

/// Symmetric 2-tensor with ten stored components.
struct SymTensorField {
    std::array<ScalarField, 10> c;

    static int slot(int i, int j);
    const Grid4& grid() const { return c[0].grid(); }
    const ScalarField& operator()(int i, int j) const { return c[slot(i, j)]; }
    ScalarField& operator()(int i, int j) { return c[slot(i, j)]; }
    Eigen::ArrayXd trace() const;
    Eigen::ArrayXd contract(const SymTensorField& o) const; ///< Σ_ij A_ij B_ij
};

// --- spectral calculus ---------------------------------------------------

/// ∂^m f for a multi-index of total order ≤ 4.  Odd per-axis orders drop the
/// Nyquist mode so that first derivatives stay real and skew-adjoint.
ScalarField derive(const ScalarField& f, const MultiIndex& m);
VectorField gradient(const ScalarField& f);
SymTensorField hessian(const ScalarField& f);
ScalarField laplacian(const ScalarField& f);
ScalarField bilaplacian(const ScalarField& f);
/// Σ_i ∂_i X_i.
ScalarField divergence(const VectorField& X);

/// Gradient part ∇φ of the periodic Helmholtz split F = ∇φ + h, with
/// φ = Δ⁻¹ div F in the discrete symbols (so div h vanishes identically and
/// the mean of F stays in h).
VectorField gradient_projection(const VectorField& F);
/// The zero-mean potential φ of that split: gradient(φ) == gradient_projection(F).
ScalarField helmholtz_potential(const VectorField& F);

/// Zero-mean u with Δ²u = f.  Throws if |mean(f)| exceeds `mean_tol`·max|f|.
ScalarField invert_bilaplacian(const ScalarField& f, double mean_tol = 1e-10);

/// Multiplies the spectrum by an arbitrary real symbol s(k).
ScalarField apply_symbol(const ScalarField& f, const std::function<double(const Vec4&)>& symbol);

/// Low-pass filter keeping |j_a| ≤ fraction·n/2 on every axis (2/3 or 1/2 rules).
ScalarField lowpass(const ScalarField& f, double fraction);

/// ∫ f dv (optionally ∫ f·weight dv) by the periodic trapezoidal rule.
double integrate(const ScalarField& f);
double integrate(const ScalarField& f, const ScalarField& weight);
double integrate_values(const Grid4& g, const Eigen::ArrayXd& v);

/// Spectral inner product L^4 Σ_k c_k(f) conj(c_k(g)) (Parseval partner of integrate(f*g)).
double spectral_inner(const ScalarField& f, const ScalarField& g);

/// Evaluates the trigonometric interpolant at arbitrary points.
std::vector<double> interpolate(const ScalarField& f, const std::vector<Vec4>& points);

/// Periodic minimum-image displacement x − y.
Vec4 periodic_delta(const Vec4& x, const Vec4& y, double L);

// --- seeded random fields -------------------------------------------------

/// Named spectral-amplitude recipe: Gaussian coefficients on the modes with
/// |k_a| ≤ kmax (integer multiples of 2π/L), damped by exp(−decay·|j|²), then
/// scaled so that max|f| = amplitude.  The mean mode is excluded.
struct RandomRecipe {
    int kmax = 1;
    double amplitude = 0.3;
    double decay = 0.25;
    std::string name() const;
};

ScalarField random_field(const Grid4& g, const RandomRecipe& recipe, std::uint64_t seed);

/// Deterministic N(0,1) stream (SplitMix-seeded mt19937_64 + Box–Muller), so
/// results do not depend on the standard library's distribution objects.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed);
    double next();
    double uniform();

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
    std::uint64_t next_u64();
};

// --- radial profiles --------------------------------------------------------

/// Monotone (Fritsch–Carlson) cubic Hermite interpolant on a punctured radial
/// range.
class RadialProfile {
public:
    RadialProfile(std::vector<double> radii, std::vector<double> values);

    double r_min() const { return r_.front(); }
    double r_max() const { return r_.back(); }
    const std::vector<double>& radii() const { return r_; }
    const std::vector<double>& values() const { return v_; }
    double operator()(double r) const;
    double derivative(double r) const;

private:
    std::vector<double> r_, v_, d_;
    std::size_t locate(double r) const;
};

// --- quadrature on spheres and balls in R^4 -------------------------------

struct GaussRule {
    std::vector<double> x, w;
};
/// Gauss–Legendre rule on [a,b].
GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Product rule on the unit S^3 with x = (cos ψ, sin ψ cos θ, sin ψ sin θ cos φ,
/// sin ψ sin θ sin φ): Gauss–Chebyshev (2nd kind) in cos ψ, Gauss–Legendre in
/// cos θ, trapezoid in φ.  Exact for polynomials of degree < min(2nt, 2ns, nphi).
struct SphereRule {
    std::vector<Vec4> nodes;
    std::vector<double> weights;
    static SphereRule make(int nt = 8, int ns = 8, int nphi = 16);
    static const SphereRule& standard();
};

/// ∮_{∂B_r(c)} h dσ where h(x, ν) receives the point and the outward unit normal.
template <class F>
double sphere_integral(F&& h, double r, const Vec4& center = Vec4::Zero(),
                       const SphereRule& rule = SphereRule::standard())
{
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const Vec4& nu = rule.nodes[k];
        acc += rule.weights[k] * h(Vec4(center + r * nu), nu);
    }
    return acc * r * r * r;
}

/// ∫_{B_{r1}(c) \ B_{r0}(c)} f dx with Gauss–Legendre in r.
template <class F>
double ball_integral(F&& f, double r0, double r1, const Vec4& center = Vec4::Zero(),
                     int nr = 24, const SphereRule& rule = SphereRule::standard())
{
    const GaussRule gr = gauss_legendre(nr, r0, r1);
    double acc = 0.0;
    for (std::size_t i = 0; i < gr.x.size(); ++i) {
        const double r = gr.x[i];
        double shell = 0.0;
        for (std::size_t k = 0; k < rule.nodes.size(); ++k)
            shell += rule.weights[k] * f(Vec4(center + r * rule.nodes[k]));
        acc += gr.w[i] * shell * r * r * r;
    }
    return acc;
}

// --- serialisation ------------------------------------------------------------

enum class FieldKind : std::uint32_t { scalar = 0, vector = 1, sym_tensor = 2 };

/// Flat binary container: "LDF4", u32 version, u32 n, u32 kind, u32 ncomp,
/// f64 L, then ncomp·n^4 little-endian f64 values in axis-major order.
void write_field(const std::string& path, const ScalarField& f);
void write_field(const std::string& path, const VectorField& f);
void write_field(const std::string& path, const SymTensorField& f);
std::vector<ScalarField> read_field(const std::string& path, FieldKind* kind = nullptr);

/// CSV of a 1-D slice along `axis` through the grid point `at`: columns x,value.
void write_slice_csv(const std::string& path, const ScalarField& f, int axis,
                     const std::array<int, 4>& at = {0, 0, 0, 0});

} // namespace ldet
