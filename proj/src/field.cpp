#include "gwpk/field.hpp"

#include <cmath>

#include "fft.hpp"

namespace gwpk {

std::size_t GridSpec::size() const {
  std::size_t s = 1;
  for (int i = 0; i < d; ++i) s *= static_cast<std::size_t>(n);
  return s;
}

void GridSpec::validate() const {
  if (n < 16 || (n & (n - 1)) != 0)
    fail(ErrorCode::invalid_argument, "grid: n must be a power of two >= 16, got " + std::to_string(n));
  if (!(x_max > 0.0) || !std::isfinite(x_max)) fail(ErrorCode::invalid_argument, "grid: x_max must be positive");
  if (d != 1 && d != 2) fail(ErrorCode::invalid_argument, "grid: only d=1 and d=2 are supported");
}

SampledState::SampledState(const GridSpec& g, Domain dom) : grid(g), values(g.size()), domain(dom) {
  g.validate();
}

SampledState::SampledState(const GridSpec& g, CVec v, Domain dom) : grid(g), values(std::move(v)), domain(dom) {
  g.validate();
  if (values.size() != g.size()) fail(ErrorCode::grid_mismatch, "state length does not match grid");
}

double SampledState::cell() const {
  double c = domain == Domain::position ? grid.dx() : grid.dxi();
  return grid.d == 2 ? c * c : c;
}

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* where) {
  if (!(a == b)) fail(ErrorCode::grid_mismatch, std::string(where) + ": grid mismatch");
}

SampledState sample(const GridSpec& g, const std::function<cplx(double)>& f) {
  SampledState s(g);
  if (g.d != 1) fail(ErrorCode::invalid_argument, "sample: d=1 only");
  for (int j = 0; j < g.n; ++j) s.values[j] = f(g.x(j));
  return s;
}

SampledState normalized_gaussian(const GridSpec& g, double x0, double xi0, double width) {
  const double c = std::pow(kPi * width * width, -0.25);
  return sample(g, [&](double x) {
    const double u = (x - x0) / width;
    return c * std::exp(-0.5 * u * u) * std::exp(kI * xi0 * (x - x0));
  });
}

namespace {

// (-1)^index sign pattern; with n/2 even it turns the centred transform into a plain DFT.
void checkerboard(CVec& v, const GridSpec& g) {
  if (g.d == 1) {
    for (int j = 1; j < g.n; j += 2) v[j] = -v[j];
  } else {
    for (int a = 0; a < g.n; ++a)
      for (int b = 0; b < g.n; ++b)
        if ((a + b) & 1) v[static_cast<std::size_t>(a) * g.n + b] = -v[static_cast<std::size_t>(a) * g.n + b];
  }
}

}  // namespace

void fourier_forward_inplace(CVec& v, const GridSpec& g) {
  checkerboard(v, g);
  detail::fft_inplace(v.data(), g.n, g.d, -1);
  checkerboard(v, g);
  const double s = g.d == 2 ? g.dx() * g.dx() : g.dx();
  for (auto& c : v) c *= s;
}

void fourier_inverse_inplace(CVec& v, const GridSpec& g) {
  checkerboard(v, g);
  detail::fft_inplace(v.data(), g.n, g.d, +1);
  checkerboard(v, g);
  double s = g.dxi() / kTwoPi;
  if (g.d == 2) s *= s;
  for (auto& c : v) c *= s;
}

SampledState fourier_forward(const SampledState& f) {
  if (f.domain != Domain::position) fail(ErrorCode::domain_mismatch, "fourier_forward expects a position-domain state");
  SampledState out(f.grid, f.values, Domain::frequency);
  fourier_forward_inplace(out.values, out.grid);
  return out;
}

SampledState fourier_inverse(const SampledState& F) {
  if (F.domain != Domain::frequency) fail(ErrorCode::domain_mismatch, "fourier_inverse expects a frequency-domain state");
  SampledState out(F.grid, F.values, Domain::position);
  fourier_inverse_inplace(out.values, out.grid);
  return out;
}

double l2_norm(const SampledState& f) {
  double s = 0.0;
  for (const auto& c : f.values) s += std::norm(c);
  return std::sqrt(s * f.cell());
}

cplx inner(const SampledState& f, const SampledState& g) {
  require_same_grid(f.grid, g.grid, "inner");
  if (f.domain != g.domain) fail(ErrorCode::domain_mismatch, "inner: domain mismatch");
  cplx s = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) s += f.values[i] * std::conj(g.values[i]);
  return s * f.cell();
}

double relative_l2(const SampledState& a, const SampledState& ref) {
  require_same_grid(a.grid, ref.grid, "relative_l2");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    num += std::norm(a.values[i] - ref.values[i]);
    den += std::norm(ref.values[i]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

double boundary_mass(const SampledState& f) {
  const auto& g = f.grid;
  const double lim = 0.9 * (f.domain == Domain::position ? g.x_max : g.xi_max());
  auto coord = [&](int j) { return f.domain == Domain::position ? g.x(j) : g.xi(j); };
  double outer = 0.0, total = 0.0;
  if (g.d == 1) {
    for (int j = 0; j < g.n; ++j) {
      const double m = std::norm(f.values[j]);
      total += m;
      if (std::abs(coord(j)) >= lim) outer += m;
    }
  } else {
    for (int a = 0; a < g.n; ++a)
      for (int b = 0; b < g.n; ++b) {
        const double m = std::norm(f.values[static_cast<std::size_t>(a) * g.n + b]);
        total += m;
        if (std::max(std::abs(coord(a)), std::abs(coord(b))) >= lim) outer += m;
      }
  }
  return total == 0.0 ? 0.0 : outer / total;
}

SampledState fourier_multiply(const SampledState& f, const std::function<cplx(double)>& m) {
  if (f.grid.d != 1) fail(ErrorCode::invalid_argument, "fourier_multiply: d=1 only");
  if (f.domain != Domain::position) fail(ErrorCode::domain_mismatch, "fourier_multiply expects position domain");
  SampledState out = f;
  fourier_forward_inplace(out.values, out.grid);
  for (int k = 0; k < f.grid.n; ++k) out.values[k] *= m(f.grid.xi(k));
  fourier_inverse_inplace(out.values, out.grid);
  return out;
}

SampledState spectral_derivative(const SampledState& f, int k) {
  const double nyq = -f.grid.xi_max();
  return fourier_multiply(f, [k, nyq](double xi) -> cplx {
    // The unpaired Nyquist mode has no consistent odd derivative.
    if (xi == nyq && (k % 2 == 1)) return 0.0;
    return std::pow(kI * xi, k);
  });
}

CVec shifted(const CVec& v, const GridSpec& g, double a) {
  const double q = a / g.dx();
  const double qr = std::round(q);
  const int n = g.n;
  CVec out(v.size());
  if (std::abs(q - qr) < 1e-12) {
    long m = static_cast<long>(qr) % n;
    if (m < 0) m += n;
    for (int j = 0; j < n; ++j) out[(j + m) % n] = v[j];
    return out;
  }
  out = v;
  fourier_forward_inplace(out, g);
  for (int k = 0; k < n; ++k) {
    const double xi = g.xi(k);
    out[k] *= k == 0 ? cplx(std::cos(a * xi)) : std::exp(-kI * a * xi);
  }
  fourier_inverse_inplace(out, g);
  return out;
}

}  // namespace gwpk
