#pragma once

#include <array>
#include <functional>
#include <variant>

#include "gwpk/field.hpp"

namespace gwpk {

using Point = std::array<double, 2>;  // phase-space point (x, xi), d=1

inline double dist(const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

enum class WindowKind { gaussian, hermite, custom };

struct Window {
  SampledState state;
  WindowKind kind = WindowKind::gaussian;
  double l2_normalization = 0.0;  // l2_norm(state)
  double width = 1.0;             // Gaussian width parameter, meaningful for kind == gaussian
};

// Norm required by the continuous inversion formula in d=1.
inline double synthesis_norm() { return 1.0 / std::sqrt(kTwoPi); }

// Windows are returned with norm (2*pi)^{-1/2}.
Window gaussian_window(const GridSpec& g, double width = 1.0);
Window hermite_window(const GridSpec& g, int order = 1);
Window custom_window(const SampledState& s, bool normalize = true);
const char* to_string(WindowKind k);

// Separable lattice with nodes x_j = (j - nx/2) dx, xi_k = (k - nxi/2) dxi.
struct Lattice {
  double dx = 0.5;
  double dxi = 0.5;
  int nx = 64;
  int nxi = 64;

  double x(int j) const { return (j - nx / 2) * dx; }
  double xi(int k) const { return (k - nxi / 2) * dxi; }
  Point node(std::size_t idx) const { return {x(static_cast<int>(idx) / nxi), xi(static_cast<int>(idx) % nxi)}; }
  std::size_t index(int j, int k) const { return static_cast<std::size_t>(j) * nxi + k; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * nxi; }
  double x_extent() const { return std::max(std::abs(x(0)), std::abs(x(nx - 1))); }
  double xi_extent() const { return std::max(std::abs(xi(0)), std::abs(xi(nxi - 1))); }
  double oversampling() const { return kTwoPi / (dx * dxi); }
  double cell() const { return dx * dxi; }

  // Nearest node to p, or -1 when p is outside the lattice box.
  long nearest(const Point& p) const;

  // Oversampling >= 2 and positive counts.
  void validate() const;
  // validate() plus compatibility with the grid: dxi a multiple of the grid
  // frequency step and all nodes inside the grid and its Nyquist band.
  void validate_for(const GridSpec& g) const;
  bool operator==(const Lattice& o) const {
    return dx == o.dx && dxi == o.dxi && nx == o.nx && nxi == o.nxi;
  }
};

// Lattice with dxi = q * grid.dxi() for the given q.
Lattice make_lattice(const GridSpec& g, double dx, int q, int nx, int nxi);
// Largest lattice of at most nmax x nmax nodes covering `coverage` of the grid box.
Lattice auto_lattice(const GridSpec& g, int nmax = 64, double coverage = 0.8);

struct StftTable {
  Lattice lattice;
  CVec values;  // index lattice.index(j, k)

  cplx at(int j, int k) const { return values[lattice.index(j, k)]; }
  double peak() const;
  // Largest modulus on the outer ring of nodes relative to the peak.
  double edge_ratio() const;
};

StftTable stft(const SampledState& f, const Window& g, const Lattice& lat);
SampledState istft(const StftTable& tbl, const Window& g);

// V_g f at a single phase-space point by direct quadrature.
cplx stft_point(const SampledState& f, const SampledState& g, const Point& z);
// pi(z) g sampled on the grid: e^{i xi (y - x)} g(y - x).
SampledState tf_shift(const SampledState& g, const Point& z);

struct DecayFit {
  double C = 0.0;
  double eps = 0.0;
  double residual = 0.0;
  double floor = 1e-13;
  std::size_t samples = 0;
  bool degenerate = false;  // eps below the regularity threshold
};

// Rates below this count as "no exponential decay" (artifact convention).
inline constexpr double kRegularityThreshold = 0.01;

struct DecayOptions {
  double floor = 1e-13;  // relative to peak
  double r0 = 2.0;       // core ball excluded from the fit
  std::size_t min_samples = 20;
};

// Least squares log|v| ~ C - eps * r over samples above floor and outside the core.
DecayFit fit_decay_samples(const RVec& r, const RVec& amplitude, const DecayOptions& opt = {});

using CenterMap = std::function<Point(const Point&)>;
DecayFit fit_exponential_decay(const StftTable& tbl, const Point& center, const DecayOptions& opt = {});
DecayFit fit_exponential_decay(const StftTable& tbl, const CenterMap& center, const DecayOptions& opt = {});

struct S11Report {
  double position_rate = 0.0;
  double frequency_rate = 0.0;
  double stft_rate = 0.0;
  bool position_power_law = false;
  bool frequency_power_law = false;
  bool stft_power_law = false;
  bool pass = false;
};

struct S11Options {
  bool check_boundary = true;
  double threshold = kRegularityThreshold;
  DecayOptions fit{};
};

S11Report s11_membership_report(const SampledState& f, const Window& g, const S11Options& opt = {});

struct DominationResult {
  double max_violation = 0.0;  // max over lattice of LHS - RHS
  double peak = 0.0;           // max LHS
};

// |V_h f| <= c (|V_g f| * |V_h g|) with c = 1/||g||^2, or the sharp c = 1/(2 pi ||g||^2).
DominationResult window_change_domination_check(const SampledState& f, const Window& g, const Window& h,
                                                const Lattice& lat, bool sharp = false);

}  // namespace gwpk
