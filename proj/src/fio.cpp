#include "gwpk/fio.hpp"

#include <cmath>
#include <random>

#include "gwpk/propagator.hpp"

namespace gwpk {

CanonicalMap canonical_map(const SymbolModel& a, double t0, double t1, int steps) {
  CanonicalMap m;
  if (a.kind == SymbolKind::quadratic_form && a.d == 1) {
    const Eigen::Matrix2d M = quadratic_flow(a, t0, t1);
    m.linear = true;
    m.eval = [M](const Point& p) {
      CanonicalPoint c;
      const Eigen::Vector2d v = M * Eigen::Vector2d(p[0], p[1]);
      c.chi = {v(0), v(1)};
      c.jac = M;
      return c;
    };
    return m;
  }
  if (a.d != 1) fail(ErrorCode::precondition, "canonical_map: d=1 symbols only");
  const int n = steps > 0 ? steps : std::max(200, static_cast<int>(std::ceil(std::abs(t1 - t0) * 400)));
  m.eval = [a, t0, t1, n](const Point& p) {
    FlowOptions fo;
    fo.error_estimate = false;
    fo.keep_trajectory = false;
    const FlowResult r = integrate_flow(a, SymbolModel::z1(p[0], p[1]), t0, t1, n, fo);
    CanonicalPoint c;
    c.chi = {r.final_state()(0), r.final_state()(1)};
    c.jac = r.final_jac().topLeftCorner<2, 2>();
    return c;
  };
  return m;
}

CanonicalMap identity_map() {
  CanonicalMap m;
  m.linear = true;
  m.eval = [](const Point& p) {
    CanonicalPoint c;
    c.chi = p;
    return c;
  };
  return m;
}

double caustic_check(const FlowTable& flow) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < flow.jac.size(); ++i)
    if (flow.ok.empty() || flow.ok[i]) best = std::min(best, std::abs(flow.jac[i](0, 0)));
  if (!std::isfinite(best)) fail(ErrorCode::precondition, "caustic_check: no valid flow Jacobians");
  return best;
}

Point PhaseFunction::gradient(double xq, double etaq) const {
  const double fx = (xq - grid.x(0)) / grid.dx();
  const double fe = (etaq - eta(0)) / grid.dxi();
  if (fx < 0 || fe < 0 || fx > nx() - 1 || fe > neta - 1)
    fail(ErrorCode::precondition, "PhaseFunction::gradient: point outside the sampled box");
  const int i = std::min(static_cast<int>(fx), nx() - 2);
  const int k = std::min(static_cast<int>(fe), neta - 2);
  const double u = fx - i, v = fe - k;
  auto lerp = [&](const RVec& f) {
    return (1 - u) * (1 - v) * f[index(i, k)] + u * (1 - v) * f[index(i + 1, k)] + (1 - u) * v * f[index(i, k + 1)] +
           u * v * f[index(i + 1, k + 1)];
  };
  return {lerp(xi), lerp(y)};
}

namespace {

struct Solved {
  double y, xi, j00, j01, j10, det;
};

// Solves chi_1(y, eta) = x for y by damped Newton from the guess.
Solved invert(const CanonicalMap& chi, double x, double eta, double guess, const PhaseOptions& opt) {
  double y = guess;
  CanonicalPoint c = chi.eval({y, eta});
  double r = c.chi[0] - x;
  const double tol = opt.tol * (1.0 + std::abs(x));
  for (int it = 0; it < 100; ++it) {
    const double d = c.jac(0, 0);
    if (std::abs(d) < opt.delta)
      fail(ErrorCode::caustic, "construct_phase: |dx/dy| = " + std::to_string(std::abs(d)) + " below delta at x=" +
                                   std::to_string(x) + ", eta=" + std::to_string(eta));
    if (std::abs(r) <= tol) return {y, c.chi[1], d, c.jac(0, 1), c.jac(1, 0), c.jac.determinant()};
    double step = r / d;
    for (int h = 0; h < 40; ++h) {
      const CanonicalPoint cn = chi.eval({y - step, eta});
      const double rn = cn.chi[0] - x;
      if (std::abs(rn) < std::abs(r) || h == 39) {
        y -= step;
        c = cn;
        r = rn;
        break;
      }
      step *= 0.5;
    }
  }
  fail(ErrorCode::not_converged, "construct_phase: root finding did not converge at x=" + std::to_string(x) +
                                     ", eta=" + std::to_string(eta));
}

// Trapezoid with endpoint derivative correction, exact for cubics.
double corrected_step(double h, double fa, double fb, double da, double db) {
  return 0.5 * h * (fa + fb) + h * h / 12.0 * (da - db);
}

}  // namespace

PhaseFunction construct_phase(const CanonicalMap& chi, const GridSpec& g, const PhaseOptions& opt) {
  g.validate();
  if (g.d != 1) fail(ErrorCode::precondition, "construct_phase: d=1 only");
  if (!(opt.delta > 0)) fail(ErrorCode::invalid_argument, "construct_phase: delta must be positive");
  PhaseFunction P;
  P.grid = g;
  P.delta = opt.delta;
  int k_lo = 0, k_hi = g.n - 1;
  if (opt.eta_max > 0) {
    while (k_lo < g.n / 2 && std::abs(g.xi(k_lo)) > opt.eta_max) ++k_lo;
    while (k_hi > g.n / 2 && std::abs(g.xi(k_hi)) > opt.eta_max) --k_hi;
  }
  P.k_lo = k_lo;
  P.neta = k_hi - k_lo + 1;
  const int n = g.n, ne = P.neta, i0 = n / 2, e0 = n / 2 - k_lo;
  const std::size_t N = static_cast<std::size_t>(n) * ne;
  P.phi.assign(N, 0.0);
  P.xi.assign(N, 0.0);
  P.y.assign(N, 0.0);
  P.mixed.assign(N, 0.0);
  RVec j00(N), j01(N), j10(N), close(N);

  parallel_for(static_cast<std::size_t>(ne), [&](std::size_t ks) {
    const int k = static_cast<int>(ks);
    const double eta = P.eta(k);
    auto store = [&](int i, const Solved& s) {
      const std::size_t q = P.index(i, k);
      P.y[q] = s.y;
      P.xi[q] = s.xi;
      j00[q] = s.j00;
      j01[q] = s.j01;
      j10[q] = s.j10;
      P.mixed[q] = 1.0 / s.j00;
      close[q] = std::abs((s.det - 1.0) / s.j00);
    };
    // Continuation outward from x = 0.
    const Solved s0 = invert(chi, 0.0, eta, 0.0, opt);
    store(i0, s0);
    double guess = s0.y;
    for (int i = i0 + 1; i < n; ++i) {
      const Solved s = invert(chi, g.x(i), eta, guess, opt);
      store(i, s);
      guess = s.y;
    }
    guess = s0.y;
    for (int i = i0 - 1; i >= 0; --i) {
      const Solved s = invert(chi, g.x(i), eta, guess, opt);
      store(i, s);
      guess = s.y;
    }
  });

  // Along eta at x = 0: dPhi = y d eta, with d y / d eta |_x = -J01 / J00.
  const double he = g.dxi(), hx = g.dx();
  auto dy_deta = [&](std::size_t q) { return -j01[q] / j00[q]; };
  auto dxi_dx = [&](std::size_t q) { return j10[q] / j00[q]; };
  for (int k = e0 + 1; k < ne; ++k) {
    const std::size_t a = P.index(i0, k - 1), b = P.index(i0, k);
    P.phi[b] = P.phi[a] + corrected_step(he, P.y[a], P.y[b], dy_deta(a), dy_deta(b));
  }
  for (int k = e0 - 1; k >= 0; --k) {
    const std::size_t a = P.index(i0, k + 1), b = P.index(i0, k);
    P.phi[b] = P.phi[a] - corrected_step(he, P.y[b], P.y[a], dy_deta(b), dy_deta(a));
  }
  // Then along x: dPhi = xi dx.
  parallel_for(static_cast<std::size_t>(ne), [&](std::size_t ks) {
    const int k = static_cast<int>(ks);
    for (int i = i0 + 1; i < n; ++i) {
      const std::size_t a = P.index(i - 1, k), b = P.index(i, k);
      P.phi[b] = P.phi[a] + corrected_step(hx, P.xi[a], P.xi[b], dxi_dx(a), dxi_dx(b));
    }
    for (int i = i0 - 1; i >= 0; --i) {
      const std::size_t a = P.index(i + 1, k), b = P.index(i, k);
      P.phi[b] = P.phi[a] - corrected_step(hx, P.xi[b], P.xi[a], dxi_dx(b), dxi_dx(a));
    }
  });

  P.min_det = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < N; ++q) {
    P.min_det = std::min(P.min_det, std::abs(j00[q]));
    P.closedness = std::max(P.closedness, close[q]);
  }
  if (P.closedness > opt.closedness_abort)
    fail(ErrorCode::numerical, "construct_phase: closedness mismatch " + std::to_string(P.closedness) +
                                   " (the input map is not symplectic)");
  return P;
}

SampledState fio_apply(const PhaseFunction& P, const CVec& sigma, const SampledState& f, double* escaped_mass) {
  require_same_grid(P.grid, f.grid, "fio_apply");
  if (f.domain != Domain::position) fail(ErrorCode::domain_mismatch, "fio_apply expects a position-domain state");
  const std::size_t N = static_cast<std::size_t>(P.nx()) * P.neta;
  if (!(sigma.empty() || sigma.size() == 1 || sigma.size() == N))
    fail(ErrorCode::invalid_argument, "fio_apply: sigma must be empty, a constant, or one value per phase node");
  const double bm = boundary_mass(f);
  if (bm > 1e-10) fail(ErrorCode::boundary_mass, "fio_apply: input boundary mass " + std::to_string(bm));
  const SampledState F = fourier_forward(f);
  double outside = 0.0, total = 0.0;
  for (int k = 0; k < f.grid.n; ++k) {
    const double m = std::norm(F.values[k]);
    total += m;
    if (k < P.k_lo || k >= P.k_lo + P.neta) outside += m;
  }
  const double escaped = total > 0 ? outside / total : 0.0;
  if (escaped_mass) *escaped_mass = escaped;
  if (escaped > 1e-10)
    fail(ErrorCode::precondition, "fio_apply: frequency band misses " + std::to_string(escaped) + " of the input mass");

  // The eta sum sees f periodized with period 2 x_max, and the flow can carry
  // those images back into the box. Terms are weighted by the source point
  // y = Phi_eta: f lives in |y| < 0.8 x_max (checked above) and its first image
  // starts at 1.2 x_max, so an erfc roll-off centred at x_max separates them to
  // roundoff while keeping a Gaussian (not merely C-infinity) spectrum in eta.
  const double L = P.grid.x_max, s_roll = 0.2 * L / 5.5;
  auto keep = [L, s_roll](double y) { return 0.5 * std::erfc((std::abs(y) - L) / s_roll); };
  SampledState out(f.grid);
  const double w = P.grid.dxi() / kTwoPi;
  parallel_for(static_cast<std::size_t>(P.nx()), [&](std::size_t is) {
    const int i = static_cast<int>(is);
    cplx acc = 0.0;
    for (int k = 0; k < P.neta; ++k) {
      const std::size_t q = P.index(i, k);
      const double c = keep(P.y[q]);
      if (c < 1e-300) continue;
      const cplx s = sigma.empty() ? cplx(1.0) : sigma.size() == 1 ? sigma[0] : sigma[q];
      acc += std::polar(c, P.phi[q]) * s * F.values[P.k_lo + k];
    }
    out.values[i] = w * acc;
  });
  return out;
}

CVec unitary_amplitude(const PhaseFunction& P) {
  CVec s(P.mixed.size());
  for (std::size_t q = 0; q < s.size(); ++q) s[q] = std::sqrt(std::abs(P.mixed[q]));
  return s;
}

Comparability phase_flow_comparability(const PhaseFunction& P, const CanonicalMap& chi, double box,
                                       std::size_t samples, std::uint64_t seed) {
  if (samples < 200) fail(ErrorCode::invalid_argument, "phase_flow_comparability: at least 200 samples required");
  const double xlim = std::min(box, P.grid.x(P.nx() - 1));
  const double elim = std::min({box, -P.eta(0), P.eta(P.neta - 1)});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-xlim, xlim), ue(-elim, elim);
  Comparability c;
  c.c1 = std::numeric_limits<double>::infinity();
  c.c2 = 0.0;
  std::size_t tries = 0;
  while (c.samples < samples && tries < 20 * samples) {
    ++tries;
    const double x = ux(rng), xp = ux(rng), eta = ue(rng), etap = ue(rng);
    const Point img = chi.eval({x, eta}).chi;
    const double rhs = std::abs(img[0] - xp) + std::abs(img[1] - etap);
    if (rhs <= 1e-8) continue;
    const Point gr = P.gradient(xp, eta);
    const double lhs = std::abs(gr[0] - etap) + std::abs(gr[1] - x);
    c.c1 = std::min(c.c1, lhs / rhs);
    c.c2 = std::max(c.c2, lhs / rhs);
    ++c.samples;
  }
  return c;
}

Array to_array(const PhaseFunction& P) {
  Array a;
  a.dtype = Array::DType::f64;
  a.dims = {4, static_cast<std::uint64_t>(P.nx()), static_cast<std::uint64_t>(P.neta)};
  a.real.reserve(4 * P.phi.size());
  for (const RVec* f : {&P.phi, &P.xi, &P.y, &P.mixed}) a.real.insert(a.real.end(), f->begin(), f->end());
  return a;
}

}  // namespace gwpk
