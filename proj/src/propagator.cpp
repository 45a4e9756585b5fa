#include "gwpk/propagator.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>

namespace gwpk {

const char* to_string(Method m) {
  switch (m) {
    case Method::metaplectic_exact: return "metaplectic_exact";
    case Method::strang_split: return "strang_split";
    case Method::weyl_midpoint: return "weyl_midpoint";
  }
  return "strang_split";
}

Method method_from_string(const std::string& s) {
  if (s == "metaplectic_exact") return Method::metaplectic_exact;
  if (s == "strang_split") return Method::strang_split;
  if (s == "weyl_midpoint") return Method::weyl_midpoint;
  fail(ErrorCode::config, "unknown method '" + s + "'");
}

int PropagatorHandle::steps() const {
  const double span = std::abs(t_end - t_start);
  if (span == 0.0) return 0;
  if (dt <= 0.0) return 512;
  return std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
}

double PropagatorHandle::step() const {
  const int s = steps();
  return s == 0 ? 0.0 : (t_end - t_start) / s;
}

void PropagatorHandle::validate() const {
  if (!std::isfinite(t_start) || !std::isfinite(t_end)) fail(ErrorCode::invalid_argument, "propagator: non-finite times");
  if (dt < 0.0 || !std::isfinite(dt)) fail(ErrorCode::invalid_argument, "propagator: dt must be >= 0");
  if (symbol.d != 1) fail(ErrorCode::invalid_argument, "propagator: d=1 only");
  if (method == Method::metaplectic_exact && symbol.kind != SymbolKind::quadratic_form)
    fail(ErrorCode::precondition, "metaplectic_exact requires a quadratic_form symbol");
  if (method == Method::strang_split && !symbol.has_split())
    fail(ErrorCode::precondition, "strang_split requires a separable symbol k(xi) + V(t, x)");
}

SampledState weyl_apply(const SymbolModel& a, double t, const SampledState& f) {
  if (a.d != 1 || f.grid.d != 1) fail(ErrorCode::invalid_argument, "weyl_apply: d=1 only");
  if (f.grid.n > 2048) fail(ErrorCode::precondition, "weyl_apply: n must be <= 2048");
  if (f.domain != Domain::position) fail(ErrorCode::domain_mismatch, "weyl_apply expects a position-domain state");
  const GridSpec& g = f.grid;
  const int n = g.n;
  const double dx = g.dx();
  // Output x_i pairs with y_j = x_i - l dx (l the minimal torus offset); the
  // midpoint x_i - l dx/2 sits on a half grid indexed by p = 2i - l + n/2.
  // For each p the xi-sum over all offsets l is one inverse FFT.
  // Offsets near n/2 pair points across the periodic seam, where the midpoint
  // jumps by x_max; a smooth cutoff over n/4 < |l| < n/2 removes them while
  // keeping the alternating kernel tails summable against smooth data.
  RVec taper(n + 1);
  for (int l = -n / 2; l <= n / 2; ++l) {
    const double s = (std::abs(l) - 0.25 * n) / (0.25 * n);
    double w = 1.0;
    if (s >= 1.0) w = 0.0;
    else if (s > 0.0) {
      const double a0 = std::exp(-1.0 / s), a1 = std::exp(-1.0 / (1.0 - s));
      w = a1 / (a0 + a1);
    }
    taper[l + n / 2] = w;
  }
  // The Nyquist mode is unresolved; projecting it out on both sides keeps the
  // discrete operator Hermitian and stops smooth data from feeding it.
  auto drop_nyquist = [&](CVec& v) {
    fourier_forward_inplace(v, g);
    v[0] = 0.0;
    fourier_inverse_inplace(v, g);
  };
  CVec fin = f.values;
  drop_nyquist(fin);
  CVec acc = ordered_accumulate(static_cast<std::size_t>(3 * n), static_cast<std::size_t>(n), [&](std::size_t pp, CVec& out) {
    const int p = static_cast<int>(pp);
    // l in [-n/2, n/2) means 2i in [p - n, p)
    const int i_lo = std::max(0, (p - n) / 2);
    const int i_hi = std::min(n - 1, p / 2);
    const double m = -g.x_max + (p - n / 2) * 0.5 * dx;
    CVec K(n);
    for (int k = 1; k < n; ++k) K[k] = a.evaluate(t, m, g.xi(k));
    // The Nyquist column stands for both +xi_max and -xi_max; a one-sided value
    // leaves a non-decaying kernel tail that grows with m.
    K[0] = 0.5 * (a.evaluate(t, m, g.xi(0)) + a.evaluate(t, m, -g.xi(0)));
    fourier_inverse_inplace(K, g);
    for (int i = i_lo; i <= i_hi; ++i) {
      const int l = 2 * i + n / 2 - p;
      if (l < -n / 2 || l >= n / 2) continue;
      const int j = ((i - l) % n + n) % n;
      out[i] += dx * taper[l + n / 2] * K[l + n / 2] * fin[j];
    }
  });
  drop_nyquist(acc);
  return SampledState(g, std::move(acc));
}

namespace {

void check_boundary(double bm, double t, EvolveReport& rep) {
  rep.max_boundary = std::max(rep.max_boundary, bm);
  if (bm > kBoundaryFail) {
    std::ostringstream os;
    os << "evolve: boundary mass " << bm << " exceeds 1e-6 at t = " << t;
    fail(ErrorCode::boundary_mass, os.str());
  }
  if (bm > kBoundaryWarn && rep.warnings.empty()) {
    std::ostringstream os;
    os << "truncation warning: boundary mass " << bm << " at t = " << t;
    rep.warnings.push_back(os.str());
  }
}

SampledState strang(const PropagatorHandle& h, const SampledState& u0, EvolveReport& rep) {
  const GridSpec& g = u0.grid;
  const int n = g.n, steps = h.steps();
  const double dt = h.step();
  CVec kin(n), vhalf(n);
  for (int k = 0; k < n; ++k) kin[k] = std::exp(-kI * dt * h.symbol.kinetic(g.xi(k)));
  auto fill_potential = [&](double tm) {
    for (int j = 0; j < n; ++j) vhalf[j] = std::exp(-kI * 0.5 * dt * h.symbol.potential(tm, g.x(j)));
  };
  fill_potential(h.t_start + 0.5 * dt);
  SampledState u = u0;
  for (int s = 0; s < steps; ++s) {
    const double tm = h.t_start + (s + 0.5) * dt;
    if (h.symbol.time_dependent && s > 0) fill_potential(tm);
    for (int j = 0; j < n; ++j) u.values[j] *= vhalf[j];
    fourier_forward_inplace(u.values, g);
    for (int k = 0; k < n; ++k) u.values[k] *= kin[k];
    fourier_inverse_inplace(u.values, g);
    for (int j = 0; j < n; ++j) u.values[j] *= vhalf[j];
    const double t = h.t_start + (s + 1) * dt;
    const double bm = boundary_mass(u);
    rep.trace_t.push_back(t);
    rep.boundary_trace.push_back(bm);
    check_boundary(bm, t, rep);
  }
  return u;
}

SampledState midpoint(const PropagatorHandle& h, const SampledState& u0, EvolveReport& rep) {
  const int steps = h.steps();
  const double dt = h.step();
  SampledState u = u0;
  const std::size_t n = u.values.size();
  for (int s = 0; s < steps; ++s) {
    const double tm = h.t_start + (s + 0.5) * dt;
    const SampledState Au = weyl_apply(h.symbol, tm, u);
    SampledState rhs = u;
    for (std::size_t i = 0; i < n; ++i) rhs.values[i] -= kI * 0.5 * dt * Au.values[i];
    // Fixed-point form of (I + i dt/2 A) v = (I - i dt/2 A) u.
    SampledState v = u;
    bool converged = false;
    int it = 0;
    while (it < 10) {
      ++it;
      const SampledState Av = weyl_apply(h.symbol, tm, v);
      SampledState next = rhs;
      double diff = 0.0, nrm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        next.values[i] -= kI * 0.5 * dt * Av.values[i];
        diff += std::norm(next.values[i] - v.values[i]);
        nrm += std::norm(next.values[i]);
      }
      v = std::move(next);
      if (std::sqrt(diff) <= 1e-12 * std::sqrt(nrm)) {
        converged = true;
        break;
      }
    }
    rep.fixed_point_iterations = std::max(rep.fixed_point_iterations, it);
    if (!converged) {
      std::ostringstream os;
      os << "weyl_midpoint: fixed-point iteration did not reach 1e-12 in 10 iterations at t = " << tm
         << " (reduce dt)";
      fail(ErrorCode::not_converged, os.str());
    }
    u = std::move(v);
    const double t = h.t_start + (s + 1) * dt;
    const double bm = boundary_mass(u);
    rep.trace_t.push_back(t);
    rep.boundary_trace.push_back(bm);
    check_boundary(bm, t, rep);
  }
  return u;
}

}  // namespace

Lattice exact_lattice(const GridSpec& g) {
  const double dx = 0.4;
  const int q = std::max(1, static_cast<int>(std::floor(0.45 / g.dxi())));
  const double dxi = q * g.dxi();
  const int nx = 2 * static_cast<int>(std::floor(0.9 * g.x_max / dx));
  const int nxi = 2 * static_cast<int>(std::floor(0.9 * g.xi_max() / dxi));
  Lattice l{dx, dxi, nx, nxi};
  l.validate_for(g);
  return l;
}

SampledState evolve(const PropagatorHandle& h, const SampledState& u0, EvolveReport* report) {
  h.validate();
  if (u0.domain != Domain::position) fail(ErrorCode::domain_mismatch, "evolve expects a position-domain state");
  if (u0.grid.d != 1) fail(ErrorCode::invalid_argument, "evolve: d=1 only");
  EvolveReport local;
  EvolveReport& rep = report ? *report : local;
  rep = EvolveReport{};
  rep.norm_in = l2_norm(u0);
  const double bm0 = boundary_mass(u0);
  if (bm0 >= kBoundaryWarn) {
    std::ostringstream os;
    os << "evolve: initial boundary mass " << bm0 << " >= 1e-10";
    fail(ErrorCode::boundary_mass, os.str());
  }
  rep.trace_t.push_back(h.t_start);
  rep.boundary_trace.push_back(bm0);
  rep.steps = h.steps();
  SampledState out;
  if (rep.steps == 0) {
    out = u0;
  } else {
    switch (h.method) {
      case Method::strang_split: out = strang(h, u0, rep); break;
      case Method::weyl_midpoint: out = midpoint(h, u0, rep); break;
      case Method::metaplectic_exact: {
        out = metaplectic_apply(h.symbol, h.t_end - h.t_start, u0, gaussian_window(u0.grid), exact_lattice(u0.grid));
        rep.steps = 1;
        const double bm = boundary_mass(out);
        rep.trace_t.push_back(h.t_end);
        rep.boundary_trace.push_back(bm);
        check_boundary(bm, h.t_end, rep);
        break;
      }
    }
  }
  rep.norm_out = l2_norm(out);
  return out;
}

Eigen::Matrix2d quadratic_flow(const SymbolModel& a, double t0, double t1) {
  if (a.kind != SymbolKind::quadratic_form || a.d != 1)
    fail(ErrorCode::precondition, "quadratic_flow requires a d=1 quadratic_form symbol");
  Eigen::Matrix2d S;
  S << 0, 1, -1, 0;
  const Eigen::Matrix2d Q = a.Q;
  const Eigen::Matrix2d gen = (t1 - t0) * S * Q;
  return gen.exp();
}

SampledState metaplectic_window(const SymbolModel& a, double t0, double t1, const Window& g) {
  if (a.kind != SymbolKind::quadratic_form) fail(ErrorCode::precondition, "metaplectic window: quadratic_form symbol required");
  if (g.kind != WindowKind::gaussian) fail(ErrorCode::precondition, "metaplectic window: Gaussian window required");
  const GridSpec& gr = g.state.grid;
  // g(y) = c exp(i tau y^2 / 2) with tau = i / width^2; the flow M = [[A, B], [C, D]]
  // maps tau to (C + D tau)/(A + B tau) and multiplies by (A + B tau)^{-1/2}.
  const cplx tau = kI / (g.width * g.width);
  const double span = t1 - t0;
  Eigen::Matrix2d S;
  S << 0, 1, -1, 0;
  const Eigen::Matrix2d gen = S * Eigen::Matrix2d(a.Q);
  const int K = std::max(256, static_cast<int>(std::ceil(64.0 * std::abs(span) * (1.0 + gen.norm()))));
  // The branch of the square root follows A + B tau continuously from 1 at t0.
  double arg = 0.0;
  cplx prev = 1.0;
  Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
  for (int k = 1; k <= K; ++k) {
    M = (span * k / K * gen).exp();
    const cplx w = M(0, 0) + M(0, 1) * tau;
    arg += std::arg(w / prev);
    prev = w;
  }
  const cplx w = M(0, 0) + M(0, 1) * tau;
  const cplx tau1 = (M(1, 0) + M(1, 1) * tau) / w;
  const cplx amp = std::pow(std::abs(w), -0.5) * std::exp(-0.5 * kI * arg);
  const cplx c = g.state.values[gr.n / 2];
  SampledState G(gr);
  for (int j = 0; j < gr.n; ++j) {
    const double y = gr.x(j);
    G.values[j] = c * amp * std::exp(0.5 * kI * tau1 * y * y);
  }
  return G;
}

FlowTable lattice_flow(const SymbolModel& a, const Lattice& lat, double t0, double t1, int steps) {
  if (a.kind != SymbolKind::quadratic_form) {
    if (steps <= 0) steps = std::max(64, static_cast<int>(std::ceil(std::abs(t1 - t0) / 0.005)));
    return flow_map_on_lattice(a, lat, t0, t1, steps);
  }
  const Eigen::Matrix2d M = quadratic_flow(a, t0, t1);
  FlowTable tab;
  tab.lattice = lat;
  tab.T = t1;
  const std::size_t N = lat.size();
  tab.chi.resize(N);
  tab.psi.resize(N);
  tab.jac.assign(N, M);
  tab.ok.assign(N, 1);
  tab.failures.assign(N, "");
  for (std::size_t i = 0; i < N; ++i) {
    const Point z = lat.node(i);
    const Eigen::Vector2d w = M * Eigen::Vector2d(z[0], z[1]);
    tab.chi[i] = {w(0), w(1)};
    // homogeneous quadratic symbols: psi = (xi^t x^t - xi x) / 2
    tab.psi[i] = 0.5 * (w(1) * w(0) - z[1] * z[0]);
  }
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(M);
  tab.lipschitz = svd.singularValues()(0);
  tab.inverse_lipschitz = 1.0 / svd.singularValues()(1);
  tab.max_det_error = std::abs(M.determinant() - 1.0);
  return tab;
}

Lattice window_fit_lattice(const GridSpec& g) {
  const int q = std::max(1, static_cast<int>(std::lround(0.5 / g.dxi())));
  return make_lattice(g, 0.5, q, 24, 24);
}

namespace {

// Flow endpoint and phase at one seed, consistent with lattice_flow.
std::pair<Point, double> flow_at(const PropagatorHandle& h, const Point& z) {
  if (h.symbol.kind == SymbolKind::quadratic_form) {
    const Eigen::Matrix2d M = quadratic_flow(h.symbol, h.t_start, h.t_end);
    const Eigen::Vector2d w = M * Eigen::Vector2d(z[0], z[1]);
    return {{w(0), w(1)}, 0.5 * (w(1) * w(0) - z[1] * z[0])};
  }
  FlowOptions opt;
  opt.error_estimate = false;
  opt.keep_trajectory = false;
  const int steps = h.steps() > 0 ? h.steps() : 1;
  auto r = integrate_flow(h.symbol, SymbolModel::z1(z[0], z[1]), h.t_start, h.t_end, steps, opt);
  return {{r.final_state()(0), r.final_state()(1)}, r.psi.back()};
}

}  // namespace

EvolvedWindow evolved_window(const PropagatorHandle& h, const Point& z, const Window& g, const Lattice& fit_lat) {
  const SampledState u = evolve(h, tf_shift(g.state, z));
  const auto [chi, psi] = flow_at(h, z);
  // G = e^{-i psi} pi(chi)^* u, with pi(w)^* k(y) = e^{-i eta y} k(y + w_x).
  EvolvedWindow ew;
  ew.z = z;
  ew.t = h.t_end;
  ew.G = u;
  ew.G.values = shifted(u.values, u.grid, -chi[0]);
  const cplx ph = std::exp(-kI * psi);
  for (int j = 0; j < u.grid.n; ++j) ew.G.values[j] *= ph * std::exp(-kI * chi[1] * u.grid.x(j));
  ew.decay = fit_exponential_decay(stft(ew.G, g, fit_lat), Point{0.0, 0.0});
  return ew;
}

EvolvedWindow evolved_window(const PropagatorHandle& h, const Point& z, const Window& g) {
  return evolved_window(h, z, g, window_fit_lattice(g.state.grid));
}

WindowTable WindowTable::shared(SampledState G) {
  WindowTable t;
  t.mode_ = Mode::shared;
  t.shared_ = std::make_shared<const SampledState>(std::move(G));
  return t;
}

WindowTable WindowTable::lazy(const PropagatorHandle& h, const Window& g) {
  WindowTable t;
  t.mode_ = Mode::lazy;
  t.handle_ = std::make_shared<const PropagatorHandle>(h);
  t.window_ = std::make_shared<const Window>(g);
  t.cache_ = std::make_shared<Cache>();
  return t;
}

WindowTable WindowTable::explicit_nodes(std::map<std::size_t, SampledState> nodes) {
  WindowTable t;
  t.mode_ = Mode::explicit_nodes;
  t.nodes_ = std::make_shared<const std::map<std::size_t, SampledState>>(std::move(nodes));
  return t;
}

std::size_t WindowTable::cached() const {
  if (mode_ != Mode::lazy) return 0;
  std::lock_guard<std::mutex> lock(cache_->mu);
  return cache_->entries.size();
}

SampledState WindowTable::get(std::size_t node, const Point& z) const {
  switch (mode_) {
    case Mode::shared: return *shared_;
    case Mode::explicit_nodes: {
      auto it = nodes_->find(node);
      if (it == nodes_->end()) fail(ErrorCode::precondition, "window table: missing node " + std::to_string(node));
      return it->second;
    }
    case Mode::lazy: break;
  }
  const auto key = std::make_tuple(handle_->symbol.name, handle_->t_end, std::lround(z[0] * 1e9), std::lround(z[1] * 1e9));
  {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->entries.find(key);
    if (it != cache_->entries.end()) return it->second;
  }
  // Computed outside the lock; concurrent inserts of the same key are identical.
  SampledState G = evolved_window(*handle_, z, *window_).G;
  std::lock_guard<std::mutex> lock(cache_->mu);
  cache_->entries.emplace(key, G);
  return G;
}

SampledState gabor_multiplier_apply(const PropagatorHandle& h, const SampledState& f, const Window& g,
                                    const Lattice& lat, const WindowTable& windows, const MultiplierOptions& opt) {
  h.validate();
  lat.validate_for(f.grid);
  const StftTable V = stft(f, g, lat);
  const double peak = V.peak();
  SampledState out(f.grid);
  if (peak == 0.0) return out;
  const FlowTable flow = lattice_flow(h.symbol, lat, h.t_start, h.t_end, h.steps());
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < lat.size(); ++i)
    if (std::abs(V.values[i]) > opt.skip_below * peak) {
      if (!flow.ok[i]) fail(ErrorCode::numerical, "gabor_multiplier_apply: flow failed at node " + std::to_string(i) + ": " + flow.failures[i]);
      active.push_back(i);
    }
  const double cell = lat.cell();
  out.values = ordered_accumulate(active.size(), f.values.size(), [&](std::size_t a, CVec& acc) {
    const std::size_t i = active[a];
    const SampledState G = windows.get(i, lat.node(i));
    require_same_grid(G.grid, f.grid, "gabor_multiplier_apply");
    const SampledState p = tf_shift(G, flow.chi[i]);
    const cplx c = cell * V.values[i] * std::exp(kI * flow.psi[i]);
    for (std::size_t y = 0; y < acc.size(); ++y) acc[y] += c * p.values[y];
  });
  return out;
}

SampledState metaplectic_apply(const SymbolModel& a, double t, const SampledState& f, const Window& g,
                               const Lattice& lat) {
  if (a.kind != SymbolKind::quadratic_form) fail(ErrorCode::precondition, "metaplectic_apply: quadratic_form symbol required");
  if (g.kind != WindowKind::gaussian) fail(ErrorCode::precondition, "metaplectic_apply: Gaussian window required");
  if (std::abs(l2_norm(g.state) - synthesis_norm()) > 1e-10 * synthesis_norm())
    fail(ErrorCode::precondition, "metaplectic_apply: window must have norm (2 pi)^{-1/2}");
  lat.validate_for(f.grid);
  PropagatorHandle h{a, Method::metaplectic_exact, 0.0, t, 0.0};
  return gabor_multiplier_apply(h, f, g, lat, WindowTable::shared(metaplectic_window(a, 0.0, t, g)));
}

}  // namespace gwpk
