#include "gwpk/hamiltonian.hpp"

#include <cmath>
#include <sstream>

namespace gwpk {

const char* to_string(SymbolKind k) {
  switch (k) {
    case SymbolKind::quadratic_form: return "quadratic_form";
    case SymbolKind::separable: return "separable";
    case SymbolKind::general: return "general";
  }
  return "general";
}

double SymbolModel::evaluate(double t, double x, double xi) const { return value(t, z1(x, xi)); }

ZVec SymbolModel::grad(double t, const ZVec& z) const {
  if (gradient) return gradient(t, z);
  const double h = 1e-5 * (1.0 + z.norm());
  ZVec g(z.size());
  for (int i = 0; i < z.size(); ++i) {
    ZVec p = z, m = z;
    p(i) += h;
    m(i) -= h;
    g(i) = (value(t, p) - value(t, m)) / (2.0 * h);
  }
  return g;
}

ZMat SymbolModel::hess(double t, const ZVec& z) const {
  if (hessian) return hessian(t, z);
  const double h = 1e-4 * (1.0 + z.norm());
  const int n = static_cast<int>(z.size());
  ZMat H(n, n);
  const double a0 = value(t, z);
  for (int i = 0; i < n; ++i) {
    ZVec p = z, m = z;
    p(i) += h;
    m(i) -= h;
    H(i, i) = (value(t, p) - 2.0 * a0 + value(t, m)) / (h * h);
    for (int j = i + 1; j < n; ++j) {
      ZVec pp = z, pm = z, mp = z, mm = z;
      pp(i) += h; pp(j) += h;
      pm(i) += h; pm(j) -= h;
      mp(i) -= h; mp(j) += h;
      mm(i) -= h; mm(j) -= h;
      H(i, j) = H(j, i) = (value(t, pp) - value(t, pm) - value(t, mp) + value(t, mm)) / (4.0 * h * h);
    }
  }
  return H;
}

SymbolModel quadratic_symbol(const ZMat& Q, const std::string& name) {
  if (Q.rows() != Q.cols() || (Q.rows() != 2 && Q.rows() != 4))
    fail(ErrorCode::invalid_argument, "quadratic symbol: Q must be 2d x 2d with d in {1, 2}");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-14 * (1.0 + Q.cwiseAbs().maxCoeff()))
    fail(ErrorCode::invalid_argument, "quadratic symbol: Q must be symmetric");
  if (!Q.allFinite()) fail(ErrorCode::invalid_argument, "quadratic symbol: Q must be finite");
  SymbolModel a;
  a.name = name;
  a.description = "quadratic form z^T Q z / 2";
  a.kind = SymbolKind::quadratic_form;
  a.d = static_cast<int>(Q.rows()) / 2;
  a.Q = Q;
  a.value = [Q](double, const ZVec& z) { return 0.5 * z.dot(Q * z); };
  a.gradient = [Q](double, const ZVec& z) -> ZVec { return Q * z; };
  a.hessian = [Q](double, const ZVec&) -> ZMat { return Q; };
  // Quadratic forms without x-xi coupling also split into k(xi) + V(x).
  if (a.d == 1 && Q(0, 1) == 0.0) {
    const double qx = Q(0, 0), qk = Q(1, 1);
    a.kinetic = [qk](double xi) { return 0.5 * qk * xi * xi; };
    a.potential = [qx](double, double x) { return 0.5 * qx * x * x; };
  }
  return a;
}

SymbolModel separable_symbol(std::function<double(double)> k, std::function<double(double)> dk,
                             std::function<double(double)> ddk, std::function<double(double, double)> V,
                             std::function<double(double, double)> dV, std::function<double(double, double)> ddV,
                             bool time_dependent, const std::string& name) {
  SymbolModel a;
  a.name = name;
  a.description = "separable k(xi) + V(t, x)";
  a.kind = SymbolKind::separable;
  a.d = 1;
  a.time_dependent = time_dependent;
  a.value = [k, V](double t, const ZVec& z) { return k(z(1)) + V(t, z(0)); };
  a.gradient = [dk, dV](double t, const ZVec& z) -> ZVec { return SymbolModel::z1(dV(t, z(0)), dk(z(1))); };
  a.hessian = [ddk, ddV](double t, const ZVec& z) -> ZMat {
    ZMat H = ZMat::Zero(2, 2);
    H(0, 0) = ddV(t, z(0));
    H(1, 1) = ddk(z(1));
    return H;
  };
  a.kinetic = k;
  a.potential = V;
  return a;
}

SymbolModel general_symbol(std::function<double(double, const ZVec&)> fn, int d, bool time_dependent,
                           const std::string& name) {
  if (d != 1 && d != 2) fail(ErrorCode::invalid_argument, "general symbol: d must be 1 or 2");
  SymbolModel a;
  a.name = name;
  a.description = "general callable symbol";
  a.kind = SymbolKind::general;
  a.d = d;
  a.time_dependent = time_dependent;
  a.value = std::move(fn);
  return a;
}

double kick_switch(double t) { return 0.5 * (1.0 + std::tanh((t - 0.5) / 0.1)); }

std::vector<SymbolInfo> symbol_registry() {
  return {
      {"free", "free particle a = xi^2"},
      {"harmonic", "harmonic oscillator a = (x^2 + xi^2)/2"},
      {"shear", "squeezing generator a = x xi"},
      {"anharmonic-bounded", "a = xi^2 + cos x"},
      {"kicked", "a = xi^2 + cos(x) s(t), smooth switch s centred at t = 0.5"},
  };
}

SymbolModel make_symbol(const std::string& name) {
  auto described = [&](SymbolModel a) {
    a.name = name;
    for (const auto& e : symbol_registry())
      if (e.name == name) a.description = e.description;
    return a;
  };
  if (name == "free") return described(quadratic_symbol((ZMat(2, 2) << 0, 0, 0, 2).finished()));
  if (name == "harmonic") return described(quadratic_symbol((ZMat(2, 2) << 1, 0, 0, 1).finished()));
  if (name == "shear") return described(quadratic_symbol((ZMat(2, 2) << 0, 1, 1, 0).finished()));
  auto sq = [](double xi) { return xi * xi; };
  auto dsq = [](double xi) { return 2.0 * xi; };
  auto ddsq = [](double) { return 2.0; };
  if (name == "anharmonic-bounded")
    return described(separable_symbol(
        sq, dsq, ddsq, [](double, double x) { return std::cos(x); }, [](double, double x) { return -std::sin(x); },
        [](double, double x) { return -std::cos(x); }, false));
  if (name == "kicked")
    return described(separable_symbol(
        sq, dsq, ddsq, [](double t, double x) { return std::cos(x) * kick_switch(t); },
        [](double t, double x) { return -std::sin(x) * kick_switch(t); },
        [](double t, double x) { return -std::cos(x) * kick_switch(t); }, true));
  fail(ErrorCode::config, "unknown symbol '" + name + "'");
}

namespace {

struct Aug {
  ZVec z;
  ZMat J;
  double psi = 0.0;
};

ZMat symplectic_unit(int d) {
  ZMat S = ZMat::Zero(2 * d, 2 * d);
  for (int i = 0; i < d; ++i) {
    S(i, d + i) = 1.0;
    S(d + i, i) = -1.0;
  }
  return S;
}

Aug rhs(const SymbolModel& a, const ZMat& S, double t, const Aug& y) {
  const int d = a.d;
  const ZVec g = a.grad(t, y.z);
  Aug f;
  f.z = S * g;
  f.J = S * a.hess(t, y.z) * y.J;
  // psi' = xi . a_xi - a
  f.psi = y.z.tail(d).dot(g.tail(d)) - a.value(t, y.z);
  return f;
}

Aug axpy(const Aug& y, double h, const Aug& k) {
  return Aug{y.z + h * k.z, y.J + h * k.J, y.psi + h * k.psi};
}

struct RunOut {
  ZVec z;
  double psi;
};

RunOut run(const SymbolModel& a, const ZVec& seed, double t0, double T, int steps, const FlowOptions& opt,
           FlowResult* keep) {
  const int n = 2 * a.d;
  const ZMat S = symplectic_unit(a.d);
  Aug y{seed, ZMat::Identity(n, n), 0.0};
  const double h = (T - t0) / steps;
  if (keep) {
    keep->t_grid.push_back(t0);
    keep->traj.push_back(y.z);
    keep->psi.push_back(0.0);
    keep->jac.push_back(y.J);
  }
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * h;
    const Aug k1 = rhs(a, S, t, y);
    const Aug k2 = rhs(a, S, t + 0.5 * h, axpy(y, 0.5 * h, k1));
    const Aug k3 = rhs(a, S, t + 0.5 * h, axpy(y, 0.5 * h, k2));
    const Aug k4 = rhs(a, S, t + h, axpy(y, h, k3));
    Aug next{y.z + (h / 6.0) * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
             y.J + (h / 6.0) * (k1.J + 2.0 * k2.J + 2.0 * k3.J + k4.J),
             y.psi + (h / 6.0) * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi)};
    if (!next.z.allFinite() || !next.J.allFinite() || !std::isfinite(next.psi) ||
        next.z.norm() > opt.blowup_radius) {
      std::ostringstream os;
      os << "flow blow-up after t = " << t << " (last valid time)";
      throw FlowBlowUp(os.str(), t);
    }
    y = std::move(next);
    if (keep) {
      const double tn = (s + 1 == steps) ? T : t0 + (s + 1) * h;
      if (opt.keep_trajectory || s + 1 == steps) {
        keep->t_grid.push_back(tn);
        keep->traj.push_back(y.z);
        keep->psi.push_back(y.psi);
        keep->jac.push_back(y.J);
      }
    }
  }
  return {y.z, y.psi};
}

}  // namespace

FlowResult integrate_flow(const SymbolModel& a, const ZVec& seed, double t0, double T, int steps,
                          const FlowOptions& opt) {
  if (seed.size() != 2 * a.d) fail(ErrorCode::invalid_argument, "integrate_flow: seed dimension mismatch");
  if (steps < 1) fail(ErrorCode::invalid_argument, "integrate_flow: steps must be positive");
  if (!std::isfinite(T) || !std::isfinite(t0)) fail(ErrorCode::invalid_argument, "integrate_flow: non-finite time");
  if (a.kind == SymbolKind::general && !a.validated)
    fail(ErrorCode::precondition, "integrate_flow: general symbols must pass validate_symbol first");
  FlowResult res;
  if (T == t0) {
    const int n = 2 * a.d;
    res.t_grid = {t0};
    res.traj = {seed};
    res.psi = {0.0};
    res.jac = {ZMat::Identity(n, n)};
    return res;
  }
  const RunOut coarse = run(a, seed, t0, T, steps, opt, &res);
  if (opt.error_estimate) {
    const RunOut fine = run(a, seed, t0, T, 2 * steps, opt, nullptr);
    res.error_estimate = std::max((fine.z - coarse.z).cwiseAbs().maxCoeff(), std::abs(fine.psi - coarse.psi));
  }
  return res;
}

FlowResult integrate_flow(const SymbolModel& a, const ZVec& seed, double T, int steps, const FlowOptions& opt) {
  return integrate_flow(a, seed, 0.0, T, steps, opt);
}

FlowTable flow_map_on_lattice(const SymbolModel& a, const Lattice& lat, double T, int steps) {
  return flow_map_on_lattice(a, lat, 0.0, T, steps);
}

FlowTable flow_map_on_lattice(const SymbolModel& a, const Lattice& lat, double t0, double T, int steps) {
  if (a.d != 1) fail(ErrorCode::invalid_argument, "flow_map_on_lattice: d=1 lattices only");
  lat.validate();
  const std::size_t N = lat.size();
  FlowTable tab;
  tab.lattice = lat;
  tab.T = T;
  tab.chi.resize(N);
  tab.psi.assign(N, 0.0);
  tab.jac.assign(N, Eigen::Matrix2d::Identity());
  tab.ok.assign(N, 0);
  tab.failures.assign(N, "");
  RVec det_err(N, 0.0);
  FlowOptions opt;
  opt.error_estimate = false;
  parallel_for(N, [&](std::size_t i) {
    const Point z = lat.node(i);
    try {
      FlowResult r = integrate_flow(a, SymbolModel::z1(z[0], z[1]), t0, T, steps, opt);
      for (const auto& J : r.jac) det_err[i] = std::max(det_err[i], std::abs(J.determinant() - 1.0));
      tab.chi[i] = {r.final_state()(0), r.final_state()(1)};
      tab.psi[i] = r.psi.back();
      tab.jac[i] = r.final_jac();
      tab.ok[i] = 1;
    } catch (const Error& e) {
      tab.chi[i] = {NAN, NAN};
      tab.failures[i] = e.what();
    }
  });
  for (double e : det_err) tab.max_det_error = std::max(tab.max_det_error, e);
  // Pairwise Lipschitz bounds; per-row maxima merged in row order.
  RVec lip(N, 0.0), inv(N, 0.0);
  parallel_for(N, [&](std::size_t i) {
    if (!tab.ok[i]) return;
    const Point zi = lat.node(i);
    for (std::size_t j = i + 1; j < N; ++j) {
      if (!tab.ok[j]) continue;
      const double dz = dist(zi, lat.node(j));
      const double dc = dist(tab.chi[i], tab.chi[j]);
      lip[i] = std::max(lip[i], dc / dz);
      if (dc > 0) inv[i] = std::max(inv[i], dz / dc);
      else inv[i] = INFINITY;
    }
  });
  if (N > 1) {
    tab.lipschitz = 0.0;
    tab.inverse_lipschitz = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      tab.lipschitz = std::max(tab.lipschitz, lip[i]);
      tab.inverse_lipschitz = std::max(tab.inverse_lipschitz, inv[i]);
    }
  }
  return tab;
}

double phase_gradient_check(const SymbolModel& a, const ZVec& seed, double T, int steps) {
  const int d = a.d;
  FlowOptions opt;
  opt.error_estimate = false;
  opt.keep_trajectory = false;
  const FlowResult base = integrate_flow(a, seed, T, steps, opt);
  const ZVec zT = base.final_state();
  const ZMat J = base.final_jac();
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < 2 * d; ++i) {
    ZVec p = seed, m = seed;
    p(i) += h;
    m(i) -= h;
    const double fd = (integrate_flow(a, p, T, steps, opt).psi.back() - integrate_flow(a, m, T, steps, opt).psi.back()) / (2.0 * h);
    // d psi = xi^t . d x^t - xi . dx
    double formula = 0.0;
    for (int l = 0; l < d; ++l) formula += zT(d + l) * J(l, i);
    if (i < d) formula -= seed(d + i);
    worst = std::max(worst, std::abs(fd - formula) / std::max(std::abs(formula), 1.0));
  }
  return worst;
}

namespace {

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// Mixed central difference d_x^i d_xi^j with step h (O(h^2)).
double mixed_fd(const SymbolModel& a, double t, double x, double xi, int i, int j, double h) {
  double s = 0.0;
  for (int p = 0; p <= i; ++p)
    for (int q = 0; q <= j; ++q) {
      const double w = ((p + q) % 2 ? -1.0 : 1.0) * binom(i, p) * binom(j, q);
      s += w * a.evaluate(t, x + (0.5 * i - p) * h, xi + (0.5 * j - q) * h);
    }
  return s / std::pow(h, i + j);
}

double richardson(const SymbolModel& a, double t, double x, double xi, int i, int j, double h) {
  return (4.0 * mixed_fd(a, t, x, xi, i, j, 0.5 * h) - mixed_fd(a, t, x, xi, i, j, h)) / 3.0;
}

double box_max(const SymbolModel& a, double t, const Box& b, int order, double h, int npts) {
  double m = 0.0;
  for (int ix = 0; ix < npts; ++ix)
    for (int ik = 0; ik < npts; ++ik) {
      const double x = b.x_lo + (b.x_hi - b.x_lo) * ix / (npts - 1);
      const double xi = b.xi_lo + (b.xi_hi - b.xi_lo) * ik / (npts - 1);
      for (int i = 0; i <= order; ++i) {
        const double v = richardson(a, t, x, xi, i, order - i, h);
        if (!std::isfinite(v)) fail(ErrorCode::numerical, "validate_symbol: derivative evaluation failed");
        m = std::max(m, std::abs(v) / (factorial(i) * factorial(order - i)));
      }
    }
  return m;
}

}  // namespace

SymbolValidation validate_symbol(const SymbolModel& a, int k, const Box& box, int K_max, double t) {
  if (a.d != 1) fail(ErrorCode::invalid_argument, "validate_symbol: d=1 only");
  if (K_max > 6) fail(ErrorCode::invalid_argument, "validate_symbol: K_max must be <= 6");
  if (k < 0 || k > K_max) fail(ErrorCode::invalid_argument, "validate_symbol: need 0 <= k <= K_max");
  const double h = 0.1;
  const int npts = 13;
  Box half{0.5 * (box.x_lo + box.x_hi) - 0.25 * (box.x_hi - box.x_lo),
           0.5 * (box.x_lo + box.x_hi) + 0.25 * (box.x_hi - box.x_lo),
           0.5 * (box.xi_lo + box.xi_hi) - 0.25 * (box.xi_hi - box.xi_lo),
           0.5 * (box.xi_lo + box.xi_hi) + 0.25 * (box.xi_hi - box.xi_lo)};
  double amax = 0.0;
  for (int ix = 0; ix < npts; ++ix)
    for (int ik = 0; ik < npts; ++ik)
      amax = std::max(amax, std::abs(a.evaluate(t, box.x_lo + (box.x_hi - box.x_lo) * ix / (npts - 1),
                                                box.xi_lo + (box.xi_hi - box.xi_lo) * ik / (npts - 1))));
  // Orders whose derivatives sit at the finite-difference noise level are skipped.
  const double noise = 1e-6 * std::max(1.0, amax);
  SymbolValidation rep;
  for (int m = k; m <= K_max; ++m) {
    const double full = box_max(a, t, box, m, h, npts);
    if (full <= noise) continue;
    const double hm = box_max(a, t, half, m, h, npts);
    rep.orders.push_back(m);
    rep.max_derivative.push_back(full);
    rep.half_box_growth.push_back(hm > 0 ? full / hm : INFINITY);
  }
  rep.C = 1.0;
  for (std::size_t i = 0; i < rep.orders.size(); ++i)
    rep.C = std::max(rep.C, std::pow(rep.max_derivative[i], 1.0 / (rep.orders[i] + 1)));
  for (std::size_t i = 0; i < rep.orders.size(); ++i)
    rep.max_ratios.push_back(rep.max_derivative[i] / std::pow(rep.C, rep.orders[i] + 1));
  for (std::size_t i = 0; i + 1 < rep.orders.size(); ++i)
    if (rep.orders[i + 1] == rep.orders[i] + 1 && rep.max_ratios[i + 1] > 1.5 * rep.max_ratios[i]) rep.super_geometric = true;
  for (double g : rep.half_box_growth)
    if (g > 1.5) rep.non_uniform = true;
  rep.violation = rep.super_geometric || rep.non_uniform;
  return rep;
}

}  // namespace gwpk
