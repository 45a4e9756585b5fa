#include "gwpk/tf_analysis.hpp"

#include <cmath>
#include <sstream>

namespace gwpk {

namespace {

Window finish(SampledState s, WindowKind kind, bool normalize) {
  const double nrm = l2_norm(s);
  if (!(nrm > 0.0)) fail(ErrorCode::invalid_argument, "window has zero norm");
  if (normalize)
    for (auto& v : s.values) v *= synthesis_norm() / nrm;
  Window w{std::move(s), kind, 0.0, 1.0};
  w.l2_normalization = l2_norm(w.state);
  return w;
}

// Grid index of a lattice frequency node.
int freq_bin(const GridSpec& g, double xi) { return static_cast<int>(std::lround(xi / g.dxi())) + g.n / 2; }

}  // namespace

Window gaussian_window(const GridSpec& g, double width) {
  Window w = finish(normalized_gaussian(g, 0.0, 0.0, width), WindowKind::gaussian, true);
  w.width = width;
  return w;
}

Window hermite_window(const GridSpec& g, int order) {
  if (order < 0 || order > 20) fail(ErrorCode::invalid_argument, "hermite order out of range");
  auto s = sample(g, [order](double x) {
    double h0 = 1.0, h1 = 2.0 * x;
    double h = order == 0 ? h0 : h1;
    for (int k = 1; k < order; ++k) {
      h = 2.0 * x * h1 - 2.0 * k * h0;
      h0 = h1;
      h1 = h;
    }
    return cplx(h * std::exp(-0.5 * x * x));
  });
  return finish(std::move(s), WindowKind::hermite, true);
}

Window custom_window(const SampledState& s, bool normalize) { return finish(s, WindowKind::custom, normalize); }

const char* to_string(WindowKind k) {
  switch (k) {
    case WindowKind::gaussian: return "gaussian";
    case WindowKind::hermite: return "hermite";
    case WindowKind::custom: return "custom";
  }
  return "custom";
}

long Lattice::nearest(const Point& p) const {
  const long j = std::lround(p[0] / dx) + nx / 2;
  const long k = std::lround(p[1] / dxi) + nxi / 2;
  if (j < 0 || j >= nx || k < 0 || k >= nxi) return -1;
  return j * nxi + k;
}

void Lattice::validate() const {
  if (nx < 1 || nxi < 1) fail(ErrorCode::invalid_argument, "lattice: node counts must be positive");
  if (!(dx > 0.0) || !(dxi > 0.0)) fail(ErrorCode::invalid_argument, "lattice: steps must be positive");
  if (oversampling() < 2.0 - 1e-12) {
    std::ostringstream os;
    os << "lattice under-sampled: oversampling " << oversampling() << " < 2";
    fail(ErrorCode::precondition, os.str());
  }
}

void Lattice::validate_for(const GridSpec& g) const {
  validate();
  if (g.d != 1) fail(ErrorCode::invalid_argument, "lattice: d=1 grids only");
  const double q = dxi / g.dxi();
  if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q) || std::round(q) < 1)
    fail(ErrorCode::precondition, "lattice: dxi must be a multiple of the grid frequency step");
  const int k0 = freq_bin(g, xi(0)), k1 = freq_bin(g, xi(nxi - 1));
  if (k0 < 0 || k1 >= g.n) fail(ErrorCode::precondition, "lattice exceeds the grid Nyquist range");
  if (x(0) < -g.x_max || x(nx - 1) >= g.x_max) fail(ErrorCode::precondition, "lattice exceeds the spatial grid");
}

Lattice make_lattice(const GridSpec& g, double dx, int q, int nx, int nxi) {
  Lattice l{dx, q * g.dxi(), nx, nxi};
  l.validate_for(g);
  return l;
}

Lattice auto_lattice(const GridSpec& g, int nmax, double coverage) {
  const double xe = coverage * g.x_max, fe = coverage * g.xi_max();
  const double dx = 2.0 * xe / nmax;
  int q = std::max(1, static_cast<int>(std::ceil(2.0 * fe / nmax / g.dxi())));
  Lattice l{dx, q * g.dxi(), nmax, nmax};
  l.validate_for(g);
  return l;
}

double StftTable::peak() const {
  double p = 0.0;
  for (const auto& v : values) p = std::max(p, std::abs(v));
  return p;
}

double StftTable::edge_ratio() const {
  const double p = peak();
  if (p == 0.0) return 0.0;
  double e = 0.0;
  for (int j = 0; j < lattice.nx; ++j)
    for (int k = 0; k < lattice.nxi; ++k)
      if (j == 0 || k == 0 || j == lattice.nx - 1 || k == lattice.nxi - 1) e = std::max(e, std::abs(at(j, k)));
  return e / p;
}

StftTable stft(const SampledState& f, const Window& g, const Lattice& lat) {
  require_same_grid(f.grid, g.state.grid, "stft");
  if (f.domain != Domain::position || g.state.domain != Domain::position)
    fail(ErrorCode::domain_mismatch, "stft expects position-domain inputs");
  lat.validate_for(f.grid);
  const GridSpec& gr = f.grid;
  StftTable tbl{lat, CVec(lat.size())};
  parallel_for(static_cast<std::size_t>(lat.nx), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const double xj = lat.x(j);
    CVec w = shifted(g.state.values, gr, xj);
    for (int i = 0; i < gr.n; ++i) w[i] = f.values[i] * std::conj(w[i]);
    fourier_forward_inplace(w, gr);
    for (int k = 0; k < lat.nxi; ++k) {
      const double xi = lat.xi(k);
      tbl.values[lat.index(j, k)] = std::exp(kI * xi * xj) * w[freq_bin(gr, xi)];
    }
  });
  return tbl;
}

SampledState istft(const StftTable& tbl, const Window& g) {
  const GridSpec& gr = g.state.grid;
  const Lattice& lat = tbl.lattice;
  lat.validate_for(gr);
  const double nrm = l2_norm(g.state);
  if (std::abs(nrm - synthesis_norm()) > 1e-10 * synthesis_norm()) {
    std::ostringstream os;
    os << "istft: window norm " << nrm << " differs from (2 pi)^{-1/2}";
    fail(ErrorCode::precondition, os.str());
  }
  // Row contributions are stored and summed in row order so that the result
  // does not depend on the thread count.
  std::vector<CVec> rows(static_cast<std::size_t>(lat.nx));
  const double scale = lat.cell() * kTwoPi / gr.dxi();
  parallel_for(rows.size(), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const double xj = lat.x(j);
    CVec p(gr.n, 0.0);
    bool any = false;
    for (int k = 0; k < lat.nxi; ++k) {
      const cplx v = tbl.at(j, k);
      if (v == 0.0) continue;
      any = true;
      p[freq_bin(gr, lat.xi(k))] = v * std::exp(-kI * lat.xi(k) * xj);
    }
    if (!any) return;
    fourier_inverse_inplace(p, gr);
    const CVec w = shifted(g.state.values, gr, xj);
    for (int i = 0; i < gr.n; ++i) p[i] *= w[i] * scale;
    rows[jj] = std::move(p);
  });
  SampledState out(gr);
  for (const auto& r : rows)
    if (!r.empty())
      for (int i = 0; i < gr.n; ++i) out.values[i] += r[i];
  return out;
}

SampledState tf_shift(const SampledState& g, const Point& z) {
  SampledState out = g;
  out.values = shifted(g.values, g.grid, z[0]);
  for (int i = 0; i < g.grid.n; ++i) out.values[i] *= std::exp(kI * z[1] * (g.grid.x(i) - z[0]));
  return out;
}

cplx stft_point(const SampledState& f, const SampledState& g, const Point& z) { return inner(f, tf_shift(g, z)); }

DecayFit fit_decay_samples(const RVec& r, const RVec& amplitude, const DecayOptions& opt) {
  double peak = 0.0;
  for (double a : amplitude) peak = std::max(peak, a);
  DecayFit fit;
  fit.floor = opt.floor;
  if (peak == 0.0) fail(ErrorCode::numerical, "decay fit: all samples are zero");
  const double cut = opt.floor * peak;
  std::size_t above = 0;
  RVec xs, ys;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(amplitude[i] > cut)) continue;
    ++above;
    if (r[i] < opt.r0) continue;
    xs.push_back(r[i]);
    ys.push_back(std::log(amplitude[i]));
  }
  if (above > 0 && xs.empty()) fail(ErrorCode::numerical, "decay fit degenerate: all samples above floor lie in the core ball");
  if (xs.size() < opt.min_samples)
    fail(ErrorCode::numerical, "decay fit: too few samples above floor (" + std::to_string(xs.size()) + ")");
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 1e-300) fail(ErrorCode::numerical, "decay fit degenerate: no spread in distance");
  const double slope = sxy / sxx;
  fit.eps = -slope;
  fit.C = my - slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.C - fit.eps * xs[i]);
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / m);
  fit.samples = xs.size();
  fit.degenerate = fit.eps < kRegularityThreshold;
  return fit;
}

DecayFit fit_exponential_decay(const StftTable& tbl, const CenterMap& center, const DecayOptions& opt) {
  RVec r(tbl.values.size()), a(tbl.values.size());
  for (std::size_t i = 0; i < tbl.values.size(); ++i) {
    const Point z = tbl.lattice.node(i);
    r[i] = dist(z, center(z));
    a[i] = std::abs(tbl.values[i]);
  }
  return fit_decay_samples(r, a, opt);
}

DecayFit fit_exponential_decay(const StftTable& tbl, const Point& center, const DecayOptions& opt) {
  return fit_exponential_decay(tbl, CenterMap([center](const Point&) { return center; }), opt);
}

namespace {

struct RateFit {
  double rate = 0.0;
  bool power_law = false;
};

// Exponential fit with a competing power-law fit; when the power law explains
// the far field clearly better (half the log residual) the rate is reported as 0.
RateFit rate_with_model_selection(const RVec& r, const RVec& a, const DecayOptions& opt) {
  DecayFit ef = fit_decay_samples(r, a, opt);
  RVec lr(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) lr[i] = r[i] > 0 ? std::log(r[i]) : -1e300;
  DecayOptions popt = opt;
  popt.r0 = std::log(opt.r0);
  DecayFit pf = fit_decay_samples(lr, a, popt);
  RateFit out;
  if (pf.residual < 0.5 * ef.residual) {
    out.power_law = true;
    out.rate = 0.0;
  } else {
    out.rate = ef.eps;
  }
  return out;
}

}  // namespace

S11Report s11_membership_report(const SampledState& f, const Window& g, const S11Options& opt) {
  if (f.grid.d != 1) fail(ErrorCode::invalid_argument, "s11 report: d=1 only");
  if (opt.check_boundary) {
    const double bm = boundary_mass(f);
    if (bm >= 1e-10) {
      std::ostringstream os;
      os << "s11 report: boundary mass " << bm << " >= 1e-10";
      fail(ErrorCode::boundary_mass, os.str());
    }
  }
  const GridSpec& gr = f.grid;
  S11Report rep;
  RVec r(gr.n), a(gr.n);
  for (int j = 0; j < gr.n; ++j) {
    r[j] = std::abs(gr.x(j));
    a[j] = std::abs(f.values[j]);
  }
  auto pos = rate_with_model_selection(r, a, opt.fit);
  const SampledState F = fourier_forward(f);
  for (int k = 0; k < gr.n; ++k) {
    r[k] = std::abs(gr.xi(k));
    a[k] = std::abs(F.values[k]);
  }
  auto fr = rate_with_model_selection(r, a, opt.fit);
  const StftTable tbl = stft(f, g, auto_lattice(gr));
  RVec rz(tbl.values.size()), az(tbl.values.size());
  for (std::size_t i = 0; i < tbl.values.size(); ++i) {
    rz[i] = dist(tbl.lattice.node(i), {0.0, 0.0});
    az[i] = std::abs(tbl.values[i]);
  }
  auto st = rate_with_model_selection(rz, az, opt.fit);
  rep.position_rate = pos.rate;
  rep.frequency_rate = fr.rate;
  rep.stft_rate = st.rate;
  rep.position_power_law = pos.power_law;
  rep.frequency_power_law = fr.power_law;
  rep.stft_power_law = st.power_law;
  rep.pass = rep.position_rate > opt.threshold && rep.frequency_rate > opt.threshold && rep.stft_rate > opt.threshold;
  return rep;
}

DominationResult window_change_domination_check(const SampledState& f, const Window& g, const Window& h,
                                                const Lattice& lat, bool sharp) {
  const double g2 = std::pow(l2_norm(g.state), 2);
  if (!(g2 > 0.0)) fail(ErrorCode::invalid_argument, "domination check: g must be nonzero");
  const GridSpec& gr = f.grid;
  const StftTable vhf = stft(f, h, lat);
  const StftTable vgf = stft(f, g, lat);
  // V_h g on all pairwise node differences; differences outside the grid are
  // treated as zero (g and h are localized well inside the grid).
  Lattice dl{lat.dx, lat.dxi, 2 * lat.nx, 2 * lat.nxi};
  while (true) {
    try {
      dl.validate_for(gr);
      break;
    } catch (const Error&) {
      if (dl.nx > 2 && (dl.x(0) < -gr.x_max || dl.x(dl.nx - 1) >= gr.x_max))
        dl.nx -= 2;
      else if (dl.nxi > 2)
        dl.nxi -= 2;
      else
        throw;
    }
  }
  const StftTable vhg = stft(g.state, h, dl);
  const double c = (sharp ? 1.0 / kTwoPi : 1.0) / g2 * lat.cell();
  DominationResult res;
  res.max_violation = -INFINITY;
  RVec viol(lat.size());
  parallel_for(lat.size(), [&](std::size_t wi) {
    const int wj = static_cast<int>(wi) / lat.nxi, wk = static_cast<int>(wi) % lat.nxi;
    double rhs = 0.0;
    for (int zj = 0; zj < lat.nx; ++zj) {
      const int dj = wj - zj + dl.nx / 2;
      if (dj < 0 || dj >= dl.nx) continue;
      for (int zk = 0; zk < lat.nxi; ++zk) {
        const int dk = wk - zk + dl.nxi / 2;
        if (dk < 0 || dk >= dl.nxi) continue;
        rhs += std::abs(vgf.at(zj, zk)) * std::abs(vhg.at(dj, dk));
      }
    }
    viol[wi] = std::abs(vhf.values[wi]) - c * rhs;
  });
  for (std::size_t i = 0; i < viol.size(); ++i) {
    res.max_violation = std::max(res.max_violation, viol[i]);
    res.peak = std::max(res.peak, std::abs(vhf.values[i]));
  }
  return res;
}

}  // namespace gwpk
