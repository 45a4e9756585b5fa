#include "gwpk/analytic_diag.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace gwpk {

namespace {

constexpr double kEnergyFloor = 1e-14;
constexpr double kNoiseFlag = 1e-9;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// |x^0 d^b u| for b = 0..N with roundoff-level samples removed in both domains.
struct Derivatives {
  std::vector<RVec> mag;  // per order, per grid point
  double x_c = 0.0;
  double xi_c = 0.0;
  double norm = 0.0;
};

Derivatives derivatives(const SampledState& u, int N) {
  if (u.grid.d != 1) fail(ErrorCode::precondition, "energy: d=1 only");
  if (u.domain != Domain::position) fail(ErrorCode::domain_mismatch, "energy expects a position-domain state");
  if (N < 0 || N > kEnergyMaxOrder)
    fail(ErrorCode::invalid_argument, "energy: order must lie in [0, " + std::to_string(kEnergyMaxOrder) + "]");
  const GridSpec& g = u.grid;
  Derivatives D;
  D.norm = l2_norm(u);
  SampledState F = fourier_forward(u);
  double pk = 0.0;
  for (cplx c : F.values) pk = std::max(pk, std::abs(c));
  for (int k = 0; k < g.n; ++k) {
    if (std::abs(F.values[k]) < kEnergyFloor * pk)
      F.values[k] = 0.0;
    else
      D.xi_c = std::max(D.xi_c, std::abs(g.xi(k)));
  }
  D.mag.resize(N + 1);
  for (int b = 0; b <= N; ++b) {
    CVec v(F.values);
    for (int k = 0; k < g.n; ++k) {
      const double xi = g.xi(k);
      // the unpaired Nyquist mode has no consistent odd derivative
      v[k] *= (k == 0 && b % 2 == 1) ? cplx(0.0) : std::pow(kI * xi, b);
    }
    fourier_inverse_inplace(v, g);
    RVec m(g.n);
    double vp = 0.0;
    for (int i = 0; i < g.n; ++i) vp = std::max(vp, m[i] = std::abs(v[i]));
    for (int i = 0; i < g.n; ++i) {
      if (m[i] < kEnergyFloor * vp)
        m[i] = 0.0;
      else if (b == 0)
        D.x_c = std::max(D.x_c, std::abs(g.x(i)));
    }
    D.mag[b] = std::move(m);
  }
  return D;
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// sum_{a+b=N} ||x^a d^b u|| / (a! b!), i.e. E at eps = 1.
double unit_energy(const Derivatives& D, const GridSpec& g, int N) {
  double e = 0.0;
  for (int b = 0; b <= N; ++b) {
    const int a = N - b;
    double s = 0.0;
    for (int i = 0; i < g.n; ++i) {
      const double w = std::pow(g.x(i), a) * D.mag[b][i];
      s += w * w;
    }
    e += std::sqrt(s * g.dx()) / (factorial(a) * factorial(b));
  }
  return e;
}

double noise_of(const Derivatives& D, double eps, int N) {
  return kEnergyFloor * D.norm * std::pow(eps * (D.x_c + D.xi_c), N) / factorial(N);
}

}  // namespace

double energy_functional(const SampledState& u, double eps, int N) {
  if (!(eps > 0.0)) fail(ErrorCode::invalid_argument, "energy: eps must be positive");
  const Derivatives D = derivatives(u, N);
  return std::pow(eps, N) * unit_energy(D, u.grid, N);
}

double energy_noise_floor(const SampledState& u, double eps, int N) { return noise_of(derivatives(u, N), eps, N); }

EnergyProfile energy_profile(const SampledState& u, double eps, int N_max) {
  if (!(eps > 0.0)) fail(ErrorCode::invalid_argument, "energy: eps must be positive");
  const Derivatives D = derivatives(u, N_max);
  EnergyProfile P;
  P.N_max = N_max;
  P.eps = eps;
  double sup = 0.0;
  for (int N = 0; N <= N_max; ++N) {
    P.values.push_back(std::pow(eps, N) * unit_energy(D, u.grid, N));
    sup = std::max(sup, P.values.back());
    P.sup_values.push_back(sup);
    P.noise.push_back(noise_of(D, eps, N));
    if (P.flagged_from < 0 && P.noise.back() > kNoiseFlag * D.norm) P.flagged_from = N;
  }
  return P;
}

nlohmann::json RadiusTrack::to_json() const {
  nlohmann::json j;
  j["eps0"] = eps0;
  j["N_max"] = N_max;
  j["t"] = t;
  j["A_grid"] = A_grid;
  j["max_ratio_per_A"] = max_ratio;
  j["best_A"] = best_A >= 0 ? nlohmann::json(best_A) : nlohmann::json(nullptr);
  j["noise_flagged_from_order"] = flagged_from;
  return j;
}

RadiusTrack radius_track(const PropagatorHandle& h, const SampledState& u0, double eps0, int N_max,
                         const RadiusOptions& opt) {
  if (!(eps0 > 0.0)) fail(ErrorCode::invalid_argument, "radius_track: eps0 must be positive");
  if (opt.A_grid.empty()) fail(ErrorCode::invalid_argument, "radius_track: empty A grid");
  RadiusTrack R;
  R.eps0 = eps0;
  R.N_max = N_max;
  R.A_grid = opt.A_grid;
  R.t = opt.t_samples;
  if (R.t.empty())
    for (int i = 0; i <= 10; ++i) R.t.push_back(0.1 * i);

  const EnergyProfile P0 = energy_profile(u0, eps0, N_max);
  R.flagged_from = P0.flagged_from;
  const std::size_t nt = R.t.size(), stride = static_cast<std::size_t>(N_max) + 1;
  std::vector<RVec> base(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    if (R.t[i] < 0.0) fail(ErrorCode::invalid_argument, "radius_track: negative time sample");
    SampledState u = u0;
    if (R.t[i] > 0.0) {
      PropagatorHandle hi = h;
      hi.t_end = h.t_start + R.t[i];
      u = evolve(hi, u0);
    }
    const Derivatives D = derivatives(u, N_max);
    for (int N = 0; N <= N_max; ++N) {
      base[i].push_back(unit_energy(D, u.grid, N));
      if (noise_of(D, eps0, N) > kNoiseFlag * D.norm && (R.flagged_from < 0 || N < R.flagged_from)) R.flagged_from = N;
    }
  }
  for (double A : R.A_grid) {
    RVec rat(nt * stride);
    double mx = 0.0;
    for (std::size_t i = 0; i < nt; ++i)
      for (int N = 0; N <= N_max; ++N) {
        const double e = std::pow(eps0 * std::exp(-A * R.t[i]), N) * base[i][N];
        rat[i * stride + N] = e / (2.0 * P0.sup_values[N]);
        mx = std::max(mx, rat[i * stride + N]);
      }
    R.ratio.push_back(rat);
    R.max_ratio.push_back(mx);
    if (mx <= 1.0 && (R.best_A < 0 || A < R.best_A)) R.best_A = A;
  }
  return R;
}

// ---- weights ----------------------------------------------------------------

double WeightFunction::log_value(const Point& z) const {
  const double r0 = std::hypot(z[0], z[1]);
  double v = s * std::pow(r0, b) + a * std::log1p(r0);
  if (r != 0.0) v += r * std::log(std::log(std::exp(1.0) + r0));
  return v;
}

double WeightFunction::operator()(const Point& z) const { return std::exp(log_value(z)); }

double WeightFunction::exp_rate() const {
  if (s == 0.0 || b < 1.0) return 0.0;
  if (b > 1.0) return std::numeric_limits<double>::infinity();
  return std::abs(s);
}

nlohmann::json WeightFunction::to_json() const {
  return {{"a", a}, {"r", r}, {"s", s}, {"b", b}, {"exp_rate", std::isfinite(exp_rate()) ? exp_rate() : -1.0}};
}

NormP norm_p_from_string(const std::string& s) {
  if (s == "1") return NormP::one;
  if (s == "2") return NormP::two;
  if (s == "inf") return NormP::inf;
  fail(ErrorCode::invalid_argument, "modulation norm: p must be 1, 2 or inf, got '" + s + "'");
}

double mod_norm(const SampledState& f, const Window& g, NormP p, const RVec& weights, const Lattice& lat) {
  if (weights.size() != lat.size()) fail(ErrorCode::invalid_argument, "mod_norm: one weight per lattice node required");
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorCode::invalid_argument, "mod_norm: weights must be finite and positive");
  const StftTable V = stft(f, g, lat);
  // mass on the outer ring of nodes stands for the tail beyond the lattice
  double ring = 0.0, total = 0.0;
  for (int j = 0; j < lat.nx; ++j)
    for (int k = 0; k < lat.nxi; ++k) {
      const double m = std::norm(V.at(j, k));
      total += m;
      if (j == 0 || k == 0 || j == lat.nx - 1 || k == lat.nxi - 1) ring += m;
    }
  if (total > 0.0 && ring > 1e-12 * total)
    fail(ErrorCode::precondition, "mod_norm: the lattice edge carries " + sci(ring / total) +
                                      " of the STFT mass (limit 1e-12)");
  double acc = 0.0;
  for (std::size_t i = 0; i < V.values.size(); ++i) {
    const double v = std::abs(V.values[i]) * weights[i];
    switch (p) {
      case NormP::one: acc += v; break;
      case NormP::two: acc += v * v; break;
      case NormP::inf: acc = std::max(acc, v); break;
    }
  }
  switch (p) {
    case NormP::one: return acc * lat.cell();
    case NormP::two: return std::sqrt(acc * lat.cell());
    case NormP::inf: return acc;
  }
  return acc;
}

namespace {

RVec weights_at(const WeightFunction& m, const std::vector<Point>& pts) {
  RVec w(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double lv = m.log_value(pts[i]);
    if (!(lv <= kMaxLogWeight))
      fail(ErrorCode::invalid_argument, "weight overflow: log m = " + std::to_string(lv) + " exceeds " +
                                            std::to_string(kMaxLogWeight) + " on the lattice");
    w[i] = std::exp(lv);
  }
  return w;
}

std::vector<Point> nodes(const Lattice& lat) {
  std::vector<Point> p(lat.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = lat.node(i);
  return p;
}

}  // namespace

double mod_norm(const SampledState& f, const Window& g, NormP p, const WeightFunction& m, const Lattice& lat) {
  return mod_norm(f, g, p, weights_at(m, nodes(lat)), lat);
}

nlohmann::json BoundednessReport::to_json() const {
  return {{"ratios", ratios}, {"max_ratio", max_ratio}, {"spread", spread}, {"stable", stable},
          {"weight_rate", k},  {"sparsity_rate", eps}};
}

std::vector<SampledState> default_probes(const GridSpec& g) {
  std::vector<SampledState> out;
  for (Point c : {Point{0, 0}, Point{1.5, 0.5}, Point{-1.5, 0.5}, Point{1.5, -0.5}, Point{-1.5, -0.5}})
    out.push_back(normalized_gaussian(g, c[0], c[1], 1.0));
  return out;
}

BoundednessReport boundedness_check(const PropagatorHandle& h, const Window& g, NormP p, const WeightFunction& m,
                                    const Lattice& lat, double eps, const std::vector<SampledState>& probes) {
  BoundednessReport R;
  R.k = m.exp_rate();
  R.eps = eps;
  if (!(R.k < eps))
    fail(ErrorCode::precondition, "boundedness: weight rate " + std::to_string(R.k) +
                                      " is not below the sparsity rate " + std::to_string(eps));
  if (probes.empty()) fail(ErrorCode::invalid_argument, "boundedness: no probes");
  const FlowTable flow = lattice_flow(h.symbol, lat, h.t_start, h.t_end);
  for (std::size_t i = 0; i < flow.ok.size(); ++i)
    if (!flow.ok[i]) fail(ErrorCode::numerical, "boundedness: flow failed at node " + std::to_string(i));
  const RVec composed = weights_at(m, flow.chi);
  const RVec plain = weights_at(m, nodes(lat));
  double mn = std::numeric_limits<double>::infinity();
  for (const auto& u0 : probes) {
    const SampledState u = evolve(h, u0);
    const double r = mod_norm(u, g, p, plain, lat) / mod_norm(u0, g, p, composed, lat);
    R.ratios.push_back(r);
    R.max_ratio = std::max(R.max_ratio, r);
    mn = std::min(mn, r);
  }
  R.spread = R.max_ratio / mn;
  R.stable = std::isfinite(R.spread) && R.spread < 2.0;
  return R;
}

// ---- masks ------------------------------------------------------------------

std::size_t RegionMask::count() const {
  std::size_t c = 0;
  for (char v : mask) c += v ? 1 : 0;
  return c;
}

bool RegionMask::subset_of(const RegionMask& o) const {
  if (!(lattice == o.lattice)) fail(ErrorCode::grid_mismatch, "mask comparison on different lattices");
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && !o.mask[i]) return false;
  return true;
}

RegionMask RegionMask::complement() const {
  RegionMask c(lattice, provenance);
  for (std::size_t i = 0; i < mask.size(); ++i) c.mask[i] = mask[i] ? 0 : 1;
  return c;
}

Array to_array(const RegionMask& m) {
  Array a;
  a.dims = {static_cast<std::uint64_t>(m.lattice.nx), static_cast<std::uint64_t>(m.lattice.nxi)};
  a.real.resize(m.mask.size());
  for (std::size_t i = 0; i < m.mask.size(); ++i) a.real[i] = m.mask[i] ? 1.0 : 0.0;
  return a;
}

namespace {

// A mask stands for the union of the lattice cells of its nodes. p is near
// the mask when its distance to the cell of some masked node q is below
// delta <q>; since <q> <= <p> + |p - q|, such q lie within
// delta <p> / (1 - delta) plus half a cell diagonal of p.
double cell_distance(const Lattice& L, const Point& p, const Point& q) {
  const double ax = std::max(0.0, std::abs(p[0] - q[0]) - 0.5 * L.dx);
  const double ay = std::max(0.0, std::abs(p[1] - q[1]) - 0.5 * L.dxi);
  return std::hypot(ax, ay);
}

bool near_mask(const RegionMask& m, const Point& p, double delta) {
  const Lattice& L = m.lattice;
  const double R = delta * bracket(p) / (1.0 - delta) + 0.5 * std::hypot(L.dx, L.dxi);
  const int j0 = std::max(0, static_cast<int>(std::floor((p[0] - R) / L.dx)) + L.nx / 2);
  const int j1 = std::min(L.nx - 1, static_cast<int>(std::ceil((p[0] + R) / L.dx)) + L.nx / 2);
  const int k0 = std::max(0, static_cast<int>(std::floor((p[1] - R) / L.dxi)) + L.nxi / 2);
  const int k1 = std::min(L.nxi - 1, static_cast<int>(std::ceil((p[1] + R) / L.dxi)) + L.nxi / 2);
  for (int j = j0; j <= j1; ++j)
    for (int k = k0; k <= k1; ++k) {
      const std::size_t q = L.index(j, k);
      if (!m.mask[q]) continue;
      const Point z = L.node(q);
      if (cell_distance(L, p, z) < delta * bracket(z)) return true;
    }
  return false;
}

bool inside_box(const Lattice& L, const Point& p) {
  return p[0] >= L.x(0) - 0.5 * L.dx && p[0] <= L.x(L.nx - 1) + 0.5 * L.dx && p[1] >= L.xi(0) - 0.5 * L.dxi &&
         p[1] <= L.xi(L.nxi - 1) + 0.5 * L.dxi;
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorCode::invalid_argument, "delta must lie in (0, 1)");
}

}  // namespace

RegionMask delta_neighborhood(const RegionMask& m, double delta) {
  check_delta(delta);
  RegionMask out(m.lattice, "delta-neighborhood");
  parallel_for(m.mask.size(), [&](std::size_t i) { out.mask[i] = near_mask(m, m.lattice.node(i), delta) ? 1 : 0; });
  return out;
}

double nested_delta(const RegionMask& m, double delta, int max_halvings) {
  check_delta(delta);
  const RegionMask big = delta_neighborhood(m, delta);
  const RegionMask outer = big.complement();
  double ds = delta;
  for (int j = 1; j <= max_halvings; ++j) {
    ds *= 0.5;
    const RegionMask small = delta_neighborhood(m, ds);
    const bool nest = delta_neighborhood(small, ds).subset_of(big);
    const bool sep = delta_neighborhood(outer, ds).subset_of(small.complement());
    if (nest && sep) return ds;
  }
  fail(ErrorCode::not_converged, "nested_delta: no admissible delta* after halving");
}

std::size_t flow_neighborhood_violations(const RegionMask& m, const FlowTable& flow, double delta_star, double delta) {
  check_delta(delta);
  check_delta(delta_star);
  if (!(flow.lattice == m.lattice)) fail(ErrorCode::grid_mismatch, "flow table and mask use different lattices");
  const RegionMask small = delta_neighborhood(m, delta_star);
  std::vector<Point> centers;
  for (std::size_t i = 0; i < m.mask.size(); ++i)
    if (m.mask[i]) centers.push_back(flow.chi[i]);
  std::vector<char> bad(small.mask.size(), 0);
  parallel_for(small.mask.size(), [&](std::size_t i) {
    if (!small.mask[i]) return;
    const Point p = flow.chi[i];
    for (const Point& q : centers)
      if (dist(p, q) < delta * bracket(q)) return;
    bad[i] = 1;
  });
  std::size_t c = 0;
  for (char b : bad) c += b;
  return c;
}

double flow_delta(const RegionMask& m, const FlowTable& flow, double delta, int max_halvings) {
  double ds = delta;
  for (int j = 1; j <= max_halvings; ++j) {
    ds *= 0.5;
    if (flow_neighborhood_violations(m, flow, ds, delta) == 0) return ds;
  }
  fail(ErrorCode::not_converged, "flow_delta: no admissible delta* after halving");
}

RegionMask regular_region(const SampledState& f, const Window& g, double eps, const Lattice& lat) {
  if (!(eps >= 0.0)) fail(ErrorCode::invalid_argument, "regular_region: threshold must be non-negative");
  const StftTable V = stft(f, g, lat);
  const double pk = V.peak();
  RegionMask R(lat, "threshold-derived");
  for (std::size_t i = 0; i < lat.size(); ++i)
    R.mask[i] = std::abs(V.values[i]) <= pk * std::exp(-eps * bracket(lat.node(i))) ? 1 : 0;
  return R;
}

nlohmann::json PropagationReport::to_json() const {
  return {{"forward_violation", forward_violation},
          {"backward_violation", backward_violation},
          {"forward_count", forward_count},
          {"backward_count", backward_count},
          {"forward_outside_box", forward_outside},
          {"backward_outside_box", backward_outside},
          {"regular_nodes_before", regular_before.count()},
          {"regular_nodes_after", regular_after.count()},
          {"delta", delta},
          {"eps_threshold", eps},
          {"note", "bounded-box proxy: the lattice box stands in for a neighborhood of infinity"}};
}

PropagationReport singularity_propagation_check(const PropagatorHandle& h, const SampledState& f, const Window& g,
                                                const Lattice& lat, double delta, double eps) {
  check_delta(delta);
  PropagationReport R;
  R.delta = delta;
  R.eps = eps;
  const SampledState Sf = evolve(h, f);
  R.regular_before = regular_region(f, g, eps, lat);
  R.regular_after = regular_region(Sf, g, eps, lat);
  const FlowTable fwd = lattice_flow(h.symbol, lat, h.t_start, h.t_end);
  const FlowTable bwd = lattice_flow(h.symbol, lat, h.t_end, h.t_start);
  auto scan = [&](const RegionMask& from, const FlowTable& flow, const RegionMask& to, std::size_t& outside) {
    std::vector<char> bad(lat.size(), 0), out(lat.size(), 0);
    parallel_for(lat.size(), [&](std::size_t i) {
      if (!from.mask[i]) return;
      if (!flow.ok[i] || !inside_box(lat, flow.chi[i])) {
        out[i] = 1;
        return;
      }
      if (!near_mask(to, flow.chi[i], delta)) bad[i] = 1;
    });
    std::size_t c = 0;
    outside = 0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
      c += bad[i];
      outside += out[i];
    }
    return c;
  };
  R.forward_count = scan(R.regular_before, fwd, R.regular_after, R.forward_outside);
  R.backward_count = scan(R.regular_after, bwd, R.regular_before, R.backward_outside);
  R.forward_violation = static_cast<double>(R.forward_count) / lat.size();
  R.backward_violation = static_cast<double>(R.backward_count) / lat.size();
  return R;
}

SampledState chirp_bump(const GridSpec& g, double omega, double center, double half_width) {
  SampledState s = sample(g, [&](double x) -> cplx {
    const double u = (x - center) / half_width;
    if (std::abs(u) >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - u * u)) * std::exp(kI * omega * x);
  });
  const double n = l2_norm(s);
  for (auto& v : s.values) v /= n;
  return s;
}

}  // namespace gwpk
