#include "gwpk/gabor_matrix.hpp"

#include <algorithm>
#include <cmath>

namespace gwpk {

std::size_t GaborMatrix::valid_columns() const {
  return static_cast<std::size_t>(std::count(column_ok.begin(), column_ok.end(), 1));
}

std::size_t GaborMatrix::nnz() const {
  if (!dense) return sparse.size();
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](cplx v) { return v != cplx(0.0); }));
}

cplx GaborMatrix::at(std::size_t row, std::size_t col) const {
  if (!dense) fail(ErrorCode::precondition, "GaborMatrix::at needs dense storage");
  return entries[col * rows() + row];
}

const cplx* GaborMatrix::column(std::size_t col) const {
  if (!dense) fail(ErrorCode::precondition, "GaborMatrix::column needs dense storage");
  return entries.data() + col * rows();
}

double GaborMatrix::frobenius() const {
  double s = 0.0;
  if (dense)
    for (cplx v : entries) s += std::norm(v);
  else
    for (const auto& e : sparse) s += std::norm(e.value);
  return std::sqrt(s);
}

double GaborMatrix::max_abs() const {
  double m = 0.0;
  if (dense)
    for (cplx v : entries) m = std::max(m, std::abs(v));
  else
    for (const auto& e : sparse) m = std::max(m, std::abs(e.value));
  return m;
}

double GaborMatrix::max_escaped() const {
  double m = 0.0;
  for (std::size_t c = 0; c < escaped.size(); ++c)
    if (column_ok[c]) m = std::max(m, escaped[c]);
  return m;
}

namespace {

struct Column {
  bool ok = false;
  std::string error;
  CVec values;
  double escaped = 0.0;
  double noise = 0.0;
};

// Amplitude at the periodic seam in position and in frequency, relative to the
// peak. Whatever crosses the seam re-enters on the far side of the box, so
// column entries below this level cannot be trusted.
double seam_level(const SampledState& u) {
  const SampledState F = fourier_forward(u);
  const int n = u.grid.n, band = 4;
  auto rel = [&](const CVec& v) {
    double pk = 0.0, edge = 0.0;
    for (int j = 0; j < n; ++j) pk = std::max(pk, std::abs(v[j]));
    for (int j = 0; j < band; ++j) edge = std::max({edge, std::abs(v[j]), std::abs(v[n - 1 - j])});
    return pk > 0.0 ? edge / pk : 0.0;
  };
  return std::max(rel(u.values), rel(F.values));
}

Column solve_column(const StateOperator& op, const Window& g, const Lattice& lat, const Point& z) {
  Column c;
  try {
    const SampledState u = op(tf_shift(g.state, z));
    StftTable tbl = stft(u, g, lat);
    double mass = 0.0;
    for (cplx v : tbl.values) mass += std::norm(v);
    const double un = l2_norm(u), gn = l2_norm(g.state);
    const double total = kTwoPi * gn * gn * un * un;
    c.escaped = total > 0.0 ? std::max(0.0, 1.0 - mass * lat.cell() / total) : 0.0;
    double pk = 0.0;
    for (cplx v : tbl.values) pk = std::max(pk, std::abs(v));
    c.noise = seam_level(u) * pk;
    c.values = std::move(tbl.values);
    c.ok = true;
  } catch (const Error& e) {
    c.error = e.what();
  }
  return c;
}

std::vector<std::size_t> pilot_nodes(const Lattice& lat, int count) {
  const int m = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(count)))));
  std::vector<std::size_t> out;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      const int j = lat.nx / 4 + a * (lat.nx / 2) / m;
      const int k = lat.nxi / 4 + b * (lat.nxi / 2) / m;
      out.push_back(lat.index(j, k));
    }
  return out;
}

}  // namespace

GaborMatrix assemble(const PropagatorHandle& h, const Window& g, const Lattice& lat, const AssembleOptions& opt) {
  h.validate();
  lat.validate_for(g.state.grid);
  FlowTable flow = lattice_flow(h.symbol, lat, h.t_start, h.t_end, opt.flow_steps);
  GaborMatrix M = assemble_operator([&h](const SampledState& f) { return evolve(h, f); }, std::move(flow), g, lat, opt);
  M.symbol = h.symbol.name;
  M.method = h.method;
  M.t_start = h.t_start;
  M.t_end = h.t_end;
  return M;
}

GaborMatrix assemble_operator(const StateOperator& op, FlowTable flow, const Window& g, const Lattice& lat,
                              const AssembleOptions& opt) {
  lat.validate_for(g.state.grid);
  const std::size_t N = lat.size();
  if (flow.chi.size() != N) fail(ErrorCode::grid_mismatch, "assemble: flow table does not match the lattice");
  bool dense = opt.mode == AssembleOptions::Mode::dense ||
               (opt.mode == AssembleOptions::Mode::automatic && N <= kDenseMaxNodes);
  if (dense && N > kDenseMaxNodes)
    fail(ErrorCode::precondition, "assemble: dense storage is limited to 64x64 lattice nodes");
  if (!dense && N > kBandedMaxNodes) fail(ErrorCode::precondition, "assemble: lattice larger than 128x128");
  if (!(opt.floor > 0.0 && opt.floor < 1.0)) fail(ErrorCode::invalid_argument, "assemble: floor must lie in (0, 1)");

  GaborMatrix M;
  M.lattice = lat;
  M.symbol = "operator";
  M.dense = dense;
  M.flow = std::move(flow);
  M.column_ok.assign(N, 0);
  M.column_errors.assign(N, "");
  M.escaped.assign(N, 0.0);
  M.noise.assign(N, 0.0);

  if (dense) {
    M.entries.assign(N * N, cplx(0.0));
    parallel_for(N, [&](std::size_t c) {
      Column col = solve_column(op, g, lat, lat.node(c));
      M.column_ok[c] = col.ok;
      M.column_errors[c] = col.error;
      M.escaped[c] = col.escaped;
      M.noise[c] = col.noise;
      if (col.ok) std::copy(col.values.begin(), col.values.end(), M.entries.begin() + c * N);
    });
    return M;
  }

  // Banded fast path: a pilot fit predicts how far from chi_t(z) entries can
  // stay above the floor.
  const auto pilots = pilot_nodes(lat, opt.pilot_columns);
  RVec r, amp;
  double peak = 0.0;
  for (std::size_t c : pilots) {
    Column col = solve_column(op, g, lat, lat.node(c));
    if (!col.ok || !M.flow.ok[c]) continue;
    for (std::size_t w = 0; w < N; ++w) {
      r.push_back(dist(lat.node(w), M.flow.chi[c]));
      amp.push_back(std::abs(col.values[w]));
      peak = std::max(peak, amp.back());
    }
  }
  if (r.empty()) fail(ErrorCode::numerical, "assemble: every pilot column failed");
  DecayOptions dopt;
  dopt.floor = opt.floor;
  const DecayFit pilot = fit_decay_samples(r, amp, dopt);
  if (!(pilot.eps > opt.pilot_min_eps))
    fail(ErrorCode::precondition, "assemble: pilot decay rate " + std::to_string(pilot.eps) +
                                      " too small for banded assembly");
  M.band_radius = std::max(dopt.r0, (pilot.C - std::log(opt.floor * peak)) / pilot.eps) + opt.band_margin;

  std::vector<std::vector<GaborEntry>> cols(N);
  RVec leak(N, 0.0);
  parallel_for(N, [&](std::size_t c) {
    Column col = solve_column(op, g, lat, lat.node(c));
    M.column_ok[c] = col.ok;
    M.column_errors[c] = col.error;
    M.escaped[c] = col.escaped;
    M.noise[c] = col.noise;
    if (!col.ok) return;
    for (std::size_t w = 0; w < N; ++w) {
      const cplx v = col.values[w];
      if (v == cplx(0.0)) continue;
      if (dist(lat.node(w), M.flow.chi[c]) <= M.band_radius)
        cols[c].push_back({static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(c), v});
      else
        leak[c] = std::max(leak[c], std::abs(v));
    }
  });
  for (std::size_t c = 0; c < N; ++c) {
    M.sparse.insert(M.sparse.end(), cols[c].begin(), cols[c].end());
    M.band_leak = std::max(M.band_leak, leak[c] / peak);
  }
  return M;
}

DecayFit fit_sparsity(const GaborMatrix& M, const DecayOptions& opt) {
  const std::size_t N = M.rows();
  if (M.flow.chi.size() != N) fail(ErrorCode::precondition, "fit_sparsity: flow table missing or misaligned");
  auto usable = [&](std::size_t c) { return M.column_ok[c] && M.flow.ok[c]; };
  auto visit = [&](auto&& fn) {
    if (M.dense) {
      for (std::size_t c = 0; c < N; ++c)
        if (usable(c))
          for (std::size_t w = 0; w < N; ++w) fn(w, c, M.entries[c * N + w]);
    } else {
      for (const auto& e : M.sparse)
        if (usable(e.col)) fn(e.row, e.col, e.value);
    }
  };
  double peak = 0.0;
  visit([&](std::size_t, std::size_t, cplx v) { peak = std::max(peak, std::abs(v)); });
  if (peak == 0.0) fail(ErrorCode::numerical, "fit_sparsity: no nonzero entries in valid columns");
  // Samples at or below the floor never enter the fit, so skip them early.
  const double cut = opt.floor * peak;
  const bool has_noise = M.noise.size() == N;
  RVec r, amp;
  visit([&](std::size_t w, std::size_t c, cplx v) {
    const double a = std::abs(v);
    if (!(a > cut)) return;
    if (has_noise && !(a > M.noise[c])) return;
    r.push_back(dist(M.lattice.node(w), M.flow.chi[c]));
    amp.push_back(a);
  });
  return fit_decay_samples(r, amp, opt);
}

GaborMatrix sparsify(const GaborMatrix& M, double threshold) {
  if (!(threshold >= 0.0) || !std::isfinite(threshold))
    fail(ErrorCode::invalid_argument, "sparsify: threshold must be a finite non-negative number");
  const std::size_t N = M.rows();
  GaborMatrix S = M;
  S.dense = false;
  S.entries.clear();
  S.entries.shrink_to_fit();
  S.sparse.clear();
  S.threshold = threshold;
  double kept2 = 0.0, drop2 = 0.0;
  std::size_t kept = 0;
  auto take = [&](std::uint32_t w, std::uint32_t c, cplx v) {
    if (v == cplx(0.0)) return;
    if (std::abs(v) >= threshold) {
      S.sparse.push_back({w, c, v});
      kept2 += std::norm(v);
      ++kept;
    } else {
      drop2 += std::norm(v);
    }
  };
  if (M.dense) {
    for (std::size_t c = 0; c < N; ++c)
      for (std::size_t w = 0; w < N; ++w)
        take(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(c), M.entries[c * N + w]);
  } else {
    for (const auto& e : M.sparse) take(e.row, e.col, e.value);
  }
  const std::size_t cols = M.valid_columns();
  S.kept_fraction = cols > 0 ? static_cast<double>(kept) / (static_cast<double>(N) * cols) : 0.0;
  S.kept_fraction_all = N > 0 ? static_cast<double>(kept) / (static_cast<double>(N) * N) : 0.0;
  S.dropped_mass = kept2 + drop2 > 0.0 ? drop2 / (kept2 + drop2) : 0.0;
  S.dropped_frobenius = std::sqrt(drop2 + M.dropped_frobenius * M.dropped_frobenius);
  return S;
}

namespace {

SampledState apply_impl(const GaborMatrix& M, const Window& g, const SampledState& f, ApplyReport* rep) {
  const Lattice& lat = M.lattice;
  lat.validate_for(f.grid);
  require_same_grid(f.grid, g.state.grid, "Gabor matrix apply");
  const std::size_t N = M.rows();
  const StftTable V = stft(f, g, lat);
  const double cell = lat.cell();
  StftTable out{lat, CVec(N, cplx(0.0))};
  if (M.dense) {
    for (std::size_t c = 0; c < N; ++c) {
      if (!M.column_ok[c]) continue;
      const cplx vc = cell * V.values[c];
      if (vc == cplx(0.0)) continue;
      const cplx* col = M.entries.data() + c * N;
      for (std::size_t w = 0; w < N; ++w) out.values[w] += col[w] * vc;
    }
  } else {
    for (const auto& e : M.sparse)
      if (M.column_ok[e.col]) out.values[e.row] += e.value * (cell * V.values[e.col]);
  }
  SampledState result = istft(out, g);
  if (rep) {
    const double fn = l2_norm(f), gn = l2_norm(g.state);
    *rep = ApplyReport{};
    if (fn > 0.0) {
      rep->truncation = relative_l2(istft(V, g), f);
      rep->dropped_bound = M.dense ? 0.0 : cell * M.dropped_frobenius;
      double flagged = 0.0, escaped = 0.0;
      for (std::size_t c = 0; c < N; ++c) {
        const double a = cell * std::abs(V.values[c]) * gn;
        if (!M.column_ok[c])
          flagged += a;
        else
          escaped += a * std::sqrt(M.escaped[c]);
      }
      rep->flagged_bound = flagged / fn;
      rep->escaped_bound = escaped / fn;
    }
  }
  return result;
}

}  // namespace

SampledState sparse_apply(const GaborMatrix& M, const Window& g, const SampledState& f, ApplyReport* rep) {
  if (M.dense) fail(ErrorCode::precondition, "sparse_apply: matrix is dense; sparsify it first");
  return apply_impl(M, g, f, rep);
}

SampledState dense_apply(const GaborMatrix& M, const Window& g, const SampledState& f, ApplyReport* rep) {
  if (!M.dense) fail(ErrorCode::precondition, "dense_apply: matrix is not dense");
  return apply_impl(M, g, f, rep);
}

double mass_within(const GaborMatrix& M, double radius) {
  const std::size_t N = M.rows();
  if (M.flow.chi.size() != N) fail(ErrorCode::precondition, "mass_within: flow table missing or misaligned");
  double in = 0.0, all = 0.0;
  auto add = [&](std::size_t w, std::size_t c, cplx v) {
    if (!M.column_ok[c]) return;
    const double m = std::norm(v);
    all += m;
    if (dist(M.lattice.node(w), M.flow.chi[c]) <= radius) in += m;
  };
  if (M.dense) {
    for (std::size_t c = 0; c < N; ++c)
      for (std::size_t w = 0; w < N; ++w) add(w, c, M.entries[c * N + w]);
  } else {
    for (const auto& e : M.sparse) add(e.row, e.col, e.value);
  }
  return all > 0.0 ? in / all : 1.0;
}

double frame_constant(const Window& g, const Lattice& lat) {
  const double gn = l2_norm(g.state);
  return kTwoPi * gn * gn / lat.cell();
}

std::pair<double, double> probe_singular_range(const GaborMatrix& M, const Window& g,
                                               const std::vector<SampledState>& probes) {
  if (probes.empty()) fail(ErrorCode::invalid_argument, "probe_singular_range: no probes");
  const std::size_t N = M.rows();
  const double A = frame_constant(g, M.lattice);
  double lo = INFINITY, hi = 0.0;
  for (const auto& p : probes) {
    const StftTable V = stft(p, g, M.lattice);
    CVec y(N, cplx(0.0));
    if (M.dense) {
      for (std::size_t c = 0; c < N; ++c)
        if (M.column_ok[c])
          for (std::size_t w = 0; w < N; ++w) y[w] += M.entries[c * N + w] * V.values[c];
    } else {
      for (const auto& e : M.sparse)
        if (M.column_ok[e.col]) y[e.row] += e.value * V.values[e.col];
    }
    double ny = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      ny += std::norm(y[i]);
      nv += std::norm(V.values[i]);
    }
    if (nv == 0.0) fail(ErrorCode::invalid_argument, "probe_singular_range: probe with zero coefficients");
    const double s = std::sqrt(ny / nv) / A;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {lo, hi};
}

Array to_triplet_array(const GaborMatrix& M) {
  Array a;
  a.dtype = Array::DType::f64;
  auto push = [&](std::size_t w, std::size_t c, cplx v) {
    a.real.push_back(static_cast<double>(w));
    a.real.push_back(static_cast<double>(c));
    a.real.push_back(v.real());
    a.real.push_back(v.imag());
  };
  const std::size_t N = M.rows();
  if (M.dense) {
    for (std::size_t c = 0; c < N; ++c)
      for (std::size_t w = 0; w < N; ++w)
        if (M.entries[c * N + w] != cplx(0.0)) push(w, c, M.entries[c * N + w]);
  } else {
    for (const auto& e : M.sparse) push(e.row, e.col, e.value);
  }
  a.dims = {a.real.size() / 4, 4};
  return a;
}

nlohmann::json manifest(const GaborMatrix& M) {
  nlohmann::json j;
  j["symbol"] = M.symbol;
  j["method"] = to_string(M.method);
  j["t_start"] = M.t_start;
  j["t_end"] = M.t_end;
  j["lattice"] = {{"dx", M.lattice.dx}, {"dxi", M.lattice.dxi}, {"nx", M.lattice.nx}, {"nxi", M.lattice.nxi}};
  j["storage"] = M.dense ? "dense" : "sparse";
  j["nnz"] = M.nnz();
  j["valid_columns"] = M.valid_columns();
  j["threshold"] = M.threshold ? nlohmann::json(*M.threshold) : nlohmann::json(nullptr);
  j["kept_fraction"] = M.kept_fraction;
  j["kept_fraction_all_columns"] = M.kept_fraction_all;
  j["dropped_mass"] = M.dropped_mass;
  j["escaped_mass"] = M.max_escaped();
  if (M.band_radius > 0.0) {
    j["band_radius"] = M.band_radius;
    j["band_leak"] = M.band_leak;
  }
  if (M.fit)
    j["fit"] = {{"C", M.fit->C}, {"eps", M.fit->eps}, {"residual", M.fit->residual},
                {"samples", M.fit->samples}, {"degenerate", M.fit->degenerate}};
  else
    j["fit"] = nullptr;
  return j;
}

}  // namespace gwpk
