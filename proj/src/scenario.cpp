#include "gwpk/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gwpk/fio.hpp"
#include "gwpk/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gwpk {

// ---- config -----------------------------------------------------------------

namespace {

void keys_allowed(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorCode::config, where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) fail(ErrorCode::config, where + ": unknown key '" + it.key() + "'");
}

std::string path_of(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

void read(const json& j, const std::string& where, const char* key, double& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) fail(ErrorCode::config, path_of(where, key) + ": expected a number");
  dst = v.get<double>();
  if (!std::isfinite(dst)) fail(ErrorCode::config, path_of(where, key) + ": not finite");
}

void read(const json& j, const std::string& where, const char* key, int& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail(ErrorCode::config, path_of(where, key) + ": expected an integer");
  const auto x = v.get<long long>();
  if (x < -1000000000LL || x > 1000000000LL) fail(ErrorCode::config, path_of(where, key) + ": out of range");
  dst = static_cast<int>(x);
}

void read(const json& j, const std::string& where, const char* key, std::string& dst) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_number() && std::string(key) == "p") {
    // p may be given as the number 1 or 2
    if (!v.is_number_integer()) fail(ErrorCode::config, path_of(where, key) + ": expected 1, 2 or \"inf\"");
    dst = std::to_string(v.get<long long>());
    return;
  }
  if (!v.is_string()) fail(ErrorCode::config, path_of(where, key) + ": expected a string");
  dst = v.get<std::string>();
}

void require(bool cond, const std::string& msg) {
  if (!cond) fail(ErrorCode::config, msg);
}

}  // namespace

ScenarioConfig parse_config(const json& j) {
  ScenarioConfig c;
  keys_allowed(j, "config", {"symbol", "grid", "lattice", "window", "method", "T", "t_start", "dt", "thresholds",
                             "initial", "energy", "modspace", "fio", "output"});
  c.source = j;

  if (j.contains("symbol")) {
    const json& s = j.at("symbol");
    if (s.is_string()) {
      c.symbol = s.get<std::string>();
    } else {
      keys_allowed(s, "symbol", {"quadratic"});
      require(s.contains("quadratic"), "symbol: expected a name or {\"quadratic\": [[q00, q01], [q10, q11]]}");
      const json& q = s.at("quadratic");
      require(q.is_array() && q.size() == 2, "symbol.quadratic: expected a 2x2 array");
      Eigen::Matrix2d Q;
      for (int r = 0; r < 2; ++r) {
        require(q[r].is_array() && q[r].size() == 2, "symbol.quadratic: expected a 2x2 array");
        for (int k = 0; k < 2; ++k) {
          require(q[r][k].is_number(), "symbol.quadratic: entries must be numbers");
          Q(r, k) = q[r][k].get<double>();
          require(std::isfinite(Q(r, k)), "symbol.quadratic: entries must be finite");
        }
      }
      require(Q(0, 1) == Q(1, 0), "symbol.quadratic: matrix must be symmetric");
      c.quadratic = Q;
      c.symbol = "quadratic";
    }
  }

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    keys_allowed(g, "grid", {"n", "x_max"});
    read(g, "grid", "n", c.grid.n);
    read(g, "grid", "x_max", c.grid.x_max);
  }

  if (j.contains("lattice")) {
    const json& l = j.at("lattice");
    keys_allowed(l, "lattice", {"dx", "q", "dxi", "nx", "nxi"});
    require(!(l.contains("q") && l.contains("dxi")), "lattice: give either q or dxi, not both");
    read(l, "lattice", "dx", c.lattice_dx);
    read(l, "lattice", "q", c.lattice_q);
    read(l, "lattice", "nx", c.lattice_nx);
    read(l, "lattice", "nxi", c.lattice_nxi);
    if (l.contains("dxi")) {
      double dxi = 0.0;
      read(l, "lattice", "dxi", dxi);
      require(dxi > 0.0 && c.grid.x_max > 0.0, "lattice.dxi must be positive");
      const double q = dxi / c.grid.dxi();
      c.lattice_q = static_cast<int>(std::lround(q));
      require(c.lattice_q >= 1 && std::abs(q - c.lattice_q) < 1e-9 * q,
              "lattice.dxi must be a multiple of the grid frequency step pi/x_max");
    }
  }

  if (j.contains("window")) {
    const json& w = j.at("window");
    keys_allowed(w, "window", {"kind", "width", "order"});
    read(w, "window", "kind", c.window);
    read(w, "window", "width", c.window_width);
    read(w, "window", "order", c.window_order);
    require(c.window == "gaussian" || c.window == "hermite", "window.kind must be gaussian or hermite");
  }

  if (j.contains("method")) {
    std::string m;
    read(j, "", "method", m);
    try {
      c.method = method_from_string(m);
    } catch (const Error& e) {
      fail(ErrorCode::config, std::string("method: ") + e.what());
    }
  }
  read(j, "", "T", c.T);
  read(j, "", "t_start", c.t_start);
  read(j, "", "dt", c.dt);

  if (j.contains("thresholds")) {
    const json& t = j.at("thresholds");
    keys_allowed(t, "thresholds", {"sparsify", "decay_floor", "delta", "eps_threshold", "caustic_delta"});
    read(t, "thresholds", "sparsify", c.sparsify);
    read(t, "thresholds", "decay_floor", c.decay_floor);
    read(t, "thresholds", "delta", c.delta);
    read(t, "thresholds", "eps_threshold", c.eps_threshold);
    read(t, "thresholds", "caustic_delta", c.caustic_delta);
  }

  if (j.contains("initial")) {
    const json& i = j.at("initial");
    keys_allowed(i, "initial", {"kind", "x0", "xi0", "width", "omega", "half_width"});
    read(i, "initial", "kind", c.initial);
    read(i, "initial", "x0", c.initial_x0);
    read(i, "initial", "xi0", c.initial_xi0);
    read(i, "initial", "width", c.initial_width);
    read(i, "initial", "omega", c.initial_omega);
    read(i, "initial", "half_width", c.initial_half_width);
    require(c.initial == "gaussian" || c.initial == "chirp_bump", "initial.kind must be gaussian or chirp_bump");
  }

  if (j.contains("energy")) {
    const json& e = j.at("energy");
    keys_allowed(e, "energy", {"eps0", "N_max"});
    read(e, "energy", "eps0", c.energy_eps0);
    read(e, "energy", "N_max", c.energy_N_max);
  }

  if (j.contains("modspace")) {
    const json& m = j.at("modspace");
    keys_allowed(m, "modspace", {"p", "weight", "sparsity_eps"});
    read(m, "modspace", "p", c.modspace_p);
    read(m, "modspace", "sparsity_eps", c.modspace_sparsity_eps);
    if (m.contains("weight")) {
      const json& w = m.at("weight");
      keys_allowed(w, "modspace.weight", {"a", "r", "s", "b"});
      read(w, "modspace.weight", "a", c.modspace_weight.a);
      read(w, "modspace.weight", "r", c.modspace_weight.r);
      read(w, "modspace.weight", "s", c.modspace_weight.s);
      read(w, "modspace.weight", "b", c.modspace_weight.b);
    }
  }

  if (j.contains("fio")) {
    const json& f = j.at("fio");
    keys_allowed(f, "fio", {"eta_max", "amplitude"});
    read(f, "fio", "eta_max", c.fio_eta_max);
    read(f, "fio", "amplitude", c.fio_amplitude);
    require(c.fio_amplitude == "unit" || c.fio_amplitude == "unitary", "fio.amplitude must be unit or unitary");
  }

  read(j, "", "output", c.output);
  require(!c.output.empty(), "output must not be empty");

  require(c.sparsify >= 0.0, "thresholds.sparsify must be >= 0");
  require(c.decay_floor > 0.0 && c.decay_floor < 1.0, "thresholds.decay_floor must lie in (0, 1)");
  require(c.delta > 0.0 && c.delta < 1.0, "thresholds.delta must lie in (0, 1)");
  require(c.eps_threshold > 0.0, "thresholds.eps_threshold must be positive");
  require(c.caustic_delta > 0.0, "thresholds.caustic_delta must be positive");
  require(c.initial_width > 0.0, "initial.width must be positive");
  require(c.initial_half_width > 0.0, "initial.half_width must be positive");
  require(c.energy_eps0 > 0.0, "energy.eps0 must be positive");
  require(c.energy_N_max >= 0 && c.energy_N_max <= kEnergyMaxOrder,
          "energy.N_max must lie in [0, " + std::to_string(kEnergyMaxOrder) + "]");
  require(c.modspace_weight.b > 0.0, "modspace.weight.b must be positive");
  require(c.modspace_sparsity_eps >= 0.0, "modspace.sparsity_eps must be >= 0");
  require(c.fio_eta_max >= 0.0, "fio.eta_max must be >= 0");
  require(c.window_width > 0.0, "window.width must be positive");
  require(c.window_order >= 0, "window.order must be >= 0");

  // module-level invariants, reported as config errors
  try {
    c.grid.validate();
    require(c.grid.d == 1, "grid: d = 1 only");
    c.lattice().validate_for(c.grid);
    norm_p_from_string(c.modspace_p);
    c.handle().validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    fail(ErrorCode::config, e.what());
  }
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::config, "cannot read config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, "config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

SymbolModel ScenarioConfig::symbol_model() const {
  if (quadratic) return quadratic_symbol(*quadratic, "quadratic");
  return make_symbol(symbol);
}

Lattice ScenarioConfig::lattice() const { return make_lattice(grid, lattice_dx, lattice_q, lattice_nx, lattice_nxi); }

Window ScenarioConfig::make_window() const {
  return window == "hermite" ? hermite_window(grid, window_order) : gaussian_window(grid, window_width);
}

PropagatorHandle ScenarioConfig::handle() const {
  PropagatorHandle h;
  h.symbol = symbol_model();
  if (method) h.method = *method;
  else if (h.symbol.has_split()) h.method = Method::strang_split;
  else if (h.symbol.kind == SymbolKind::quadratic_form) h.method = Method::metaplectic_exact;
  else h.method = Method::weyl_midpoint;
  h.t_start = t_start;
  h.t_end = t_start + T;
  h.dt = dt;
  return h;
}

SampledState ScenarioConfig::initial_state() const {
  if (initial == "chirp_bump") return chirp_bump(grid, initial_omega, initial_x0, initial_half_width);
  return normalized_gaussian(grid, initial_x0, initial_xi0, initial_width);
}

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"flow",   "evolve", "gabor-matrix",  "sparsity-fit", "fio",
                                              "energy", "modspace", "singularities", "full-report"};
  return names;
}

int exit_code_for(ErrorCode c) { return is_numerical(c) ? 3 : 2; }

std::vector<SymbolInfo> list_scenarios(const std::string& filter) {
  std::vector<SymbolInfo> out;
  for (const auto& e : symbol_registry())
    if (e.name.find(filter) != std::string::npos) out.push_back(e);
  return out;
}

// ---- tasks ------------------------------------------------------------------

namespace {

// Assembled matrix shared by the tasks of one run.
struct Shared {
  std::optional<GaborMatrix> matrix;
  std::optional<DecayFit> fit;
};

class Run {
 public:
  Run(const ScenarioConfig& cfg, Shared& shared) : cfg(cfg), shared(shared), dir(cfg.output) {}

  const ScenarioConfig& cfg;
  Shared& shared;
  fs::path dir;
  json metrics = json::object();
  json checks = json::object();
  std::vector<std::string> artifacts;
  bool invariant_failed = false;
  bool numerical_failed = false;

  // A bound-type check: passes when value <= limit (or >= for "min").
  void check(const std::string& name, double value, double limit, bool upper = true, bool numerical = false) {
    const bool ok = std::isfinite(value) && (upper ? value <= limit : value >= limit);
    checks[name] = {{"value", value}, {"limit", limit}, {"relation", upper ? "<=" : ">="}, {"pass", ok}};
    if (!ok) (numerical ? numerical_failed : invariant_failed) = true;
  }
  void check_strict(const std::string& name, double value, double limit, bool upper = true) {
    const bool ok = std::isfinite(value) && (upper ? value < limit : value > limit);
    checks[name] = {{"value", value}, {"limit", limit}, {"relation", upper ? "<" : ">"}, {"pass", ok}};
    if (!ok) invariant_failed = true;
  }

  void array(const std::string& name, const Array& a) {
    const std::string path = (dir / name).string();
    write_array(path, a);
    const Array back = read_array(path);
    if (back.dims != a.dims || back.dtype != a.dtype || back.real != a.real || back.cdata != a.cdata)
      fail(ErrorCode::io, "artifact " + name + " does not round-trip");
    artifacts.push_back(name);
  }
  void state(const std::string& name, const SampledState& s) {
    Array a;
    a.dtype = Array::DType::c128;
    a.dims = {static_cast<std::uint64_t>(s.values.size())};
    a.cdata = s.values;
    array(name, a);
  }
  void text(const std::string& name, const std::string& content) { write_text((dir / name).string(), content); }

  void heatmap(const std::string& name, const SampledState& f, const Window& g, const std::string& title) {
    const Lattice lat = cfg.lattice();
    const StftTable V = stft(f, g, lat);
    RVec mag(V.values.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(V.values[i]);
    text(name, svg_heatmap(lat, mag, title));
  }

  const GaborMatrix& matrix() {
    if (!shared.matrix) {
      AssembleOptions opt;
      opt.floor = cfg.decay_floor;
      shared.matrix = assemble(cfg.handle(), cfg.make_window(), cfg.lattice(), opt);
    }
    return *shared.matrix;
  }
  const DecayFit& fit() {
    if (!shared.fit) {
      DecayOptions o;
      o.floor = cfg.decay_floor;
      shared.fit = fit_sparsity(matrix(), o);
    }
    return *shared.fit;
  }
};

json fit_json(const DecayFit& f) {
  return {{"C", f.C},         {"eps", f.eps},         {"residual", f.residual},
          {"floor", f.floor}, {"samples", f.samples}, {"degenerate", f.degenerate}};
}

Array real_array(std::vector<std::uint64_t> dims, RVec data) {
  Array a;
  a.dims = std::move(dims);
  a.real = std::move(data);
  return a;
}

void task_flow(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const SymbolModel a = c.symbol_model();
  const Lattice lat = c.lattice();
  const double t0 = c.t_start, t1 = c.t_start + c.T;
  const FlowTable F = lattice_flow(a, lat, t0, t1);

  std::size_t failed = 0;
  std::string first_failure;
  RVec rows;
  rows.reserve(lat.size() * 9);
  double det_err = 0.0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const Point z = lat.node(i);
    if (!F.ok[i]) {
      if (failed++ == 0 && i < F.failures.size()) first_failure = F.failures[i];
    } else {
      det_err = std::max(det_err, std::abs(F.jac[i].determinant() - 1.0));
    }
    const Eigen::Matrix2d& J = F.jac[i];
    const double psi = i < F.psi.size() ? F.psi[i] : 0.0;
    for (double v : {z[0], z[1], F.chi[i][0], F.chi[i][1], psi, J(0, 0), J(0, 1), J(1, 0), J(1, 1)}) rows.push_back(v);
  }
  r.array("flow_table.gwpk", real_array({lat.size(), 9}, rows));

  // trajectories from a 3x3 patch of seeds around the initial centre
  const int steps = std::max(200, static_cast<int>(std::ceil(400.0 * std::abs(c.T))));
  FlowOptions fo;
  fo.error_estimate = false;
  std::ostringstream csv;
  csv.precision(17);
  csv << "seed,t,x,xi,psi\n";
  RVec traj;
  std::size_t nt = 0;
  double closed_form_err = 0.0;
  int seed = 0;
  for (int di = -1; di <= 1; ++di)
    for (int dk = -1; dk <= 1; ++dk, ++seed) {
      const ZVec z0 = SymbolModel::z1(c.initial_x0 + di, c.initial_xi0 + dk);
      const FlowResult res = integrate_flow(a, z0, t0, t1, steps, fo);
      nt = res.t_grid.size();
      for (std::size_t s = 0; s < nt; ++s) {
        const double psi = s < res.psi.size() ? res.psi[s] : 0.0;
        csv << seed << ',' << res.t_grid[s] << ',' << res.traj[s](0) << ',' << res.traj[s](1) << ',' << psi << '\n';
        for (double v : {res.t_grid[s], res.traj[s](0), res.traj[s](1), psi}) traj.push_back(v);
        if (a.kind == SymbolKind::quadratic_form) {
          const Eigen::Vector2d exact = quadratic_flow(a, t0, res.t_grid[s]) * Eigen::Vector2d(z0(0), z0(1));
          const double e = std::hypot(res.traj[s](0) - exact(0), res.traj[s](1) - exact(1)) / (1.0 + exact.norm());
          closed_form_err = std::max(closed_form_err, e);
        }
      }
    }
  r.array("trajectories.gwpk", real_array({9, nt, 4}, traj));
  r.text("trajectories.csv", csv.str());

  r.metrics["lattice_nodes"] = lat.size();
  r.metrics["failed_nodes"] = failed;
  if (failed) r.metrics["first_failure"] = first_failure;
  r.metrics["max_det_error"] = det_err;
  r.metrics["min_abs_dx_dy"] = caustic_check(F);
  r.metrics["lipschitz"] = F.lipschitz;
  r.metrics["inverse_lipschitz"] = F.inverse_lipschitz;
  r.metrics["trajectory_steps"] = steps;
  r.check("det_jacobian_error", det_err, 1e-7);
  r.check("failed_nodes", static_cast<double>(failed), 0.0, true, true);
  if (a.kind == SymbolKind::quadratic_form) r.check("closed_form_trajectory_error", closed_form_err, 1e-8);
}

void task_evolve(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const Window g = c.make_window();
  const SampledState u0 = c.initial_state();
  EvolveReport rep;
  const SampledState u = evolve(c.handle(), u0, &rep);
  r.state("initial_state.gwpk", u0);
  r.state("evolved_state.gwpk", u);
  r.heatmap("stft_initial.svg", u0, g, "|V_g u0|");
  r.heatmap("stft_evolved.svg", u, g, "|V_g u(T)|");

  const double drift = std::abs(rep.norm_out - rep.norm_in) / rep.norm_in;
  r.metrics["method"] = to_string(c.handle().method);
  r.metrics["steps"] = rep.steps;
  r.metrics["norm_in"] = rep.norm_in;
  r.metrics["norm_out"] = rep.norm_out;
  r.metrics["max_boundary_mass"] = rep.max_boundary;
  r.metrics["fixed_point_iterations"] = rep.fixed_point_iterations;
  r.metrics["warnings"] = rep.warnings;
  r.check("norm_drift", drift, 1e-8);
  if (c.T == 0.0) r.check("identity_at_T0", relative_l2(u, u0), 0.0);
}

void task_gabor(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const Window g = c.make_window();
  const GaborMatrix& M = r.matrix();
  const GaborMatrix S = sparsify(M, c.sparsify);
  r.array("gabor_triplets.gwpk", to_triplet_array(M));
  r.array("gabor_sparse_triplets.gwpk", to_triplet_array(S));
  write_json((r.dir / "gabor_manifest.json").string(), manifest(M));

  // column of the central node
  const Lattice& lat = M.lattice;
  const std::size_t mid = lat.index(lat.nx / 2, lat.nxi / 2);
  RVec col(lat.size(), 0.0);
  if (M.dense) {
    for (std::size_t w = 0; w < lat.size(); ++w) col[w] = std::abs(M.entries[mid * lat.size() + w]);
  } else {
    for (const auto& e : M.sparse)
      if (e.col == mid) col[e.row] = std::abs(e.value);
  }
  r.text("gabor_column.svg", svg_heatmap(lat, col, "|<S pi(z0) g, pi(w) g>| at z0 = 0"));

  // compressed apply against the solver
  const SampledState f = c.initial_state();
  const SampledState ref = evolve(c.handle(), f);
  ApplyReport fr, sr;
  const SampledState full = M.dense ? dense_apply(M, g, f, &fr) : sparse_apply(M, g, f, &fr);
  const SampledState comp = sparse_apply(S, g, f, &sr);
  const double fe = relative_l2(full, ref), se = relative_l2(comp, ref);

  const double g2 = std::pow(l2_norm(g.state), 2);
  r.metrics["manifest"] = manifest(M);
  r.metrics["valid_columns"] = M.valid_columns();
  r.metrics["failed_columns"] = M.rows() - M.valid_columns();
  r.metrics["sparsify_threshold"] = c.sparsify;
  r.metrics["nnz_sparse"] = S.nnz();
  r.metrics["kept_fraction"] = S.kept_fraction;
  r.metrics["kept_fraction_all_columns"] = S.kept_fraction_all;
  r.metrics["dropped_mass"] = S.dropped_mass;
  r.metrics["max_escaped"] = M.max_escaped();
  r.metrics["apply_error_full"] = fe;
  r.metrics["apply_error_sparse"] = se;
  r.metrics["apply_budget_sparse"] = sr.budget();
  r.metrics["dropped_bound"] = sr.dropped_bound;
  r.check("valid_columns", static_cast<double>(M.valid_columns()), 1.0, false, true);
  r.check("entry_bound", M.max_abs(), g2 * (1.0 + 1e-8));
  r.check("sparse_within_full_plus_dropped", se, fe + sr.dropped_bound + 1e-12);
}

void task_sparsity(Run& r) {
  const GaborMatrix& M = r.matrix();
  const DecayFit& fit = r.fit();
  const double conc = mass_within(M, 5.0);

  // scatter of the entries above the floor
  const Lattice& lat = M.lattice;
  const std::size_t N = lat.size();
  const double floor = r.cfg.decay_floor * M.max_abs();
  RVec dist_v, amp;
  auto add = [&](std::size_t row, std::size_t col, cplx v) {
    if (!M.column_ok[col] || std::abs(v) <= floor) return;
    dist_v.push_back(dist(lat.node(row), M.flow.chi[col]));
    amp.push_back(std::abs(v));
  };
  if (M.dense) {
    for (std::size_t z = 0; z < N; ++z)
      for (std::size_t w = 0; w < N; ++w) add(w, z, M.entries[z * N + w]);
  } else {
    for (const auto& e : M.sparse) add(e.row, e.col, e.value);
  }
  RVec pairs;
  pairs.reserve(2 * amp.size());
  for (std::size_t i = 0; i < amp.size(); ++i) {
    pairs.push_back(dist_v[i]);
    pairs.push_back(amp[i]);
  }
  r.array("decay_samples.gwpk", real_array({amp.size(), 2}, pairs));
  r.text("decay_scatter.svg", svg_decay_scatter(dist_v, amp, fit, "Gabor matrix decay off the flow graph"));

  r.metrics["fit"] = fit_json(fit);
  r.metrics["mass_within_5"] = conc;
  r.metrics["valid_columns"] = M.valid_columns();
  r.check_strict("eps", fit.eps, 0.05, false);
}

void task_fio(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const SymbolModel a = c.symbol_model();
  const CanonicalMap chi = canonical_map(a, c.t_start, c.t_start + c.T);
  PhaseOptions po;
  po.delta = c.caustic_delta;
  po.eta_max = c.fio_eta_max;
  const PhaseFunction P = construct_phase(chi, c.grid, po);
  const CVec sigma = c.fio_amplitude == "unitary" ? unitary_amplitude(P) : CVec{};
  const SampledState f = c.initial_state();
  double escaped = 0.0;
  const SampledState out = fio_apply(P, sigma, f, &escaped);
  const SampledState ref = evolve(c.handle(), f);
  const cplx k = inner(ref, out) / inner(out, out);
  SampledState aligned = out;
  for (auto& v : aligned.values) v *= k;
  const double err = relative_l2(aligned, ref);
  const Comparability cm = phase_flow_comparability(P, chi);

  r.array("phase.gwpk", to_array(P));
  r.state("fio_output.gwpk", out);
  r.heatmap("stft_fio.svg", out, c.make_window(), "|V_g T f|");

  r.metrics["amplitude"] = c.fio_amplitude;
  r.metrics["eta_band"] = {P.eta(0), P.eta(P.neta - 1)};
  r.metrics["min_abs_dx_dy"] = P.min_det;
  r.metrics["closedness"] = P.closedness;
  r.metrics["escaped_band_mass"] = escaped;
  r.metrics["alignment_constant"] = {k.real(), k.imag()};
  r.metrics["alignment_modulus"] = std::abs(k);
  r.metrics["aligned_error"] = err;
  r.metrics["comparability"] = {{"c1", cm.c1}, {"c2", cm.c2}, {"samples", cm.samples}};
  r.check_strict("aligned_error", err, 1e-4);
  r.check("closedness", P.closedness, po.closedness_warn);
  r.check_strict("comparability_c1", cm.c1, 0.0, false);
}

void task_energy(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const SampledState u0 = c.initial_state();
  const RadiusTrack tr = radius_track(c.handle(), u0, c.energy_eps0, c.energy_N_max);
  const EnergyProfile prof = energy_profile(u0, c.energy_eps0, c.energy_N_max);
  RVec flat;
  for (const auto& v : tr.ratio) flat.insert(flat.end(), v.begin(), v.end());
  r.array("energy_ratios.gwpk",
          real_array({tr.A_grid.size(), tr.t.size(), static_cast<std::uint64_t>(tr.N_max + 1)}, flat));
  r.metrics["track"] = tr.to_json();
  r.metrics["initial_energy"] = prof.values;
  r.metrics["initial_noise"] = prof.noise;
  r.metrics["initial_flagged_from"] = prof.flagged_from;
  r.check("best_A", tr.best_A, 0.0, false);
}

void task_modspace(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const Window g = c.make_window();
  const Lattice lat = c.lattice();
  const NormP p = norm_p_from_string(c.modspace_p);
  const double eps = c.modspace_sparsity_eps > 0.0 ? c.modspace_sparsity_eps : r.fit().eps;
  const SampledState u0 = c.initial_state();
  const double norm0 = mod_norm(u0, g, p, c.modspace_weight, lat);
  const BoundednessReport rep =
      boundedness_check(c.handle(), g, p, c.modspace_weight, lat, eps, default_probes(c.grid));

  RVec logw(lat.size());
  for (std::size_t i = 0; i < lat.size(); ++i) logw[i] = c.modspace_weight.log_value(lat.node(i));
  r.array("log_weight.gwpk", real_array({static_cast<std::uint64_t>(lat.nx), static_cast<std::uint64_t>(lat.nxi)}, logw));
  r.array("boundedness_ratios.gwpk", real_array({rep.ratios.size()}, rep.ratios));

  r.metrics["p"] = c.modspace_p;
  r.metrics["weight"] = c.modspace_weight.to_json();
  r.metrics["sparsity_eps"] = eps;
  r.metrics["sparsity_eps_source"] = c.modspace_sparsity_eps > 0.0 ? "config" : "fit";
  r.metrics["initial_norm"] = norm0;
  r.metrics["boundedness"] = rep.to_json();
  r.check_strict("ratio_spread", rep.spread, 2.0);
}

void task_singularities(Run& r) {
  const ScenarioConfig& c = r.cfg;
  const Window g = c.make_window();
  const Lattice lat = c.lattice();
  const SampledState f = c.initial_state();
  const PropagationReport rep = singularity_propagation_check(c.handle(), f, g, lat, c.delta, c.eps_threshold);
  const SampledState u = evolve(c.handle(), f);

  r.array("regular_before.gwpk", to_array(rep.regular_before));
  r.array("regular_after.gwpk", to_array(rep.regular_after));
  write_mask_png((r.dir / "regular_before.png").string(), rep.regular_before);
  write_mask_png((r.dir / "regular_after.png").string(), rep.regular_after);
  r.text("regions.svg", svg_masks(rep.regular_before, rep.regular_after, "regular regions before and after the flow"));
  r.heatmap("stft_before.svg", f, g, "|V_g f|");
  r.heatmap("stft_after.svg", u, g, "|V_g S f|");

  r.metrics["propagation"] = rep.to_json();
  r.check("forward_violation", rep.forward_violation, 0.02);
  r.check("backward_violation", rep.backward_violation, 0.02);
}

void write_error(const fs::path& dir, const json& rec) {
  try {
    write_json((dir / "error.json").string(), rec);
  } catch (...) {
  }
}

TaskResult run_one(const ScenarioConfig& cfg, const std::string& task, Shared& shared);

void task_full(Run& r, TaskResult& res) {
  int worst = 0;
  json tasks = json::object();
  for (const auto& t : task_names()) {
    if (t == "full-report") continue;
    ScenarioConfig sub = r.cfg;
    sub.output = (r.dir / t).string();
    const TaskResult tr = run_one(sub, t, r.shared);
    worst = std::max(worst, tr.exit_code);
    tasks[t] = tr.metrics;
    for (const auto& a : tr.artifacts) r.artifacts.push_back(t + "/" + a);
  }
  r.metrics["tasks"] = tasks;
  res.exit_code = worst;
}

TaskResult run_one(const ScenarioConfig& cfg, const std::string& task, Shared& shared) {
  TaskResult res;
  Run r(cfg, shared);
  json base = {{"task", task}, {"symbol", cfg.symbol}, {"config", cfg.source}};
  try {
    fs::create_directories(r.dir);
  } catch (const std::exception& e) {
    res.exit_code = 2;
    res.metrics = base;
    res.metrics["error"] = {{"code", "io"}, {"message", e.what()}};
    return res;
  }
  json error;
  try {
    if (task == "flow") task_flow(r);
    else if (task == "evolve") task_evolve(r);
    else if (task == "gabor-matrix") task_gabor(r);
    else if (task == "sparsity-fit") task_sparsity(r);
    else if (task == "fio") task_fio(r);
    else if (task == "energy") task_energy(r);
    else if (task == "modspace") task_modspace(r);
    else if (task == "singularities") task_singularities(r);
    else if (task == "full-report") task_full(r, res);
    else fail(ErrorCode::config, "unknown task '" + task + "'");
    if (task != "full-report") res.exit_code = r.numerical_failed ? 3 : (r.invariant_failed ? 1 : 0);
  } catch (const Error& e) {
    res.exit_code = exit_code_for(e.code());
    error = {{"code", to_string(e.code())}, {"message", e.what()}};
  } catch (const std::exception& e) {
    res.exit_code = 2;
    error = {{"code", "internal"}, {"message", e.what()}};
  }

  json m = base;
  m["metrics"] = r.metrics;
  m["checks"] = r.checks;
  m["artifacts"] = r.artifacts;
  m["exit_code"] = res.exit_code;
  m["pass"] = res.exit_code == 0;
  if (!error.is_null()) m["error"] = error;
  res.metrics = m;
  res.artifacts = r.artifacts;

  const fs::path err_path = r.dir / "error.json";
  if (res.exit_code != 0) {
    json rec = {{"task", task}, {"exit_code", res.exit_code}};
    if (!error.is_null()) {
      rec["code"] = error["code"];
      rec["message"] = error["message"];
    } else {
      json failed = json::array();
      for (auto it = r.checks.begin(); it != r.checks.end(); ++it)
        if (!it.value()["pass"].get<bool>()) failed.push_back(it.key());
      if (task == "full-report") {
        for (auto it = m["metrics"]["tasks"].begin(); it != m["metrics"]["tasks"].end(); ++it)
          if (!it.value()["pass"].get<bool>()) failed.push_back(it.key());
      }
      rec["code"] = res.exit_code == 3 ? "numerical" : "invariant";
      rec["failed"] = failed;
    }
    write_error(r.dir, rec);
  } else {
    std::error_code ec;
    fs::remove(err_path, ec);
  }
  try {
    write_json((r.dir / "metrics.json").string(), m);
  } catch (const Error& e) {
    res.exit_code = 2;
  }
  return res;
}

}  // namespace

TaskResult run_scenario(const ScenarioConfig& cfg, const std::string& task) {
  Shared shared;
  return run_one(cfg, task, shared);
}

}  // namespace gwpk
