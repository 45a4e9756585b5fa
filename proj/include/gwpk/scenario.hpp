#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "gwpk/analytic_diag.hpp"
#include "gwpk/gabor_matrix.hpp"

namespace gwpk {

struct ScenarioConfig {
  std::string symbol = "harmonic";
  std::optional<Eigen::Matrix2d> quadratic;  // inline a = z^T Q z / 2, overrides the name

  GridSpec grid{512, 24.0, 1};

  double lattice_dx = 0.5;
  int lattice_q = 6;  // dxi in grid frequency steps
  int lattice_nx = 64;
  int lattice_nxi = 64;

  std::string window = "gaussian";  // gaussian | hermite
  double window_width = 1.0;
  int window_order = 1;

  // Default: strang_split when the symbol splits, metaplectic_exact for other
  // quadratic forms, weyl_midpoint otherwise.
  std::optional<Method> method;
  double T = 1.0;
  double t_start = 0.0;
  double dt = 0.0;

  double sparsify = 1e-8;
  double decay_floor = 1e-13;
  double delta = kDefaultDelta;
  double eps_threshold = kDefaultRegularEps;
  double caustic_delta = 1e-3;

  std::string initial = "gaussian";  // gaussian | chirp_bump
  double initial_x0 = 0.0, initial_xi0 = 0.0, initial_width = 1.0;
  double initial_omega = 2.0, initial_half_width = 6.0;

  double energy_eps0 = 0.3;
  int energy_N_max = 6;

  std::string modspace_p = "2";
  WeightFunction modspace_weight{};
  double modspace_sparsity_eps = 0.0;  // 0: use the fitted sparsity rate

  double fio_eta_max = 0.0;
  std::string fio_amplitude = "unit";  // unit | unitary

  std::string output = "gwpk_out";

  nlohmann::json source;  // the parsed document, echoed into metrics

  SymbolModel symbol_model() const;
  Lattice lattice() const;
  Window make_window() const;
  PropagatorHandle handle() const;
  SampledState initial_state() const;
};

// Throws Error(config) on malformed input or unknown keys at any level.
ScenarioConfig parse_config(const nlohmann::json& j);
ScenarioConfig load_config(const std::string& path);

const std::vector<std::string>& task_names();

struct TaskResult {
  int exit_code = 0;  // 0 pass, 1 invariant failure, 2 config/other error, 3 numerical failure
  nlohmann::json metrics;
  std::vector<std::string> artifacts;  // GWPK1 files written
};

int exit_code_for(ErrorCode c);

// Runs the task, writing artifacts, metrics.json and (on failure) error.json
// into cfg.output. Library errors are caught and turned into exit codes.
TaskResult run_scenario(const ScenarioConfig& cfg, const std::string& task);

// Registry entries whose name contains `filter`.
std::vector<SymbolInfo> list_scenarios(const std::string& filter = "");

}  // namespace gwpk
