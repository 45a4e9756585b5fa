#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "gwpk/tf_analysis.hpp"

namespace gwpk {

// Phase-space vectors z = (x, xi) of length 2d, d <= 2; fixed capacity avoids heap traffic.
using ZVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using ZMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

enum class SymbolKind { quadratic_form, separable, general };
const char* to_string(SymbolKind k);

struct SymbolModel {
  std::string name;
  std::string description;
  SymbolKind kind = SymbolKind::general;
  int d = 1;
  bool time_dependent = false;
  // Set by callers once validate_symbol passed; required for general symbols.
  bool validated = false;

  std::function<double(double t, const ZVec& z)> value;
  // Optional analytic derivatives; central differences are used when empty.
  std::function<ZVec(double t, const ZVec& z)> gradient;
  std::function<ZMat(double t, const ZVec& z)> hessian;

  ZMat Q;  // a = z^T Q z / 2 for quadratic forms

  // Optional split a = k(xi) + V(t, x) (d = 1), used by split-step solvers.
  std::function<double(double xi)> kinetic;
  std::function<double(double t, double x)> potential;

  double evaluate(double t, const ZVec& z) const { return value(t, z); }
  double evaluate(double t, double x, double xi) const;
  ZVec grad(double t, const ZVec& z) const;
  ZMat hess(double t, const ZVec& z) const;
  double partial_x(double t, double x, double xi) const { return grad(t, z1(x, xi))(0); }
  double partial_xi(double t, double x, double xi) const { return grad(t, z1(x, xi))(1); }
  bool has_split() const { return static_cast<bool>(kinetic) && static_cast<bool>(potential); }

  static ZVec z1(double x, double xi) {
    ZVec z(2);
    z << x, xi;
    return z;
  }
};

SymbolModel quadratic_symbol(const ZMat& Q, const std::string& name = "quadratic");
SymbolModel separable_symbol(std::function<double(double)> k, std::function<double(double)> dk,
                             std::function<double(double)> ddk, std::function<double(double, double)> V,
                             std::function<double(double, double)> dV, std::function<double(double, double)> ddV,
                             bool time_dependent, const std::string& name = "separable");
SymbolModel general_symbol(std::function<double(double, const ZVec&)> a, int d, bool time_dependent,
                           const std::string& name = "general");

struct SymbolInfo {
  std::string name;
  std::string description;
};
std::vector<SymbolInfo> symbol_registry();
SymbolModel make_symbol(const std::string& name);

// Smooth switch used by the "kicked" symbol.
double kick_switch(double t);

struct FlowResult {
  RVec t_grid;
  std::vector<ZVec> traj;
  RVec psi;
  std::vector<ZMat> jac;
  double error_estimate = 0.0;  // step-halving difference at T

  const ZVec& final_state() const { return traj.back(); }
  const ZMat& final_jac() const { return jac.back(); }
};

class FlowBlowUp : public Error {
 public:
  FlowBlowUp(const std::string& what, double last_valid) : Error(ErrorCode::blow_up, what), last_valid_time(last_valid) {}
  double last_valid_time;
};

struct FlowOptions {
  bool error_estimate = true;
  bool keep_trajectory = true;
  double blowup_radius = 1e6;
};

FlowResult integrate_flow(const SymbolModel& a, const ZVec& seed, double T, int steps, const FlowOptions& opt = {});
FlowResult integrate_flow(const SymbolModel& a, const ZVec& seed, double t0, double T, int steps, const FlowOptions& opt);

struct FlowTable {
  Lattice lattice;
  double T = 0.0;
  std::vector<Point> chi;
  RVec psi;
  std::vector<Eigen::Matrix2d> jac;
  std::vector<char> ok;
  std::vector<std::string> failures;  // per node, empty when ok
  double lipschitz = 1.0;
  double inverse_lipschitz = 1.0;
  double max_det_error = 0.0;

  Point map(std::size_t node) const { return chi[node]; }
};

FlowTable flow_map_on_lattice(const SymbolModel& a, const Lattice& lat, double T, int steps);
FlowTable flow_map_on_lattice(const SymbolModel& a, const Lattice& lat, double t0, double T, int steps);

// Max relative error between finite-difference gradients of psi and the
// identity d psi = xi^t dx^t - xi dx read off the Jacobian.
double phase_gradient_check(const SymbolModel& a, const ZVec& seed, double T, int steps = 1000);

struct Box {
  double x_lo = -3, x_hi = 3, xi_lo = -3, xi_hi = 3;
};

struct SymbolValidation {
  std::vector<int> orders;
  RVec max_derivative;  // max |d^alpha a| / alpha! per order over the box
  RVec max_ratios;      // max_derivative / C^{order+1}
  RVec half_box_growth; // full-box over half-box maximum per order
  double C = 0.0;
  bool super_geometric = false;
  bool non_uniform = false;
  bool violation = false;
  std::string note = "sampled heuristic, not a proof";
};

SymbolValidation validate_symbol(const SymbolModel& a, int k, const Box& box, int K_max, double t = 0.0);

}  // namespace gwpk
