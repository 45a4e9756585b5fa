#pragma once

#include <Eigen/Dense>

#include "gwpk/container.hpp"
#include "gwpk/hamiltonian.hpp"

namespace gwpk {

// Canonical transformation (y, eta) -> (x, xi) with its Jacobian.
struct CanonicalPoint {
  Point chi{0.0, 0.0};
  Eigen::Matrix2d jac = Eigen::Matrix2d::Identity();
};

struct CanonicalMap {
  std::function<CanonicalPoint(const Point&)> eval;
  bool linear = false;
};

// chi_{t1,t0} of the symbol: exact for quadratic forms, RK4 with `steps` otherwise.
CanonicalMap canonical_map(const SymbolModel& a, double t0, double t1, int steps = 0);
CanonicalMap identity_map();

// min over the lattice of |d x / d y| (the position-position Jacobian block).
double caustic_check(const FlowTable& flow);

// Generating function of the flow, sampled on the state grid in x and on a
// band of frequency nodes in eta. Layout [i * neta + k].
struct PhaseFunction {
  GridSpec grid;
  int k_lo = 0;  // first frequency index of the eta band
  int neta = 0;
  RVec phi;    // Phi(x, eta), Phi(0, 0) = 0
  RVec xi;     // d Phi / d x
  RVec y;      // d Phi / d eta
  RVec mixed;  // d^2 Phi / dx d eta = 1 / (d x / d y)
  double delta = 1e-3;
  double min_det = 0.0;     // min |d x / d y| met during construction
  double closedness = 0.0;  // max mismatch of the two mixed partials

  int nx() const { return grid.n; }
  double x(int i) const { return grid.x(i); }
  double eta(int k) const { return grid.xi(k_lo + k); }
  std::size_t index(int i, int k) const { return static_cast<std::size_t>(i) * neta + k; }
  // Bilinear interpolation of the gradient fields at (x, eta).
  Point gradient(double x, double eta) const;
};

struct PhaseOptions {
  double delta = 1e-3;             // caustic threshold on |d x / d y|
  double eta_max = 0.0;            // half-width of the eta band; 0 takes the whole band
  double tol = 1e-10;              // root-finding tolerance on x
  double closedness_warn = 1e-6;   // recorded in the report
  double closedness_abort = 1e-4;  // non-symplectic input
};

PhaseFunction construct_phase(const CanonicalMap& chi, const GridSpec& g, const PhaseOptions& opt = {});

// T f(x) = (2 pi)^{-1} sum_eta e^{i Phi(x, eta)} sigma(x, eta) fhat(eta) d eta.
// sigma is empty (constant 1), a single constant, or one value per Phi node.
SampledState fio_apply(const PhaseFunction& phi, const CVec& sigma, const SampledState& f,
                       double* escaped_mass = nullptr);

// sigma = |Phi_x eta|^{1/2}, which makes the operator unitary for linear flows.
CVec unitary_amplitude(const PhaseFunction& phi);

struct Comparability {
  double c1 = 0.0;  // min LHS / RHS
  double c2 = 0.0;  // max LHS / RHS
  std::size_t samples = 0;
};

// Ratio of |Phi_x(x', eta) - eta'| + |Phi_eta(x', eta) - x| to
// |chi_1(x, eta) - x'| + |chi_2(x, eta) - eta'| over random tuples in the box.
Comparability phase_flow_comparability(const PhaseFunction& phi, const CanonicalMap& chi, double box = 5.0,
                                       std::size_t samples = 400, std::uint64_t seed = 1);

// f64 [4, nx, neta]: phi, xi, y, mixed.
Array to_array(const PhaseFunction& phi);

}  // namespace gwpk
