#pragma once

#include "json.hpp"
#include "gwpk/container.hpp"
#include "gwpk/propagator.hpp"

namespace gwpk {

// ---- infinite-order energies ------------------------------------------------

inline constexpr int kEnergyMaxOrder = 12;

// sum_{a+b=N} eps^N / (a! b!) ||x^a d^b u||. Samples below a relative floor of
// 1e-14 in either domain are treated as roundoff and dropped before weighting.
double energy_functional(const SampledState& u, double eps, int N);

// Estimated roundoff contribution to E^eps_N: 1e-14 ||u|| (eps (x_c + xi_c))^N / N!,
// with x_c, xi_c the extents of u above the floor.
double energy_noise_floor(const SampledState& u, double eps, int N);

struct EnergyProfile {
  int N_max = 0;
  double eps = 0.0;
  RVec values;      // E^eps_N, N = 0..N_max
  RVec sup_values;  // sup_{k <= N} E^eps_k
  RVec noise;       // energy_noise_floor per order
  int flagged_from = -1;  // first order whose noise exceeds 1e-9 ||u||, -1 if none
};

EnergyProfile energy_profile(const SampledState& u, double eps, int N_max);

struct RadiusOptions {
  RVec A_grid{0.5, 1.0, 2.0, 4.0, 8.0};
  RVec t_samples;  // empty: 11 points on [0, 1]
};

struct RadiusTrack {
  double eps0 = 0.0;
  int N_max = 0;
  RVec t;
  RVec A_grid;
  // ratio[a][ti * (N_max + 1) + N] = E^{eps0 e^{-A t}}_N[u(t)] / (2 sup_{k<=N} E^{eps0}_k[u0])
  std::vector<RVec> ratio;
  RVec max_ratio;      // per A
  double best_A = -1;  // smallest A with every ratio <= 1, -1 if none
  int flagged_from = -1;

  nlohmann::json to_json() const;
};

// t samples are measured from h.t_start.
RadiusTrack radius_track(const PropagatorHandle& h, const SampledState& u0, double eps0, int N_max,
                         const RadiusOptions& opt = {});

// ---- weights and modulation norms -------------------------------------------

// m(z) = exp(s |z|^b) (1 + |z|)^a log^r(e + |z|).
struct WeightFunction {
  double a = 0.0, r = 0.0, s = 0.0, b = 1.0;

  double log_value(const Point& z) const;
  double operator()(const Point& z) const;
  // Rate k with m <= C e^{k |z|}; b < 1 or s = 0 gives 0, b > 1 gives infinity.
  double exp_rate() const;
  // v(z) e^{-eps |z|} integrable.
  bool integrable_against(double eps) const { return exp_rate() < eps; }
  nlohmann::json to_json() const;
};

inline constexpr double kMaxLogWeight = 700.0;

enum class NormP { one, two, inf };
NormP norm_p_from_string(const std::string& s);

// Weighted l^p Riemann sum of |V_g f| m over the lattice.
double mod_norm(const SampledState& f, const Window& g, NormP p, const WeightFunction& m, const Lattice& lat);
// Same with per-node weights in lattice order.
double mod_norm(const SampledState& f, const Window& g, NormP p, const RVec& weights, const Lattice& lat);

struct BoundednessReport {
  RVec ratios;
  double max_ratio = 0.0;
  double spread = 0.0;  // max / min
  bool stable = false;  // spread < 2
  double k = 0.0;       // weight rate
  double eps = 0.0;     // sparsity rate it was compared against

  nlohmann::json to_json() const;
};

// Default probes: five unit Gaussians at (0,0), (+-1.5, +-0.5).
std::vector<SampledState> default_probes(const GridSpec& g);

// ||S u||_{M^p_m} / ||u||_{M^p_{m o chi_t}} over the probes. Refuses when the
// weight rate is not below the sparsity rate `eps`.
BoundednessReport boundedness_check(const PropagatorHandle& h, const Window& g, NormP p, const WeightFunction& m,
                                    const Lattice& lat, double eps, const std::vector<SampledState>& probes);

// ---- region masks -----------------------------------------------------------

inline double bracket(const Point& z) { return std::sqrt(1.0 + z[0] * z[0] + z[1] * z[1]); }

struct RegionMask {
  Lattice lattice;
  std::vector<char> mask;  // lattice order
  std::string provenance;  // threshold-derived, delta-neighborhood, flow-image

  RegionMask() = default;
  RegionMask(const Lattice& lat, std::string prov) : lattice(lat), mask(lat.size(), 0), provenance(std::move(prov)) {}
  std::size_t count() const;
  bool subset_of(const RegionMask& o) const;
  RegionMask complement() const;
};

// f64 [nx, nxi] of 0/1 values.
Array to_array(const RegionMask& m);

// Masks stand for unions of lattice cells. Nodes z whose distance to the
// cell of some masked z0 is below delta <z0>.
RegionMask delta_neighborhood(const RegionMask& m, double delta);

// Largest delta / 2^j (j >= 1) for which (G_d*)_d* within G_d and
// (complement of G_d)_d* within the complement of G_d* hold on the lattice.
double nested_delta(const RegionMask& m, double delta, int max_halvings = 40);

// Points of the flow image of G_d* that are not within delta <q> of any q in chi(G).
std::size_t flow_neighborhood_violations(const RegionMask& m, const FlowTable& flow, double delta_star, double delta);
// Largest delta / 2^j (j >= 1) with no such violations.
double flow_delta(const RegionMask& m, const FlowTable& flow, double delta, int max_halvings = 40);

inline constexpr double kDefaultDelta = 0.2;
inline constexpr double kDefaultRegularEps = 0.5;

// Lattice nodes where |V_g f| <= peak * exp(-eps <z>).
RegionMask regular_region(const SampledState& f, const Window& g, double eps, const Lattice& lat);

struct PropagationReport {
  double forward_violation = 0.0;   // fraction of lattice nodes
  double backward_violation = 0.0;
  std::size_t forward_count = 0, backward_count = 0;
  std::size_t forward_outside = 0, backward_outside = 0;  // images leaving the box, not judged
  RegionMask regular_before, regular_after;
  double delta = 0.0, eps = 0.0;

  bool pass(double slack = 0.02) const { return forward_violation <= slack && backward_violation <= slack; }
  nlohmann::json to_json() const;
};

// chi_t(R_f) within (R_Sf)_delta and chi_t^{-1}(R_Sf) within (R_f)_delta.
PropagationReport singularity_propagation_check(const PropagatorHandle& h, const SampledState& f, const Window& g,
                                                const Lattice& lat, double delta, double eps);

// e^{i omega x} times the compactly supported bump exp(-1 / (1 - ((x - c) / w)^2)).
SampledState chirp_bump(const GridSpec& g, double omega, double center = 0.0, double half_width = 6.0);

}  // namespace gwpk
