#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "gwpk/hamiltonian.hpp"

namespace gwpk {

enum class Method { metaplectic_exact, strang_split, weyl_midpoint };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct PropagatorHandle {
  SymbolModel symbol;
  Method method = Method::strang_split;
  double t_start = 0.0;
  double t_end = 1.0;
  double dt = 0.0;  // 0 selects (t_end - t_start) / 512

  int steps() const;
  double step() const;
  // Method/kind compatibility.
  void validate() const;
};

struct EvolveReport {
  double norm_in = 0.0;
  double norm_out = 0.0;
  int steps = 0;
  RVec trace_t;
  RVec boundary_trace;  // boundary mass after each step
  double max_boundary = 0.0;
  int fixed_point_iterations = 0;  // weyl_midpoint: worst step
  std::vector<std::string> warnings;
};

inline constexpr double kBoundaryWarn = 1e-10;
inline constexpr double kBoundaryFail = 1e-6;

// Weyl quantization a^w(t) applied by O(n^2) midpoint quadrature.
SampledState weyl_apply(const SymbolModel& a, double t, const SampledState& f);

SampledState evolve(const PropagatorHandle& h, const SampledState& u0, EvolveReport* rep = nullptr);

// Linear symplectic map exp((t1 - t0) J Q) of a quadratic symbol.
Eigen::Matrix2d quadratic_flow(const SymbolModel& a, double t0, double t1);

// Closed form S(t1, t0) g for a centred Gaussian window.
SampledState metaplectic_window(const SymbolModel& a, double t0, double t1, const Window& g);

// Flow data on a lattice; exact linear algebra for quadratic forms, RK4 otherwise.
FlowTable lattice_flow(const SymbolModel& a, const Lattice& lat, double t0, double t1, int steps = 0);

struct EvolvedWindow {
  Point z{0.0, 0.0};
  double t = 0.0;
  SampledState G;
  DecayFit decay;
};

// Bounded lattice (about +-6 units) used for window decay fits.
Lattice window_fit_lattice(const GridSpec& g);

EvolvedWindow evolved_window(const PropagatorHandle& h, const Point& z, const Window& g);
EvolvedWindow evolved_window(const PropagatorHandle& h, const Point& z, const Window& g, const Lattice& fit_lat);

// Per-node windows G(t, z, .) for the Gabor-multiplier representation.
class WindowTable {
 public:
  enum class Mode { shared, lazy, explicit_nodes };

  static WindowTable shared(SampledState G);
  static WindowTable lazy(const PropagatorHandle& h, const Window& g);
  static WindowTable explicit_nodes(std::map<std::size_t, SampledState> nodes);

  Mode mode() const { return mode_; }
  // Window for lattice node `node` at point z; throws for missing explicit nodes.
  SampledState get(std::size_t node, const Point& z) const;
  std::size_t cached() const;

 private:
  struct Cache {
    std::mutex mu;
    std::map<std::tuple<std::string, double, long, long>, SampledState> entries;
  };
  Mode mode_ = Mode::shared;
  std::shared_ptr<const SampledState> shared_;
  std::shared_ptr<const std::map<std::size_t, SampledState>> nodes_;
  std::shared_ptr<const PropagatorHandle> handle_;
  std::shared_ptr<const Window> window_;
  std::shared_ptr<Cache> cache_;
};

struct MultiplierOptions {
  double skip_below = 1e-15;  // nodes with |V_g f| below this fraction of the peak are skipped
};

SampledState gabor_multiplier_apply(const PropagatorHandle& h, const SampledState& f, const Window& g,
                                    const Lattice& lat, const WindowTable& windows, const MultiplierOptions& opt = {});

SampledState metaplectic_apply(const SymbolModel& a, double t, const SampledState& f, const Window& g,
                               const Lattice& lat);

// Lattice fine enough that the Riemann-sum synthesis error is far below 1e-10.
Lattice exact_lattice(const GridSpec& g);

}  // namespace gwpk
