#pragma once

#include <cstdint>
#include <optional>

#include "json.hpp"
#include "gwpk/container.hpp"
#include "gwpk/propagator.hpp"

namespace gwpk {

// Matrix entries <S pi(z) g, pi(w) g> with rows w and columns z on one lattice.
struct GaborEntry {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  cplx value{};
};

struct GaborMatrix {
  Lattice lattice;
  std::string symbol;
  Method method = Method::strang_split;
  double t_start = 0.0;
  double t_end = 0.0;

  bool dense = true;
  CVec entries;                    // column-major, entries[col * N + row]; dense only
  std::vector<GaborEntry> sparse;  // sorted by (col, row); sparse/banded only

  FlowTable flow;                          // chi_t per column
  std::vector<char> column_ok;             // solver succeeded for this column
  std::vector<std::string> column_errors;  // message per failed column
  RVec escaped;                            // per column: STFT mass outside the row lattice
  RVec noise;                              // per column: absolute level of periodic wrap-around

  std::optional<DecayFit> fit;
  std::optional<double> threshold;
  double kept_fraction = 1.0;      // kept / (rows * valid columns)
  double kept_fraction_all = 1.0;  // kept / (rows * all columns), failed columns counting as dropped
  double dropped_mass = 0.0;       // dropped |entry|^2 over total
  double dropped_frobenius = 0.0;  // absolute Frobenius norm of the dropped part
  double band_radius = 0.0;        // banded assembly only
  double band_leak = 0.0;          // largest entry outside the band relative to the peak

  std::size_t rows() const { return lattice.size(); }
  std::size_t valid_columns() const;
  std::size_t nnz() const;
  cplx at(std::size_t row, std::size_t col) const;  // dense only
  const cplx* column(std::size_t col) const;        // dense only
  double frobenius() const;
  double max_abs() const;
  double max_escaped() const;
};

struct AssembleOptions {
  enum class Mode { automatic, dense, banded };
  Mode mode = Mode::automatic;
  double floor = 1e-13;  // band edge and fit floor, relative to the peak entry
  int pilot_columns = 16;
  double pilot_min_eps = 0.05;
  double band_margin = 2.0;  // phase-space units added to the predicted band
  int flow_steps = 0;        // 0 picks a default
};

inline constexpr std::size_t kDenseMaxNodes = 64 * 64;
inline constexpr std::size_t kBandedMaxNodes = 128 * 128;

// Column z is stft(evolve(pi(z) g)) on the row lattice. Columns whose solve
// fails are flagged and left empty; assembly continues.
GaborMatrix assemble(const PropagatorHandle& h, const Window& g, const Lattice& lat, const AssembleOptions& opt = {});

// Same for any linear operator on states, fitted against the given flow.
using StateOperator = std::function<SampledState(const SampledState&)>;
GaborMatrix assemble_operator(const StateOperator& op, FlowTable flow, const Window& g, const Lattice& lat,
                              const AssembleOptions& opt = {});

// log|entry| ~ C - eps |w - chi_t(z)| over valid columns. Entries under a
// column's wrap-around noise level are left out along with those under the floor.
DecayFit fit_sparsity(const GaborMatrix& M, const DecayOptions& opt = {});

// Keeps entries with |value| >= threshold (threshold 0 keeps every nonzero entry).
GaborMatrix sparsify(const GaborMatrix& M, double threshold);

struct ApplyReport {
  double truncation = 0.0;     // relative round-trip error of the analysis lattice on f
  double dropped_bound = 0.0;  // cell * ||dropped||_F
  double flagged_bound = 0.0;  // coefficient mass sitting on failed columns
  double escaped_bound = 0.0;  // coefficient mass carried outside the row lattice
  double budget() const { return truncation + dropped_bound + flagged_bound + escaped_bound; }
};

// out = istft(cell * M * stft(f)).
SampledState sparse_apply(const GaborMatrix& M, const Window& g, const SampledState& f, ApplyReport* rep = nullptr);
SampledState dense_apply(const GaborMatrix& M, const Window& g, const SampledState& f, ApplyReport* rep = nullptr);

// Fraction of the Frobenius mass with |w - chi_t(z)| <= radius.
double mass_within(const GaborMatrix& M, double radius);

// Frame bound of a tight Gaussian-type frame: 2 pi ||g||^2 / cell.
double frame_constant(const Window& g, const Lattice& lat);

// Range of ||M V_g p|| / (frame_constant ||V_g p||) over the probes, i.e. the
// singular values of M restricted to the coefficient space of the frame.
std::pair<double, double> probe_singular_range(const GaborMatrix& M, const Window& g,
                                               const std::vector<SampledState>& probes);

// Triplets as f64 [nnz, 4] rows (row, col, re, im), with a JSON manifest.
Array to_triplet_array(const GaborMatrix& M);
nlohmann::json manifest(const GaborMatrix& M);

}  // namespace gwpk
