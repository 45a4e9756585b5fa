#pragma once

#include <functional>

#include "gwpk/common.hpp"

namespace gwpk {

// Periodic grid on [-x_max, x_max)^d with n points per axis.
struct GridSpec {
  int n = 512;
  double x_max = 24.0;
  int d = 1;

  double dx() const { return 2.0 * x_max / n; }
  double dxi() const { return kPi / x_max; }
  double xi_max() const { return kPi / dx(); }
  double x(int j) const { return -x_max + j * dx(); }
  double xi(int k) const { return (k - n / 2) * dxi(); }
  std::size_t size() const;
  void validate() const;
  bool operator==(const GridSpec& o) const { return n == o.n && x_max == o.x_max && d == o.d; }
};

enum class Domain { position, frequency };

struct SampledState {
  GridSpec grid;
  CVec values;
  Domain domain = Domain::position;

  SampledState() = default;
  SampledState(const GridSpec& g, Domain dom = Domain::position);
  SampledState(const GridSpec& g, CVec v, Domain dom = Domain::position);

  // Cell measure of the current domain (dx or dxi, to the power d).
  double cell() const;
};

SampledState sample(const GridSpec& g, const std::function<cplx(double)>& f);
SampledState normalized_gaussian(const GridSpec& g, double x0 = 0.0, double xi0 = 0.0, double width = 1.0);

SampledState fourier_forward(const SampledState& f);
SampledState fourier_inverse(const SampledState& F);

// In-place variants on raw 1-d sample vectors (same scaling as above).
void fourier_forward_inplace(CVec& v, const GridSpec& g);
void fourier_inverse_inplace(CVec& v, const GridSpec& g);

double l2_norm(const SampledState& f);
cplx inner(const SampledState& f, const SampledState& g);  // linear in f
double relative_l2(const SampledState& a, const SampledState& ref);

// Fraction of L2 mass in the outer 10% of the domain.
double boundary_mass(const SampledState& f);

// Applies m(xi) in the Fourier domain; input and output in position domain (d=1).
SampledState fourier_multiply(const SampledState& f, const std::function<cplx(double)>& m);

// Spectral derivative of order k (d=1).
SampledState spectral_derivative(const SampledState& f, int k);

// g(y - a) via the Fourier shift theorem; exact index shift when a is a grid multiple.
CVec shifted(const CVec& v, const GridSpec& g, double a);

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* where);

}  // namespace gwpk
