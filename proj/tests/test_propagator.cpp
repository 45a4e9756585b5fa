#include "doctest.h"

#include <cmath>

#include "gwpk/propagator.hpp"

using namespace gwpk;

namespace {

const GridSpec kGrid{512, 24.0, 1};

Lattice lattice64() { return make_lattice(kGrid, 0.5, 6, 64, 64); }

// Exact free evolution of pi^{-1/4} e^{-x^2/2} under u_t = i u_xx.
SampledState free_gaussian(const GridSpec& g, double t) {
  const cplx w = 1.0 + 2.0 * kI * t;
  return sample(g, [&](double x) { return std::pow(kPi, -0.25) / std::sqrt(w) * std::exp(-x * x / (2.0 * w)); });
}

cplx best_constant(const SampledState& a, const SampledState& b) {
  // c minimising ||a - c b||
  return inner(a, b) / inner(b, b);
}

double aligned_error(const SampledState& a, const SampledState& b) {
  const cplx c = best_constant(a, b);
  SampledState cb = b;
  for (auto& v : cb.values) v *= c;
  return relative_l2(cb, a);
}

PropagatorHandle handle(const std::string& sym, Method m, double T, double dt = 0.0) {
  return PropagatorHandle{make_symbol(sym), m, 0.0, T, dt};
}

}  // namespace

TEST_CASE("weyl quantization of xi^2 is minus the second derivative") {
  auto f = normalized_gaussian(kGrid, 0.5, 1.0);
  auto w = weyl_apply(make_symbol("free"), 0.0, f);
  auto d2 = spectral_derivative(f, 2);
  for (auto& v : d2.values) v = -v;
  CHECK(relative_l2(w, d2) < 1e-8);
}

TEST_CASE("weyl quantization of x is multiplication") {
  auto a = general_symbol([](double, const ZVec& z) { return z(0); }, 1, false);
  auto f = normalized_gaussian(kGrid, -1.0, 2.0);
  auto w = weyl_apply(a, 0.0, f);
  double err = 0;
  for (int j = 0; j < kGrid.n; ++j) err = std::max(err, std::abs(w.values[j] - kGrid.x(j) * f.values[j]));
  CHECK(err < 1e-12);
}

TEST_CASE("weyl quantization of x xi is the symmetrized product") {
  auto f = normalized_gaussian(kGrid, 0.7, -0.8);
  auto w = weyl_apply(make_symbol("shear"), 0.0, f);
  // (x D + D x) / 2 with D = -i d/dx, built from spectral derivatives
  auto df = spectral_derivative(f, 1);
  SampledState xf = f;
  for (int j = 0; j < kGrid.n; ++j) xf.values[j] *= kGrid.x(j);
  auto dxf = spectral_derivative(xf, 1);
  SampledState ref(kGrid);
  for (int j = 0; j < kGrid.n; ++j) ref.values[j] = -0.5 * kI * (kGrid.x(j) * df.values[j] + dxf.values[j]);
  CHECK(relative_l2(w, ref) < 1e-8);
}

TEST_CASE("weyl_apply preconditions") {
  GridSpec big{4096, 24.0, 1};
  CHECK_THROWS_AS(weyl_apply(make_symbol("free"), 0.0, SampledState(big)), Error);
  CHECK_THROWS_AS(weyl_apply(make_symbol("free"), 0.0, SampledState(kGrid, Domain::frequency)), Error);
}

TEST_CASE("free particle against the closed-form spreading Gaussian") {
  EvolveReport rep;
  auto u = evolve(handle("free", Method::strang_split, 1.0), normalized_gaussian(kGrid), &rep);
  CHECK(relative_l2(u, free_gaussian(kGrid, 1.0)) < 1e-7);
  CHECK(std::abs(rep.norm_out - rep.norm_in) < 1e-8);
  CHECK(rep.steps == 512);
  CHECK(rep.boundary_trace.size() == 513);
  auto m = evolve(handle("free", Method::metaplectic_exact, 1.0), normalized_gaussian(kGrid));
  CHECK(relative_l2(m, free_gaussian(kGrid, 1.0)) < 1e-7);
}

TEST_CASE("zero-length evolution is the identity") {
  auto u0 = normalized_gaussian(kGrid, 1.0, -2.0);
  for (Method m : {Method::strang_split, Method::metaplectic_exact, Method::weyl_midpoint}) {
    auto u = evolve(PropagatorHandle{make_symbol("harmonic"), m, 0.3, 0.3, 0.0}, u0);
    CHECK(u.values == u0.values);
  }
}

TEST_CASE("harmonic ground state is stationary up to e^{-it/2}") {
  auto u0 = normalized_gaussian(kGrid);
  for (double t : {0.4, 1.0, 2.5}) {
    auto exact = evolve(handle("harmonic", Method::metaplectic_exact, t), u0);
    auto split = evolve(handle("harmonic", Method::strang_split, t, 2.5e-4), u0);
    double e1 = 0, e2 = 0, ph = 0;
    for (int j = 0; j < kGrid.n; ++j) {
      e1 = std::max(e1, std::abs(std::abs(exact.values[j]) - std::abs(u0.values[j])));
      e2 = std::max(e2, std::abs(std::abs(split.values[j]) - std::abs(u0.values[j])));
      ph = std::max(ph, std::abs(exact.values[j] - std::exp(-0.5 * kI * t) * u0.values[j]));
    }
    CHECK(e1 < 1e-8);
    CHECK(e2 < 1e-8);
    CHECK(ph < 1e-8);
  }
}

TEST_CASE("unitarity and semigroup") {
  auto u0 = normalized_gaussian(kGrid, 1.0, 1.5);
  for (const char* s : {"harmonic", "anharmonic-bounded", "kicked", "free"}) {
    auto u = evolve(handle(s, Method::strang_split, 1.0), u0);
    CHECK_MESSAGE(std::abs(l2_norm(u) - 1.0) < 1e-8, s);
  }
  auto u = evolve(handle("shear", Method::metaplectic_exact, 0.7), u0);
  CHECK(std::abs(l2_norm(u) - 1.0) < 1e-8);
  for (const char* s : {"harmonic", "anharmonic-bounded"}) {
    auto a = make_symbol(s);
    auto u1 = evolve(PropagatorHandle{a, Method::strang_split, 0.0, 0.4, 1e-3}, u0);
    auto u2 = evolve(PropagatorHandle{a, Method::strang_split, 0.4, 1.0, 1e-3}, u1);
    auto uu = evolve(PropagatorHandle{a, Method::strang_split, 0.0, 1.0, 1e-3}, u0);
    CHECK_MESSAGE(relative_l2(u2, uu) < 1e-6, s);
  }
  auto m1 = evolve(PropagatorHandle{make_symbol("shear"), Method::metaplectic_exact, 0.0, 0.3, 0.0}, u0);
  auto m2 = evolve(PropagatorHandle{make_symbol("shear"), Method::metaplectic_exact, 0.3, 0.8, 0.0}, m1);
  auto mm = evolve(PropagatorHandle{make_symbol("shear"), Method::metaplectic_exact, 0.0, 0.8, 0.0}, u0);
  CHECK(relative_l2(m2, mm) < 1e-6);
}

TEST_CASE("weyl midpoint solver on a small grid") {
  GridSpec g{128, 12.0, 1};
  auto u0 = normalized_gaussian(g, 0.5, 0.5);
  EvolveReport rep;
  auto a = evolve(PropagatorHandle{make_symbol("anharmonic-bounded"), Method::weyl_midpoint, 0.0, 0.2, 2e-4}, u0, &rep);
  auto b = evolve(PropagatorHandle{make_symbol("anharmonic-bounded"), Method::strang_split, 0.0, 0.2, 2e-4}, u0);
  CHECK(std::abs(l2_norm(a) - l2_norm(u0)) < 1e-8);
  CHECK(relative_l2(a, b) < 1e-4);
  CHECK(rep.fixed_point_iterations <= 10);
  // shear is not separable: only the midpoint and metaplectic solvers apply
  auto s = evolve(PropagatorHandle{make_symbol("shear"), Method::weyl_midpoint, 0.0, 0.2, 2e-4}, u0);
  auto sm = evolve(PropagatorHandle{make_symbol("shear"), Method::metaplectic_exact, 0.0, 0.2, 0.0}, u0);
  CHECK(relative_l2(s, sm) < 1e-4);
  CHECK_THROWS_AS(evolve(PropagatorHandle{make_symbol("shear"), Method::strang_split, 0.0, 0.2, 0.0}, u0), Error);
  // time steps too large for the contraction
  try {
    evolve(PropagatorHandle{make_symbol("free"), Method::weyl_midpoint, 0.0, 0.2, 0.05}, u0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_converged);
  }
}

TEST_CASE("method and kind compatibility") {
  auto u0 = normalized_gaussian(kGrid);
  CHECK_THROWS_AS(evolve(handle("anharmonic-bounded", Method::metaplectic_exact, 1.0), u0), Error);
  auto edge = normalized_gaussian(kGrid, 22.0);
  try {
    evolve(handle("free", Method::strang_split, 1.0), edge);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::boundary_mass);
  }
  // mass driven into the boundary region during the run
  try {
    evolve(handle("free", Method::strang_split, 1.0), normalized_gaussian(kGrid, 0.0, 9.0));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::boundary_mass);
  }
}

TEST_CASE("Strang splitting is second order on the harmonic oscillator") {
  auto u0 = normalized_gaussian(kGrid, 1.5, -1.0);
  auto exact = evolve(handle("harmonic", Method::metaplectic_exact, 1.0), u0);
  RVec dts{1e-2, 5e-3, 2.5e-3}, errs;
  for (double dt : dts) errs.push_back(relative_l2(evolve(handle("harmonic", Method::strang_split, 1.0, dt), u0), exact));
  const double slope = std::log(errs[0] / errs[2]) / std::log(dts[0] / dts[2]);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("closed-form metaplectic window follows the square-root branch") {
  auto g = gaussian_window(kGrid);
  auto h = make_symbol("harmonic");
  for (double t : {0.3, kPi, 2.0 * kPi + 0.5, 3.0 * kPi}) {
    auto G = metaplectic_window(h, 0.0, t, g);
    auto S = evolve(handle("harmonic", Method::strang_split, t, 1e-3), g.state);
    CHECK_MESSAGE(relative_l2(G, S) < 1e-5, t);
  }
  // short-time match against the split-step solver for the free particle
  auto Gf = metaplectic_window(make_symbol("free"), 0.0, 0.01, g);
  auto Sf = evolve(handle("free", Method::strang_split, 0.01), g.state);
  CHECK(relative_l2(Gf, Sf) < 1e-12);
  // shear acts by dilation e^{-t/2} g(e^{-t} y)
  const double t = 0.6;
  auto Gs = metaplectic_window(make_symbol("shear"), 0.0, t, g);
  auto dil = sample(kGrid, [&](double y) {
    const double u = std::exp(-t) * y;
    return cplx(std::exp(-t / 2) * synthesis_norm() * std::pow(kPi, -0.25) * std::exp(-0.5 * u * u));
  });
  CHECK(relative_l2(Gs, dil) < 1e-12);
}

TEST_CASE("metaplectic_apply") {
  auto g = gaussian_window(kGrid);
  auto lat = lattice64();
  auto u0 = normalized_gaussian(kGrid);
  auto id = metaplectic_apply(make_symbol("harmonic"), 0.0, u0, g, lat);
  CHECK(relative_l2(id, u0) < 1e-6);
  CHECK(relative_l2(id, istft(stft(u0, g, lat), g)) < 1e-12);
  auto mf = metaplectic_apply(make_symbol("free"), 1.0, u0, g, lat);
  auto sf = evolve(handle("free", Method::strang_split, 1.0), u0);
  CHECK(relative_l2(mf, sf) < 1e-5);
  // quarter period of the harmonic oscillator is a Fourier transform
  auto v0 = normalized_gaussian(kGrid, 1.0, 0.5, 1.3);
  auto q = metaplectic_apply(make_symbol("harmonic"), kPi / 2, v0, g, lat);
  // analytic transform of the packet, sampled on the position grid
  const double w = 1.3;
  auto Fx = sample(kGrid, [&](double y) {
    return std::pow(kPi * w * w, -0.25) * w * std::sqrt(kTwoPi) * std::exp(-kI * y) *
           std::exp(-0.5 * w * w * (y - 0.5) * (y - 0.5));
  });
  CHECK(aligned_error(q, Fx) < 1e-5);
  const cplx c = best_constant(q, Fx);
  CHECK(std::abs(c - std::exp(-0.25 * kI * kPi) / std::sqrt(kTwoPi)) < 1e-5);
  CHECK_THROWS_AS(metaplectic_apply(make_symbol("anharmonic-bounded"), 1.0, u0, g, lat), Error);
  CHECK_THROWS_AS(metaplectic_apply(make_symbol("free"), 1.0, u0, hermite_window(kGrid, 1), lat), Error);
}

TEST_CASE("evolved windows") {
  auto g = gaussian_window(kGrid);
  auto h = handle("harmonic", Method::strang_split, 0.8, 1e-3);
  auto e0 = evolved_window(h, {0.0, 0.0}, g);
  auto G = metaplectic_window(h.symbol, 0.0, 0.8, g);
  CHECK(aligned_error(e0.G, G) < 1e-6);
  auto id = evolved_window(handle("anharmonic-bounded", Method::strang_split, 0.0), {1.0, 2.0}, g);
  CHECK(relative_l2(id.G, g.state) < 1e-14);
  auto an = evolved_window(handle("anharmonic-bounded", Method::strang_split, 0.5), {2.0, 1.0}, g);
  CHECK(an.decay.eps > 0.1);
  CHECK(std::abs(l2_norm(an.G) - l2_norm(g.state)) < 1e-8 * l2_norm(g.state));
}

TEST_CASE("window independence for quadratic symbols") {
  auto g = gaussian_window(kGrid);
  struct Case {
    const char* sym;
    Method m;
  };
  for (auto c : {Case{"free", Method::strang_split}, Case{"harmonic", Method::strang_split},
                 Case{"shear", Method::metaplectic_exact}}) {
    auto h = handle(c.sym, c.m, 1.0);
    auto G0 = evolved_window(h, {0.0, 0.0}, g).G;
    double worst = 0;
    for (double x : {-2.0, 0.0, 2.0})
      for (double xi : {-1.5, 0.0, 1.5}) {
        auto Gz = evolved_window(h, {x, xi}, g).G;
        SampledState d = Gz;
        for (int j = 0; j < kGrid.n; ++j) d.values[j] -= G0.values[j];
        worst = std::max(worst, l2_norm(d) / l2_norm(g.state));
      }
    CHECK_MESSAGE(worst < 1e-5, c.sym);
  }
}

TEST_CASE("uniform window decay on the anharmonic scenario") {
  auto g = gaussian_window(kGrid);
  double worst = INFINITY;
  for (double t : {0.25, 0.5, 1.0})
    for (Point z : {Point{0, 0}, Point{2, 1}, Point{-3, 2}, Point{1, -3}})
      worst = std::min(worst, evolved_window(handle("anharmonic-bounded", Method::strang_split, t), z, g).decay.eps);
  CHECK(worst >= 0.05);
}

TEST_CASE("gabor multiplier representation") {
  auto g = gaussian_window(kGrid);
  auto lat = lattice64();
  auto u0 = normalized_gaussian(kGrid, 0.5, -0.5);
  auto free = make_symbol("free");
  PropagatorHandle h{free, Method::metaplectic_exact, 0.0, 1.0, 0.0};
  auto a = gabor_multiplier_apply(h, u0, g, lat, WindowTable::shared(metaplectic_window(free, 0.0, 1.0, g)));
  auto b = metaplectic_apply(free, 1.0, u0, g, lat);
  CHECK(a.values == b.values);
  PropagatorHandle h0{free, Method::strang_split, 0.0, 0.0, 0.0};
  auto r = gabor_multiplier_apply(h0, u0, g, lat, WindowTable::shared(g.state));
  CHECK(relative_l2(r, istft(stft(u0, g, lat), g)) < 1e-12);
  CHECK_THROWS_AS(gabor_multiplier_apply(h0, u0, g, lat, WindowTable::explicit_nodes({})), Error);
}

TEST_CASE("gabor multiplier with per-node windows on the anharmonic symbol") {
  auto g = gaussian_window(kGrid);
  auto lat = lattice64();
  auto u0 = normalized_gaussian(kGrid, 0.5, 0.5);
  auto h = handle("anharmonic-bounded", Method::strang_split, 0.5);
  auto table = WindowTable::lazy(h, g);
  // far nodes carry coefficients below 1e-8 and their windows would leave the grid
  auto out = gabor_multiplier_apply(h, u0, g, lat, table, MultiplierOptions{1e-8});
  CHECK(table.cached() > 100);
  auto ref = evolve(h, u0);
  CHECK(relative_l2(out, ref) < 1e-3);
}
