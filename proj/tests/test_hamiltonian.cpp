#include "doctest.h"

#include <cmath>
#include <random>

#include "gwpk/hamiltonian.hpp"

using namespace gwpk;

namespace {
ZVec z(double x, double xi) { return SymbolModel::z1(x, xi); }
}

TEST_CASE("registry contains the built-in symbols") {
  auto reg = symbol_registry();
  std::vector<std::string> names;
  for (auto& e : reg) names.push_back(e.name);
  for (const char* n : {"free", "harmonic", "shear", "anharmonic-bounded", "kicked"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  CHECK_THROWS_AS(make_symbol("nope"), Error);
  auto h = make_symbol("harmonic");
  CHECK(h.kind == SymbolKind::quadratic_form);
  CHECK(h.has_split());
  CHECK(h.evaluate(0, 1.0, 2.0) == doctest::Approx(2.5));
  CHECK_FALSE(make_symbol("shear").has_split());
  CHECK(make_symbol("kicked").time_dependent);
  CHECK(make_symbol("anharmonic-bounded").kind == SymbolKind::separable);
}

TEST_CASE("finite-difference derivatives of general symbols") {
  auto a = general_symbol([](double, const ZVec& v) { return v(1) * v(1) + std::cos(v(0)); }, 1, false);
  const double x = 0.7, xi = -1.3;
  CHECK(a.partial_x(0, x, xi) == doctest::Approx(-std::sin(x)).epsilon(1e-8));
  CHECK(a.partial_xi(0, x, xi) == doctest::Approx(2 * xi).epsilon(1e-8));
  ZMat H = a.hess(0, z(x, xi));
  CHECK(H(0, 0) == doctest::Approx(-std::cos(x)).epsilon(1e-6));
  CHECK(H(1, 1) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(std::abs(H(0, 1)) < 1e-6);
  CHECK_THROWS_AS(integrate_flow(a, z(0, 0), 1.0, 10), Error);
  a.validated = true;
  CHECK_NOTHROW(integrate_flow(a, z(0, 0), 1.0, 10));
}

TEST_CASE("free flow is the exact shear") {
  auto a = make_symbol("free");
  const double x = 0.8, xi = -1.7, T = 1.3;
  auto r = integrate_flow(a, z(x, xi), T, 64);
  CHECK(std::abs(r.final_state()(0) - (x + 2 * T * xi)) < 1e-10);
  CHECK(std::abs(r.final_state()(1) - xi) < 1e-10);
  CHECK(std::abs(r.psi.back() - T * xi * xi) < 1e-10);
  CHECK(std::abs(r.final_jac()(0, 1) - 2 * T) < 1e-10);
  CHECK(r.error_estimate < 1e-12);
  CHECK(r.psi.front() == 0.0);
  CHECK(r.traj.front() == z(x, xi));
}

TEST_CASE("zero time is the identity") {
  auto r = integrate_flow(make_symbol("harmonic"), z(1, 2), 0.0, 10);
  CHECK(r.final_state() == z(1, 2));
  CHECK(r.psi.back() == 0.0);
  CHECK(r.final_jac().isIdentity());
}

TEST_CASE("harmonic quarter period") {
  auto a = make_symbol("harmonic");
  const double T = kPi / 2;
  auto r = integrate_flow(a, z(1, 0), T, 400);
  CHECK(std::abs(r.final_state()(0)) < 1e-8);
  CHECK(std::abs(r.final_state()(1) + 1.0) < 1e-8);
  // psi(t) = -sin(2t)/4 along x = cos s, xi = -sin s
  CHECK(std::abs(r.psi.back()) < 1e-8);
  auto r2 = integrate_flow(a, z(1, 0), 0.7, 400);
  CHECK(std::abs(r2.psi.back() + std::sin(1.4) / 4.0) < 1e-10);
}

TEST_CASE("symplecticity along trajectories") {
  for (const auto& e : symbol_registry()) {
    auto a = make_symbol(e.name);
    auto r = integrate_flow(a, z(1.3, -0.4), 1.0, 512);
    double worst = 0;
    for (auto& J : r.jac) worst = std::max(worst, std::abs(J.determinant() - 1.0));
    CHECK_MESSAGE(worst < 1e-7, e.name);
  }
}

TEST_CASE("flow composition for autonomous symbols") {
  FlowOptions opt;
  opt.error_estimate = false;
  for (const char* n : {"harmonic", "shear", "anharmonic-bounded"}) {
    auto a = make_symbol(n);
    auto r1 = integrate_flow(a, z(0.5, 1.0), 0.4, 400, opt);
    auto r2 = integrate_flow(a, r1.final_state(), 0.6, 600, opt);
    auto r = integrate_flow(a, z(0.5, 1.0), 1.0, 1000, opt);
    CHECK_MESSAGE((r2.final_state() - r.final_state()).cwiseAbs().maxCoeff() < 1e-8, n);
  }
}

TEST_CASE("quadratic flows are linear with seed-independent Jacobian") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (const char* n : {"free", "harmonic", "shear"}) {
    auto a = make_symbol(n);
    auto ref = integrate_flow(a, z(0, 0), 1.0, 256).final_jac();
    double dev = 0;
    for (int s = 0; s < 10; ++s)
      dev = std::max(dev, (integrate_flow(a, z(u(rng), u(rng)), 1.0, 256).final_jac() - ref).cwiseAbs().maxCoeff());
    CHECK(dev < 1e-9);
    ZVec p = z(u(rng), u(rng)), q = z(u(rng), u(rng));
    auto fp = integrate_flow(a, p, 1.0, 256).final_state();
    auto fq = integrate_flow(a, q, 1.0, 256).final_state();
    auto fs = integrate_flow(a, p + 2.0 * q, 1.0, 256).final_state();
    CHECK((fs - fp - 2.0 * fq).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("blow-up is reported with the last valid time") {
  auto a = general_symbol([](double, const ZVec& v) { return -v(0) * v(0) * v(0) * v(0) / 4.0 + v(1) * v(1) / 2.0; }, 1, false);
  a.validated = true;
  try {
    integrate_flow(a, z(2.0, 0.0), 10.0, 10000);
    CHECK(false);
  } catch (const FlowBlowUp& e) {
    CHECK(e.code() == ErrorCode::blow_up);
    CHECK(e.last_valid_time > 0.0);
    CHECK(e.last_valid_time < 10.0);
  }
}

TEST_CASE("two-dimensional quadratic flow") {
  ZMat Q = ZMat::Zero(4, 4);
  Q(2, 2) = 2;
  Q(3, 3) = 2;
  auto a = quadratic_symbol(Q);
  CHECK(a.d == 2);
  ZVec s(4);
  s << 1, 2, 0.5, -1;
  auto r = integrate_flow(a, s, 1.0, 32);
  CHECK(std::abs(r.final_state()(0) - 2.0) < 1e-12);
  CHECK(std::abs(r.final_state()(1) - 0.0) < 1e-12);
  CHECK(std::abs(r.psi.back() - 1.25) < 1e-12);
  CHECK(std::abs(r.final_jac().determinant() - 1.0) < 1e-12);
  CHECK(phase_gradient_check(a, s, 1.0, 64) < 1e-7);
}

TEST_CASE("flow map on a lattice") {
  Lattice lat{0.5, 0.5, 8, 8};
  auto free = make_symbol("free");
  auto tab = flow_map_on_lattice(free, lat, 1.5, 32);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const Point p = lat.node(i);
    CHECK(tab.ok[i]);
    CHECK(std::abs(tab.chi[i][0] - (p[0] + 3.0 * p[1])) < 1e-12);
    CHECK(std::abs(tab.chi[i][1] - p[1]) < 1e-12);
  }
  auto id = flow_map_on_lattice(free, lat, 0.0, 32);
  CHECK(id.lipschitz == doctest::Approx(1.0));
  CHECK(id.inverse_lipschitz == doctest::Approx(1.0));
  auto rot = flow_map_on_lattice(make_symbol("harmonic"), lat, kTwoPi, 2000);
  for (std::size_t i = 0; i < lat.size(); ++i) CHECK(dist(rot.chi[i], lat.node(i)) < 1e-7);
  // per-node failures are recorded and the batch continues
  auto blow = general_symbol([](double, const ZVec& v) { return -std::pow(v(0), 4) / 4.0 + v(1) * v(1) / 2.0; }, 1, false);
  blow.validated = true;
  auto bt = flow_map_on_lattice(blow, Lattice{0.5, kPi, 8, 2}, 3.0, 3000);
  CHECK(std::count(bt.ok.begin(), bt.ok.end(), 0) > 0);
  CHECK(std::count(bt.ok.begin(), bt.ok.end(), 1) > 0);
}

TEST_CASE("phase gradient identity") {
  auto free = make_symbol("free");
  CHECK(phase_gradient_check(free, z(0.3, 1.1), 0.8) < 1e-8);
  CHECK(phase_gradient_check(free, z(0.3, 1.1), 0.0) < 1e-8);
  CHECK(phase_gradient_check(make_symbol("harmonic"), z(1, 1), 1.0) < 1e-4);
  CHECK(phase_gradient_check(make_symbol("anharmonic-bounded"), z(1, 1), 1.0) < 1e-4);
}

TEST_CASE("symbol validation") {
  Box box;
  auto r1 = validate_symbol(make_symbol("free"), 3, box, 6);
  CHECK_FALSE(r1.violation);
  CHECK(r1.orders.empty());
  auto r2 = validate_symbol(make_symbol("anharmonic-bounded"), 2, box, 6);
  CHECK_FALSE(r2.violation);
  CHECK(r2.C == doctest::Approx(1.0).epsilon(1e-4));
  for (double q : r2.max_ratios) CHECK(q <= 1.0 + 1e-6);
  auto bad = general_symbol([](double, const ZVec& v) { return v(1) * v(1) + std::exp(v(0) * v(0)); }, 1, false);
  auto r3 = validate_symbol(bad, 2, box, 6);
  CHECK(r3.violation);
  CHECK_THROWS_AS(validate_symbol(bad, 2, box, 7), Error);
}
