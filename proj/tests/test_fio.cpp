#include "doctest.h"

#include <cmath>
#include <random>

#include "gwpk/fio.hpp"
#include "gwpk/gabor_matrix.hpp"

using namespace gwpk;

namespace {

const GridSpec kGrid{512, 24.0, 1};

CanonicalMap flow_of(const std::string& sym, double t) { return canonical_map(make_symbol(sym), 0.0, t); }

// Best c with c * a ~ b, then the relative error of c * a against b.
double aligned_error(const SampledState& a, const SampledState& b, cplx* c_out = nullptr) {
  const cplx c = inner(b, a) / inner(a, a);
  if (c_out) *c_out = c;
  SampledState d(a.grid);
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = c * a.values[i] - b.values[i];
  return l2_norm(d) / l2_norm(b);
}

std::vector<SampledState> probes(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-3.0, 3.0), amp(-1.0, 1.0);
  std::vector<SampledState> out;
  for (int p = 0; p < count; ++p) {
    SampledState s(kGrid);
    for (int m = 0; m < 4; ++m) {
      const auto g = normalized_gaussian(kGrid, pos(rng), pos(rng), 1.0);
      const cplx c(amp(rng), amp(rng));
      for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] += c * g.values[i];
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("caustic_check on lattice Jacobians") {
  const Lattice lat = make_lattice(kGrid, 0.5, 6, 16, 16);
  CHECK(caustic_check(lattice_flow(make_symbol("free"), lat, 0.0, 1.3)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(caustic_check(lattice_flow(make_symbol("harmonic"), lat, 0.0, 0.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(caustic_check(lattice_flow(make_symbol("harmonic"), lat, 0.0, kPi / 4)) ==
        doctest::Approx(std::cos(kPi / 4)).epsilon(1e-10));
  CHECK(caustic_check(lattice_flow(make_symbol("harmonic"), lat, 0.0, kPi / 2)) < 1e-3);
}

TEST_CASE("phase of the identity and of the free flow") {
  const PhaseFunction id = construct_phase(identity_map(), kGrid);
  CHECK(id.neta == kGrid.n);
  double err = 0.0;
  for (int i = 0; i < id.nx(); ++i)
    for (int k = 0; k < id.neta; ++k) {
      const double ref = id.x(i) * id.eta(k);
      err = std::max(err, std::abs(id.phi[id.index(i, k)] - ref) / (1.0 + std::abs(ref)));
    }
  CHECK(err < 1e-10);
  CHECK(id.phi[id.index(kGrid.n / 2, kGrid.n / 2)] == 0.0);

  const double t = 0.7;
  const PhaseFunction fr = construct_phase(flow_of("free", t), kGrid);
  double perr = 0.0, yerr = 0.0, xerr = 0.0;
  for (int i = 0; i < fr.nx(); ++i)
    for (int k = 0; k < fr.neta; ++k) {
      const double x = fr.x(i), e = fr.eta(k);
      const std::size_t q = fr.index(i, k);
      const double ref = x * e - t * e * e;
      perr = std::max(perr, std::abs(fr.phi[q] - ref) / (1.0 + std::abs(ref)));
      yerr = std::max(yerr, std::abs(fr.y[q] - (x - 2 * t * e)));
      xerr = std::max(xerr, std::abs(fr.xi[q] - e));
    }
  CHECK(perr < 1e-10);
  CHECK(yerr < 1e-9);
  CHECK(xerr < 1e-12);
  CHECK(fr.phi[fr.index(kGrid.n / 2, kGrid.n / 2 - fr.k_lo)] == 0.0);
  CHECK(fr.closedness < 1e-6);
  CHECK(fr.min_det == doctest::Approx(1.0));
}

TEST_CASE("quadratic flows give quadratic phases") {
  for (auto [sym, t] : {std::pair{"harmonic", kPi / 4}, std::pair{"shear", 0.6}, std::pair{"harmonic", 2.0}}) {
    CAPTURE(sym);
    CAPTURE(t);
    const PhaseFunction P = construct_phase(flow_of(sym, t), kGrid);
    CHECK(P.closedness < 1e-6);
    const double hx = kGrid.dx(), he = kGrid.dxi();
    double third = 0.0, hess = 0.0, gx = 0.0, ge = 0.0;
    // sampled away from the box edges where the values are largest
    for (int i = 180; i < 330; i += 7)
      for (int k = 180; k < 330; k += 7) {
        auto f = [&](int a, int b) { return P.phi[P.index(a, b)]; };
        third = std::max(third, std::abs(f(i + 3, k) - 3 * f(i + 2, k) + 3 * f(i + 1, k) - f(i, k)));
        third = std::max(third, std::abs(f(i, k + 3) - 3 * f(i, k + 2) + 3 * f(i, k + 1) - f(i, k)));
        third = std::max(third, std::abs(f(i + 1, k + 1) - f(i, k + 1) - f(i + 1, k) + f(i, k) -
                                         (f(i + 2, k + 1) - f(i + 1, k + 1) - f(i + 2, k) + f(i + 1, k))));
        const double mixed = (f(i + 1, k + 1) - f(i, k + 1) - f(i + 1, k) + f(i, k)) / (hx * he);
        hess = std::max(hess, std::abs(mixed - P.mixed[P.index(i, k)]));
        // gradients of the sampled phase against the recorded fields
        gx = std::max(gx, std::abs((f(i + 1, k) - f(i - 1, k)) / (2 * hx) - P.xi[P.index(i, k)]));
        ge = std::max(ge, std::abs((f(i, k + 1) - f(i, k - 1)) / (2 * he) - P.y[P.index(i, k)]));
      }
    CHECK(third < 1e-6);
    CHECK(hess < 1e-8);
    CHECK(gx < 1e-6);
    CHECK(ge < 1e-6);
  }
}

TEST_CASE("construct_phase errors") {
  CHECK_THROWS_WITH_AS(construct_phase(flow_of("harmonic", kPi / 2), kGrid), doctest::Contains("delta"), Error);
  try {
    construct_phase(flow_of("harmonic", kPi / 2), kGrid);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::caustic);
  }
  // area-doubling map: the tautological form is not closed
  CanonicalMap bad;
  bad.eval = [](const Point& p) {
    CanonicalPoint c;
    c.chi = {2 * p[0], p[1]};
    c.jac << 2, 0, 0, 1;
    return c;
  };
  try {
    construct_phase(bad, kGrid);
    FAIL("expected closedness failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::numerical);
  }
  PhaseOptions o;
  o.delta = 0.0;
  CHECK_THROWS_AS(construct_phase(identity_map(), kGrid, o), Error);
}

TEST_CASE("nonlinear flow phase") {
  const GridSpec g{128, 8.0, 1};
  PhaseOptions o;
  o.eta_max = 3.0;
  const PhaseFunction P = construct_phase(flow_of("anharmonic-bounded", 0.3), g, o);
  CHECK(P.neta < g.n);
  CHECK(P.closedness < 1e-6);
  CHECK(P.phi[P.index(g.n / 2, g.n / 2 - P.k_lo)] == 0.0);
  // the recorded gradient fields reproduce the flow
  const CanonicalMap chi = flow_of("anharmonic-bounded", 0.3);
  double err = 0.0;
  for (int i = 10; i < g.n - 10; i += 9)
    for (int k = 0; k < P.neta; k += 5) {
      const std::size_t q = P.index(i, k);
      const Point img = chi.eval({P.y[q], P.eta(k)}).chi;
      err = std::max({err, std::abs(img[0] - P.x(i)), std::abs(img[1] - P.xi[q])});
    }
  CHECK(err < 1e-9);
  // second-order consistency of the integrated phase with its gradients
  double gx = 0.0;
  for (int i = 20; i < g.n - 20; i += 3)
    for (int k = 2; k < P.neta - 2; ++k)
      gx = std::max(gx, std::abs((P.phi[P.index(i + 1, k)] - P.phi[P.index(i - 1, k)]) / (2 * g.dx()) -
                                 P.xi[P.index(i, k)]));
  CHECK(gx < 1e-2);
}

TEST_CASE("fio_apply reproduces known operators") {
  const auto u0 = normalized_gaussian(kGrid, 1.0, -0.5, 1.2);
  const PhaseFunction id = construct_phase(identity_map(), kGrid);
  CHECK(relative_l2(fio_apply(id, {}, u0), u0) < 1e-10);

  const double t = 0.8;
  const PhaseFunction fr = construct_phase(flow_of("free", t), kGrid);
  const auto ref = evolve(PropagatorHandle{make_symbol("free"), Method::strang_split, 0.0, t, 0.0}, u0);
  CHECK(relative_l2(fio_apply(fr, {}, u0), ref) < 1e-7);
  CHECK(relative_l2(fio_apply(fr, {cplx(1.0)}, u0), ref) < 1e-7);

  const PhaseFunction ho = construct_phase(flow_of("harmonic", kPi / 4), kGrid);
  const auto g = gaussian_window(kGrid);
  const auto lat = make_lattice(kGrid, 0.5, 6, 64, 64);
  const auto mref = metaplectic_apply(make_symbol("harmonic"), kPi / 4, u0, g, lat);
  cplx c;
  CHECK(aligned_error(fio_apply(ho, {}, u0), mref, &c) < 1e-4);
  // the fitted constant carries |Phi_x eta|^{1/2} = 2^{1/4}
  CHECK(std::abs(c) == doctest::Approx(std::pow(2.0, 0.25)).epsilon(1e-4));
  CHECK(aligned_error(fio_apply(ho, unitary_amplitude(ho), u0), mref, &c) < 1e-4);
  CHECK(std::abs(c) == doctest::Approx(1.0).epsilon(1e-4));

  // at t = 1 the eta sum reaches periodic images of f for edge outputs
  const PhaseFunction h1 = construct_phase(flow_of("harmonic", 1.0), kGrid);
  const auto ref1 = evolve(PropagatorHandle{make_symbol("harmonic"), Method::metaplectic_exact, 0.0, 1.0, 0.0}, u0);
  CHECK(aligned_error(fio_apply(h1, {}, u0), ref1, &c) < 1e-8);
  CHECK(std::abs(c) == doctest::Approx(1.0 / std::sqrt(std::cos(1.0))).epsilon(1e-6));
}

TEST_CASE("fio_apply preconditions") {
  PhaseOptions o;
  o.eta_max = 3.0;
  const PhaseFunction narrow = construct_phase(identity_map(), kGrid, o);
  double esc = -1.0;
  const auto wide = normalized_gaussian(kGrid, 0.0, 0.0, 3.0);
  CHECK(relative_l2(fio_apply(narrow, {}, wide, &esc), wide) < 1e-10);
  CHECK(esc < 1e-15);
  CHECK_THROWS_WITH_AS(fio_apply(narrow, {}, normalized_gaussian(kGrid, 0.0, 5.0, 1.0)), doctest::Contains("band"),
                       Error);
  const PhaseFunction id = construct_phase(identity_map(), kGrid);
  CHECK_THROWS_AS(fio_apply(id, {}, normalized_gaussian(kGrid, 22.0, 0.0, 1.0)), Error);
  CHECK_THROWS_AS(fio_apply(id, CVec(3, 1.0), normalized_gaussian(kGrid)), Error);
  CHECK_THROWS_AS(fio_apply(id, {}, normalized_gaussian(GridSpec{256, 24.0, 1})), Error);
}

TEST_CASE("unit amplitude isometry on probes") {
  const auto ps = probes(5, 11);
  const PhaseFunction fr = construct_phase(flow_of("free", 1.0), kGrid);
  const PhaseFunction ho = construct_phase(flow_of("harmonic", kPi / 4), kGrid);
  const CVec amp = unitary_amplitude(ho);
  for (const auto& p : ps) {
    const double n0 = l2_norm(p);
    CHECK(l2_norm(fio_apply(fr, {}, p)) / n0 == doctest::Approx(1.0).epsilon(0.03));
    CHECK(l2_norm(fio_apply(ho, amp, p)) / n0 == doctest::Approx(1.0).epsilon(0.03));
    // unit amplitude on a rotation scales every input by the same factor
    CHECK(l2_norm(fio_apply(ho, {}, p)) / n0 == doctest::Approx(std::pow(2.0, -0.25)).epsilon(1e-6));
  }
}

TEST_CASE("phase and flow are comparable") {
  const PhaseFunction id = construct_phase(identity_map(), kGrid);
  const Comparability ci = phase_flow_comparability(id, identity_map());
  CHECK(ci.samples == 400);
  CHECK(ci.c1 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ci.c2 == doctest::Approx(1.0).epsilon(1e-9));
  for (auto [sym, t] : {std::pair{"free", 1.0}, std::pair{"harmonic", kPi / 4}, std::pair{"shear", 0.5}}) {
    CAPTURE(sym);
    const CanonicalMap chi = flow_of(sym, t);
    const Comparability c = phase_flow_comparability(construct_phase(chi, kGrid), chi, 5.0, 300, 7);
    CHECK(c.samples == 300);
    CHECK(c.c1 > 0.0);
    CHECK(std::isfinite(c.c2));
    CHECK(c.c2 / c.c1 <= 10.0);
  }
  CHECK_THROWS_AS(phase_flow_comparability(id, identity_map(), 5.0, 100), Error);
}

TEST_CASE("Gabor matrix of the constructed operator is sparse") {
  const auto g = gaussian_window(kGrid);
  const Lattice lat = make_lattice(kGrid, 0.5, 6, 24, 24);
  for (auto [sym, t] : {std::pair{"free", 0.5}, std::pair{"harmonic", kPi / 4}, std::pair{"shear", 0.3}}) {
    CAPTURE(sym);
    const SymbolModel a = make_symbol(sym);
    const PhaseFunction P = construct_phase(canonical_map(a, 0.0, t), kGrid);
    const GaborMatrix M = assemble_operator([&](const SampledState& f) { return fio_apply(P, {}, f); },
                                            lattice_flow(a, lat, 0.0, t), g, lat);
    CHECK(M.valid_columns() == lat.size());
    const DecayFit fit = fit_sparsity(M);
    CHECK(fit.eps > 0.05);
  }
}

TEST_CASE("phase persistence layout") {
  PhaseOptions o;
  o.eta_max = 1.0;
  const PhaseFunction P = construct_phase(flow_of("free", 0.5), kGrid, o);
  const Array a = to_array(P);
  REQUIRE(a.dims.size() == 3);
  CHECK(a.dims[0] == 4);
  CHECK(a.dims[1] == static_cast<std::uint64_t>(kGrid.n));
  CHECK(a.dims[2] == static_cast<std::uint64_t>(P.neta));
  CHECK(a.real[P.index(3, 2)] == P.phi[P.index(3, 2)]);
  CHECK(a.real[P.phi.size() * 3 + P.index(5, 1)] == P.mixed[P.index(5, 1)]);
}
