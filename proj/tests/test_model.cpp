#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "starkecho/errors.hpp"
#include "starkecho/model.hpp"
#include "starkecho/protocol.hpp"
#include "starkecho/transport.hpp"

using namespace starkecho;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

StarkGradient on(double volts, int polarity = 1) {
  StarkGradient g;
  g.voltage = volts;
  g.polarity = polarity;
  return g;
}

}  // namespace

TEST_CASE("grid validation") {
  SimGrid g;
  CHECK_NOTHROW(g.validate());
  g.n_z = 1;
  CHECK(code_of([&] { g.validate(); }) == ErrorCode::InvalidGrid);
  g = SimGrid{};
  g.z_max = g.z_min;
  CHECK(code_of([&] { g.validate(); }) == ErrorCode::InvalidGrid);
  g = SimGrid{};
  g.t_step = 0.0;
  CHECK(code_of([&] { g.validate(); }) == ErrorCode::InvalidGrid);
  g = SimGrid{};
  g.c_medium = 10.0;  // dz / c is about 0.002 us
  CHECK(code_of([&] { g.validate(); }) == ErrorCode::StepTooLarge);
  g.c_medium = 0.5;
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("stark shift is linear and antisymmetric") {
  const SimGrid grid;
  const StarkGradient g = on(25.0);
  CHECK(stark_shift_at(g, grid, 2.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(stark_shift_at(g, grid, 4.0) == doctest::Approx(1050.0));
  CHECK(stark_shift_at(g, grid, 0.0) == doctest::Approx(-1050.0));
  CHECK(stark_shift_at(g, grid, 3.0) == doctest::Approx(525.0));
  for (int j = 0; j < grid.n_z; ++j)
    CHECK(node_coordinate(grid, j) == -node_coordinate(grid, grid.n_z - 1 - j));
  CHECK(stark_shift_at(on(25.0, -1), grid, 3.0) == doctest::Approx(-525.0));
  CHECK(stark_shift_at(StarkGradient{}, grid, 3.0) == 0.0);
  CHECK(code_of([&] { stark_shift_at(g, grid, 4.5); }) == ErrorCode::OutOfRange);
}

TEST_CASE("build_medium translates the feature rigidly") {
  SimGrid grid;
  SpectralFeature f;
  const MediumSpec off = build_medium(grid, f, StarkGradient{});
  const double edge = oracle::khz(12.5);
  CHECK(off.density(0.0, 1.0) == 1.0);
  CHECK(off.density(0.99 * edge, 3.0) == 1.0);
  CHECK(off.density(1.01 * edge, 3.0) == 0.0);

  const MediumSpec med = build_medium(grid, f, on(25.0));
  const double face = oracle::khz(1050.0);
  CHECK(med.density(face, 4.0) == 1.0);
  CHECK(med.density(-face, 0.0) == 1.0);
  CHECK(med.density(0.0, 4.0) == 0.0);
  CHECK(med.density(face + 1.01 * edge, 4.0) == 0.0);
}

TEST_CASE("build_medium rejects bad features and narrow lattices") {
  SimGrid grid;
  SpectralFeature f;
  f.width = 0.0;
  CHECK(code_of([&] { build_medium(grid, f, {}); }) == ErrorCode::NonPositiveWidth);
  f.width = 25.0;
  grid.detune_half_width = oracle::khz(500.0);
  CHECK(code_of([&] { build_medium(grid, f, on(25.0)); }) == ErrorCode::GridTooNarrow);
}

TEST_CASE("spectral area is conserved at every node for any gradient") {
  SimGrid grid;
  grid.n_z = 41;
  SpectralFeature f;
  const double reference = build_medium(grid, f, {}).sampled_area(0);
  CHECK(reference == doctest::Approx(oracle::khz(25.0)).epsilon(1e-3));
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> volts(0.5, 30.0);
  for (int trial = 0; trial < 4; ++trial) {
    for (int polarity : {1, -1}) {
      const MediumSpec m = build_medium(grid, f, on(volts(rng), polarity));
      for (int j = 0; j < grid.n_z; ++j)
        CHECK(std::abs(m.sampled_area(j) - reference) <= 1e-10 * reference);
    }
  }
}

TEST_CASE("calibration against the unbroadened feature") {
  const MediumSpec base = build_medium(SimGrid{}, SpectralFeature{}, on(25.0));
  const MediumSpec m = calibrate_unbroadened(base, 0.51);
  MediumSpec off = m;
  off.gradient.polarity = 0;
  CHECK(off.probe_transmission() == doctest::Approx(std::exp(-0.51)).epsilon(1e-9));
  CHECK(std::abs(off.probe_transmission() - 0.60) < 0.003);
  CHECK(m.gradient.polarity == 1);

  const MediumSpec again = calibrate_unbroadened(m, 0.51);
  CHECK(again.coupling == doctest::Approx(m.coupling).epsilon(5e-3));

  const double broad = oracle::broadened_depth(0.51, 25.0, 1050.0 + 0.0);
  CHECK(m.resonant_optical_depth() == doctest::Approx(broad).epsilon(0.02));
  CHECK(1.0 - m.probe_transmission() <= 0.015);

  CHECK(calibrate_unbroadened(base, 0.0).coupling == 0.0);
  CHECK(code_of([&] { calibrate_coupling(base, 0.51); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { calibrate_unbroadened(base, -1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("calibration against the broadened medium") {
  const MediumSpec m = calibrate_broadened(build_medium(SimGrid{}, SpectralFeature{}, on(25.0)), 3.0);
  CHECK(m.resonant_optical_depth() == doctest::Approx(3.0).epsilon(1e-9));
  MediumSpec off = m;
  off.gradient.polarity = 0;
  CHECK(off.resonant_optical_depth() ==
        doctest::Approx(3.0 * 2.0 * 1050.0 / 25.0).epsilon(0.02));
}

TEST_CASE("calibrated depth reproduces the transmitted energy of a narrowband pulse") {
  SimGrid grid;
  grid.n_z = 100;
  grid.t_step = 0.1;
  const MediumSpec m = calibrate_unbroadened(build_medium(grid, SpectralFeature{}, {}), 0.51);
  PulseSpec p;
  p.shape = PulseShape::gaussian;
  p.duration = 100.0;
  p.area = 0.01;
  const FieldTrace tr = run_fid(m, p, BlochMode::linearized, p.support_end());
  const double in = trace_energy(tr.times, tr.boundary_in, 0.0, p.support_end());
  const double out = trace_energy(tr.times, tr.boundary_out, 0.0, p.support_end());
  CHECK(out / in == doctest::Approx(std::exp(-0.51)).epsilon(5e-3));
}

TEST_CASE("pulse shapes") {
  PulseSpec p;
  p.duration = 2.0;
  p.area = 0.3;
  for (PulseShape s : {PulseShape::square, PulseShape::gaussian, PulseShape::ramp}) {
    p.shape = s;
    CAPTURE(static_cast<int>(s));
    const double area = oracle::simpson([&](double t) { return p.envelope(t).real(); }, 0.0,
                                        p.support_end(), 200000);
    CHECK(area == doctest::Approx(0.3).epsilon(1e-5));
  }
  p.shape = PulseShape::square;
  CHECK(p.envelope(-0.1) == std::complex<double>(0.0));
  CHECK(p.envelope(1.0).real() == doctest::Approx(0.15));
  CHECK(p.reference_time() == 1.0);
  p.carrier_detuning = 10.0;
  CHECK(std::abs(p.envelope(1.0)) == doctest::Approx(0.15));
  p.duration = -1.0;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
}
