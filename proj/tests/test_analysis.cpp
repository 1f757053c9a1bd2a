#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "starkecho/analysis.hpp"
#include "starkecho/io.hpp"

using namespace starkecho;
using cd = std::complex<double>;

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

MediumSpec medium(double volts, double depth = 0.51) {
  StarkGradient s;
  s.voltage = volts;
  s.polarity = volts != 0.0 ? 1 : 0;
  return calibrate_unbroadened(build_medium(SimGrid{}, SpectralFeature{}, s), depth);
}

// Uniform absorber much wider than the pulse spectrum.
MediumSpec broadband(double depth) {
  SimGrid g;
  g.n_z = 200;
  g.t_step = 0.01;
  g.n_detune = 2001;
  g.detune_half_width = oracle::khz(2500.0);
  SpectralFeature f;
  f.width = 4000.0;
  return calibrate_unbroadened(build_medium(g, f, {}), depth);
}

PulseSpec pulse(PulseShape shape = PulseShape::square, double duration = 1.0, double area = 0.1) {
  PulseSpec p;
  p.shape = shape;
  p.duration = duration;
  p.area = area;
  return p;
}

}  // namespace

TEST_CASE("closed-form absorption and coherence") {
  const PulseSpec p = pulse(PulseShape::gaussian);
  const DriveFunction in = [p](double t) { return p.envelope(t); };
  CHECK(analytic_absorption(0.3, in, 0.0, 2.0) == p.envelope(2.0));
  CHECK(analytic_absorption(0.25, in, 4.0, 2.0) == p.envelope(2.0) * std::exp(-1.0));
  CHECK(analytic_absorption(0.25, in, 4.0, 2.0, 2.0) == p.envelope(0.0) * std::exp(-1.0));
  // on resonance the coherence is (i/2) times the running area
  const cd a = analytic_coherence(0.0, in, 0.0, 0.0, p.support_end());
  CHECK(a.imag() == doctest::Approx(0.05).epsilon(1e-5));
  const cd b = analytic_coherence(0.0, in, 0.0, 1.3, 3.0);
  CHECK(std::abs(b - oracle::alpha_driven(in, 1.3, 3.0)) < 1e-9);
}

TEST_CASE("broadband absorption matches exp(-eta z) at every probe") {
  const PulseSpec p = pulse(PulseShape::gaussian, 2.0, 0.1);
  for (double d : {0.5, 3.0}) {
    CAPTURE(d);
    const MediumSpec m = broadband(d);
    CHECK(amplitude_absorption(m) == doctest::Approx(d / 8.0).epsilon(1e-9));
    std::vector<std::pair<double, double>> probes;
    for (int k = 1; k <= 5; ++k) probes.emplace_back(0.8 * k, p.reference_time());
    const OracleResult r = absorption_oracle(m, p, probes);
    CHECK(r.simulated_field.size() == 5);
    CHECK(r.max_rel_error < 0.01);
  }
}

TEST_CASE("discrete atoms: a single atom radiates a pure tone") {
  SimGrid g;
  g.n_detune = 1;
  SpectralFeature f;
  f.center = 6.0;
  f.width = 1e-6;
  const MediumSpec m = calibrate_unbroadened(build_medium(g, f, {}), 0.05);
  const PulseSpec p = pulse();
  const FieldTrace tr = brute_force_echo(1, m, fid_schedule(p, BlochMode::linearized, 30.0));
  const std::size_t a = 200, b = 1200;
  CHECK(std::abs(tr.boundary_out[b]) == doctest::Approx(std::abs(tr.boundary_out[a])).epsilon(1e-6));
  const cd rot = tr.boundary_out[b] / tr.boundary_out[a];
  CHECK(std::abs(rot - std::exp(cd(0, -oracle::khz(6.0) * (b - a) * 0.02))) < 1e-6);
}

TEST_CASE("discrete atoms: preconditions") {
  const PulseSpec p = pulse();
  const auto fid = fid_schedule(p, BlochMode::linearized, 30.0);
  CHECK(code_of([&] { brute_force_echo(100, medium(0.0, 0.51), fid); }) == ErrorCode::TooThick);
  CHECK(code_of([&] { brute_force_echo(0, medium(0.0, 0.05), fid); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { brute_force_echo(2001, medium(0.0, 0.05), fid); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] {
          brute_force_echo(10, medium(25.0, 0.05), backward_crib_schedule(p, 5.0, BlochMode::linearized));
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("discrete atoms reproduce the thin-medium echo") {
  const MediumSpec m = medium(25.0, 0.05);
  const PulseSpec p = pulse();
  const auto s = forward_echo_schedule(p, 5.0, BlochMode::linearized);
  const FieldTrace bf = brute_force_echo(500, m, s);
  const FieldTrace main = execute_schedule(m, s).trace;
  const EchoMetrics mb = echo_metrics(bf, p, p.reference_time() + 10.0);
  const EchoMetrics mm = echo_metrics(main, p, p.reference_time() + 10.0);
  CHECK(std::abs(mb.peak_time_us - 10.0) <= 0.04);
  CHECK(std::sqrt(mb.echo_energy / mm.echo_energy) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("sweep specification validation") {
  SweepSpec s;
  s.medium = medium(25.0);
  s.values = {3.0, 6.0};
  CHECK(code_of([&] { run_sweep(s); }) == ErrorCode::InvalidArgument);
  s.outputs = {"echo_energy", "colour"};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidArgument);
  s.outputs = {"echo_energy"};
  s.values = {6.0, 3.0, 9.0};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidArgument);
  s.values = {};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidArgument);
  s.values = {3.0, NAN};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("delay sweep columns, per-row errors and determinism") {
  SweepSpec s;
  s.medium = medium(25.0);
  s.pulse = pulse();
  s.variable = SweepVariable::tau;
  s.values = {0.2, 3.0, 6.0};
  s.outputs = {"peak_time_us", "echo_energy", "fid_intensity_at_2tau", "ratio"};
  const Table t = run_sweep(s);
  CHECK(t.columns == std::vector<std::string>{"tau", "2tau", "peak_time_us", "echo_energy",
                                              "fid_intensity_at_2tau", "ratio"});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.errors[0].find("TauTooSmall") != std::string::npos);
  CHECK(std::isnan(t.rows[0][3]));
  CHECK(t.errors[1].empty());
  CHECK(t.column("2tau")[2] == 12.0);
  CHECK(t.column("peak_time_us")[2] == doctest::Approx(12.0).epsilon(0.004));
  CHECK(code_of([&] { t.column("nope"); }) == ErrorCode::InvalidArgument);

  std::ostringstream a, b;
  write_table_csv(a, t, "h");
  write_table_csv(b, run_sweep(s), "h");
  CHECK(a.str() == b.str());
}

TEST_CASE("area sweep in full Bloch mode saturates") {
  SweepSpec s;
  s.medium = medium(25.0);
  s.pulse = pulse(PulseShape::square, 1.8);
  s.variable = SweepVariable::input_area;
  s.mode = BlochMode::full_bloch;
  s.values = {0.05, std::numbers::pi / 2};
  s.outputs = {"input_energy", "echo_energy"};
  const Table t = run_sweep(s);
  const auto in = t.column("input_energy"), echo = t.column("echo_energy");
  CHECK(in[1] / in[0] == doctest::Approx(std::pow(std::numbers::pi / 2 / 0.05, 2)).epsilon(1e-6));
  CHECK(echo[1] / in[1] < 0.8 * echo[0] / in[0]);
}

TEST_CASE("optical depth sweep recalibrates the coupling") {
  SweepSpec s;
  s.medium = medium(25.0);
  s.pulse = pulse();
  s.variable = SweepVariable::optical_depth;
  s.values = {0.1, 0.2};
  s.outputs = {"echo_energy"};
  const Table t = run_sweep(s);
  const auto e = t.column("echo_energy");
  CHECK(e[1] > e[0]);
  CHECK(std::string(to_string(SweepVariable::optical_depth)) == t.columns[0]);
}
