#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "starkecho/config.hpp"
#include "starkecho/io.hpp"

using namespace starkecho;

namespace {

bool mentions(const ConfigResult& r, const std::string& key) {
  for (const auto& e : r.errors)
    if (e.rfind(key + ":", 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("defaults describe the reference experiment") {
  const ConfigResult r = validate_config("");
  REQUIRE(r.ok());
  const RunConfig& c = *r.config;
  CHECK(c.stark_half_width_khz() == doctest::Approx(1050.0));
  CHECK(c.medium.grid.n_detune == 7681);
  CHECK(c.medium.gradient.polarity == 1);
  MediumSpec off = c.medium;
  off.gradient.polarity = 0;
  CHECK(off.probe_transmission() == doctest::Approx(std::exp(-0.51)).epsilon(1e-9));
  CHECK(c.protocol.areas.size() == 20);
  CHECK(c.protocol.areas.back() == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("a present section must give its leading keys") {
  const ConfigResult r = validate_config("[feature]\nshape = top_hat\npeak_optical_depth = 0.5\n");
  CHECK_FALSE(r.ok());
  CHECK(mentions(r, "feature.width"));
}

TEST_CASE("unknown sections and keys are rejected") {
  ConfigResult r = validate_config("[grid]\nz_min = 0\nz_max = 4\nn_z = 100\nt_step = 0.02\nnz = 3\n");
  CHECK(mentions(r, "grid.nz"));
  r = validate_config("[laser]\npower = 3\n");
  CHECK_FALSE(r.ok());
  CHECK(r.errors.front().find("laser") != std::string::npos);
}

TEST_CASE("every violation is reported with its key") {
  const ConfigResult r = validate_config(
      "[pulse]\nshape = triangle\nduration = -1\narea = x\n"
      "[protocol]\nmode = quantum\ntau = 0\n");
  CHECK_FALSE(r.ok());
  CHECK(mentions(r, "pulse.shape"));
  CHECK(mentions(r, "pulse.duration"));
  CHECK(mentions(r, "pulse.area"));
  CHECK(mentions(r, "protocol.mode"));
  CHECK(mentions(r, "protocol.tau"));
}

TEST_CASE("a time step beyond the characteristic limit suggests a maximum") {
  const ConfigResult r = validate_config(
      "[grid]\nz_min = 0\nz_max = 4\nn_z = 201\nt_step = 0.02\nc_medium = 10\n");
  REQUIRE_FALSE(r.ok());
  REQUIRE(mentions(r, "grid.t_step"));
  CHECK(r.errors.front().find("suggested maximum 0.002") != std::string::npos);
}

TEST_CASE("coupling modes") {
  ConfigResult r = validate_config("[coupling]\ncalibration = broadened\noptical_depth = 2\n");
  REQUIRE(r.ok());
  CHECK(r.config->medium.resonant_optical_depth() == doctest::Approx(2.0).epsilon(1e-9));
  r = validate_config("[coupling]\ncalibration = fixed\nvalue = 0.04\n");
  REQUIRE(r.ok());
  CHECK(r.config->medium.coupling == 0.04);
  r = validate_config("[coupling]\ncalibration = broadened\n");
  CHECK(mentions(r, "coupling.optical_depth"));
}

TEST_CASE("overrides replace file values") {
  const std::string text = "[gradient]\nbroadening_rate = 42\nvoltage = 10\n";
  const ConfigResult a = validate_config(text);
  const ConfigResult b = validate_config(text, {{"gradient.voltage", "20"}});
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(a.config->stark_half_width_khz() == doctest::Approx(420.0));
  CHECK(b.config->stark_half_width_khz() == doctest::Approx(840.0));
  CHECK(mentions(validate_config(text, {{"gradient.voltage", "abc"}}), "gradient.voltage"));
}

TEST_CASE("configuration hash") {
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto a = validate_config("[pulse]\nshape = square\nduration = 1\narea = 0.1\n");
  const auto b = validate_config("[pulse]\nshape = square\nduration = 1.0\narea = 0.10\n");
  const auto c = validate_config("[pulse]\nshape = square\nduration = 1\narea = 0.2\n");
  CHECK(a.config->hash() == b.config->hash());
  CHECK(a.config->hash() != c.config->hash());
  CHECK(a.config->hash().size() == 64);
}

TEST_CASE("ranges and lists") {
  const auto v = parse_range("1:3:5");
  CHECK(v == std::vector<double>{1.0, 1.5, 2.0, 2.5, 3.0});
  CHECK_THROWS_AS(parse_range("1:3"), Error);
  CHECK_THROWS_AS(parse_range("1:3:0"), Error);
  const auto r = validate_config("", {{"protocol.delays", "2, 4, 8"}});
  REQUIRE(r.ok());
  CHECK(r.config->protocol.delays == std::vector<double>{2.0, 4.0, 8.0});
}

TEST_CASE("trace CSV layout") {
  FieldTrace t;
  t.times = {0.0, 0.5};
  t.boundary_in = {{1.0, 0.0}, {0.5, 0.25}};
  t.boundary_out = {{0.0, 0.0}, {3.0, 4.0}};
  t.sample_step = 0.5;
  std::ostringstream os;
  write_trace_csv(os, t, {{"config_hash", "abc"}});
  CHECK(os.str() ==
        "# config_hash=abc\n# direction=forward\n# sample_step_us=0.5\n"
        "t_us,in_re,in_im,out_re,out_im,out_abs\n0,1,0,0,0,0\n0.5,0.5,0.25,3,4,5\n");
}

TEST_CASE("table CSV and metrics JSON") {
  Table t;
  t.columns = {"tau", "echo_energy"};
  t.rows = {{3.0, 0.25}, {6.0, NAN}};
  t.errors = {"", "TauTooSmall: bad, really"};
  std::ostringstream os;
  write_table_csv(os, t, "h1");
  CHECK(os.str() == "# config_hash=h1\ntau,echo_energy,error\n3,0.25,\n6,nan,\"TauTooSmall: bad, really\"\n");

  EchoMetrics m;
  m.peak_time_us = 20.0;
  const auto j = nlohmann::json::parse(metrics_json(m));
  CHECK(j.size() == 5);
  CHECK(j["tbp"].is_null());
  m.tbp = 2.5;
  CHECK(nlohmann::json::parse(metrics_json(m))["tbp"] == 2.5);
}

TEST_CASE("numbers round-trip through text") {
  for (double v : {0.1, 1.0 / 3.0, 6.02e23, -2.5e-300})
    CHECK(std::stod(format_number(v)) == v);
}
