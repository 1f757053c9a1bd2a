#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("starkecho_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome run(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd =
      env + " \"" STARKECHO_CLI "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

}  // namespace

TEST_CASE("echo writes a trace, metrics and a manifest") {
  const fs::path dir = scratch("echo");
  const Outcome o = run("echo --out-dir " + (dir / "out").string(), dir);
  REQUIRE(o.code == 0);
  const auto metrics = nlohmann::json::parse(slurp(dir / "out" / "echo_metrics.json"));
  CHECK(metrics.size() == 5);
  CHECK(metrics["peak_time_us"].get<double>() == doctest::Approx(20.0).epsilon(0.002));
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["command"] == "echo");
  CHECK(manifest["outputs"] == nlohmann::json::array({"echo_trace.csv", "echo_metrics.json"}));
  CHECK(manifest["solver_resolution"]["n_z"] == 200);
  CHECK(manifest["config_hash"].get<std::string>().size() == 64);
  CHECK(slurp(dir / "out" / "echo_trace.csv").find("t_us,in_re,in_im,out_re,out_im,out_abs") !=
        std::string::npos);
}

TEST_CASE("reruns are byte-identical apart from wall time") {
  const fs::path dir = scratch("rerun");
  REQUIRE(run("fid --out-dir " + (dir / "a").string(), dir).code == 0);
  REQUIRE(run("fid --out-dir " + (dir / "b").string(), dir).code == 0);
  CHECK(slurp(dir / "a" / "fid.csv") == slurp(dir / "b" / "fid.csv"));
  auto ma = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  auto mb = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
  ma.erase("wall_time");
  mb.erase("wall_time");
  CHECK(ma == mb);
}

TEST_CASE("the output directory falls back to the environment") {
  const fs::path dir = scratch("env");
  REQUIRE(run("calibrate", dir, "STARKECHO_OUT_DIR=\"" + (dir / "env").string() + "\"").code == 0);
  const auto cal = nlohmann::json::parse(slurp(dir / "env" / "calibration.json"));
  CHECK(cal["transmission_gradient_off"].get<double>() == doctest::Approx(0.6005).epsilon(1e-3));
  CHECK(cal["broadened_center_span_khz"].get<double>() == doctest::Approx(2100.0));
}

TEST_CASE("configuration errors exit with 2 and name the key") {
  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "bad.ini");
    f << "[feature]\nshape = top_hat\npeak_optical_depth = 0.5\n";
  }
  Outcome o = run("echo --config " + (dir / "bad.ini").string() + " --out-dir " +
                      (dir / "out").string(),
                  dir);
  CHECK(o.code == 2);
  CHECK(o.err.find("feature.width") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "manifest.json"));

  o = run("echo --mode quantum --out-dir " + (dir / "out").string(), dir);
  CHECK(o.code == 2);
  CHECK(o.err.find("protocol.mode") != std::string::npos);

  o = run("teleport", dir);
  CHECK(o.code == 2);
  o = run("echo --config " + (dir / "missing.ini").string(), dir);
  CHECK(o.code == 2);
}

TEST_CASE("solver errors exit with 1") {
  const fs::path dir = scratch("solver");
  const Outcome o = run("echo --tau-us 0.1 --out-dir " + (dir / "out").string(), dir);
  CHECK(o.code == 1);
  CHECK(o.err.find("TauTooSmall") != std::string::npos);
}

TEST_CASE("delay sweep writes a table with the configuration hash") {
  const fs::path dir = scratch("sweep");
  REQUIRE(run("sweep-delay --delays 3:9:3 --out-dir " + (dir / "out").string(), dir).code == 0);
  const std::string csv = slurp(dir / "out" / "sweep_delay.csv");
  CHECK(csv.rfind("# config_hash=", 0) == 0);
  CHECK(csv.find("tau,2tau,peak_time_us,echo_energy,echo_intensity_at_2tau,fid_intensity_at_2tau,"
                 "ratio,error") != std::string::npos);
  const auto tbp = nlohmann::json::parse(slurp(dir / "out" / "sweep_delay_tbp.json"));
  CHECK(tbp.contains("tbp"));
}
