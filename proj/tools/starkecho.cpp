// starkecho - command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 1 solver error.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "starkecho/analysis.hpp"
#include "starkecho/config.hpp"
#include "starkecho/errors.hpp"
#include "starkecho/io.hpp"
#include "starkecho/protocol.hpp"
#include "starkecho/units.hpp"

namespace fs = std::filesystem;
using namespace starkecho;

namespace {

struct Options {
  std::string config_path;
  std::optional<double> voltage;
  std::optional<double> tau;
  std::string mode;
  std::string areas;
  std::string delays;
  std::string out_dir;
};

struct ConfigFailure {
  std::vector<std::string> errors;
};

RunConfig load_config(const Options& opt) {
  std::string text;
  if (!opt.config_path.empty()) {
    std::ifstream f(opt.config_path, std::ios::binary);
    if (!f) throw ConfigFailure{{"--config: cannot read '" + opt.config_path + "'"}};
    std::ostringstream ss;
    ss << f.rdbuf();
    text = ss.str();
  }
  std::map<std::string, std::string> overrides;
  if (opt.voltage) overrides["gradient.voltage"] = format_number(*opt.voltage);
  if (opt.tau) overrides["protocol.tau"] = format_number(*opt.tau);
  if (!opt.mode.empty()) overrides["protocol.mode"] = opt.mode;
  if (!opt.areas.empty()) overrides["protocol.areas"] = opt.areas;
  if (!opt.delays.empty()) overrides["protocol.delays"] = opt.delays;
  ConfigResult r = validate_config(text, overrides);
  if (!r.ok()) throw ConfigFailure{r.errors};
  return *r.config;
}

fs::path output_dir(const Options& opt) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (const char* env = std::getenv("STARKECHO_OUT_DIR"); env && *env) return env;
  return ".";
}

class Run {
 public:
  Run(std::string command, const RunConfig& cfg, fs::path dir)
      : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.config_hash = cfg.hash();
    manifest_.n_z = cfg.medium.grid.n_z;
    manifest_.n_detune = cfg.medium.grid.n_detune;
    manifest_.t_step = cfg.medium.grid.t_step;
    manifest_.resolved_config = cfg.resolved_text();
    fs::create_directories(dir_);
  }

  Metadata meta() const {
    return {{"command", manifest_.command}, {"config_hash", manifest_.config_hash}};
  }

  void write(const std::string& name, const std::string& text) {
    write_text_file(dir_ / name, text);
    manifest_.outputs.push_back(name);
  }

  void finish() {
    manifest_.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text_file(dir_ / "manifest.json", manifest_json(manifest_));
  }

 private:
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
};

std::string trace_text(const FieldTrace& trace, const Metadata& meta) {
  std::ostringstream os;
  write_trace_csv(os, trace, meta);
  return os.str();
}

void cmd_fid(Run& run, const RunConfig& cfg) {
  const FieldTrace trace = run_fid(cfg.medium, cfg.pulse, cfg.protocol.mode,
                                   cfg.pulse.support_end() + cfg.protocol.fid_record);
  run.write("fid.csv", trace_text(trace, run.meta()));
}

void cmd_broaden(Run& run, const RunConfig& cfg) {
  MediumSpec off = cfg.medium;
  off.gradient.polarity = 0;
  const double span = std::abs(cfg.medium.gradient.half_shift()) +
                      units::rad_per_us_to_khz(cfg.medium.feature.half_extent());
  const double reach = 1.2 * span + cfg.medium.feature.width;
  constexpr int kPoints = 801;
  std::ostringstream os;
  for (const auto& [k, v] : run.meta()) os << "# " << k << "=" << v << "\n";
  os << "detuning_khz,transmission_gradient_off,transmission_gradient_on\n";
  for (int i = 0; i < kPoints; ++i) {
    const double d = cfg.medium.feature.center - reach + 2.0 * reach * i / (kPoints - 1);
    os << format_number(d) << ',' << format_number(off.probe_transmission(d)) << ','
       << format_number(cfg.medium.probe_transmission(d)) << "\n";
  }
  run.write("broaden.csv", os.str());
}

void cmd_echo(Run& run, const RunConfig& cfg) {
  const auto [trace, metrics] = run_forward_echo(cfg.medium, cfg.pulse, cfg.protocol.tau,
                                                 cfg.protocol.mode, cfg.protocol.flip_ramp);
  run.write("echo_trace.csv", trace_text(trace, run.meta()));
  run.write("echo_metrics.json", metrics_json(metrics));
}

void cmd_crib(Run& run, const RunConfig& cfg) {
  const auto [trace, metrics] =
      run_backward_crib(cfg.medium, cfg.pulse, cfg.protocol.tau, cfg.protocol.mode);
  run.write("crib_trace.csv", trace_text(trace, run.meta()));
  run.write("crib_metrics.json", metrics_json(metrics));
}

SweepSpec base_sweep(const RunConfig& cfg) {
  SweepSpec s;
  s.medium = cfg.medium;
  s.pulse = cfg.pulse;
  s.tau = cfg.protocol.tau;
  s.mode = cfg.protocol.mode;
  return s;
}

void cmd_sweep_delay(Run& run, const RunConfig& cfg) {
  SweepSpec s = base_sweep(cfg);
  s.variable = SweepVariable::tau;
  s.values = cfg.protocol.delays;
  s.outputs = {"peak_time_us", "echo_energy", "echo_intensity_at_2tau", "fid_intensity_at_2tau",
               "ratio"};
  const Table table = run_sweep(s);
  std::ostringstream os;
  write_table_csv(os, table, cfg.hash(), {{"command", "sweep-delay"}});
  run.write("sweep_delay.csv", os.str());

  constexpr double threshold = 0.1353352832366127;
  nlohmann::ordered_json j;
  j["threshold"] = threshold;
  j["duration_us"] = cfg.pulse.duration;
  try {
    j["tbp"] = time_bandwidth_product(table.column("2tau"), table.column("echo_intensity_at_2tau"),
                                      cfg.pulse.duration, threshold);
    j["note"] = "";
  } catch (const Error& e) {
    j["tbp"] = nullptr;
    j["note"] = e.what();
  }
  run.write("sweep_delay_tbp.json", j.dump(2) + "\n");
}

void cmd_sweep_area(Run& run, const RunConfig& cfg) {
  SweepSpec s = base_sweep(cfg);
  s.variable = SweepVariable::input_area;
  s.values = cfg.protocol.areas;
  s.outputs = {"input_energy", "echo_energy", "efficiency", "peak_time_us"};
  const Table table = run_sweep(s);
  std::ostringstream os;
  write_table_csv(os, table, cfg.hash(), {{"command", "sweep-area"}});
  run.write("sweep_area.csv", os.str());
}

void cmd_calibrate(Run& run, const RunConfig& cfg) {
  MediumSpec off = cfg.medium;
  off.gradient.polarity = 0;
  nlohmann::ordered_json j;
  j["coupling_per_mm"] = cfg.medium.coupling;
  j["transmission_gradient_off"] = off.probe_transmission();
  j["transmission_gradient_on"] = cfg.medium.probe_transmission();
  j["absorption_gradient_off"] = 1.0 - off.probe_transmission();
  j["absorption_gradient_on"] = 1.0 - cfg.medium.probe_transmission();
  j["stark_half_width_khz"] = cfg.stark_half_width_khz();
  j["broadened_center_span_khz"] = 2.0 * std::abs(cfg.stark_half_width_khz());
  run.write("calibration.json", j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stark echo photon-echo simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "Configuration file");
  app.add_option("--voltage", opt.voltage, "Electrode voltage, V");
  app.add_option("--tau-us", opt.tau, "Flip delay tau, us");
  app.add_option("--mode", opt.mode, "linearized or full-bloch");
  app.add_option("--areas", opt.areas, "Pulse areas, start:stop:count or a list");
  app.add_option("--delays", opt.delays, "Delays tau, start:stop:count or a list");
  app.add_option("--out-dir", opt.out_dir, "Output directory (else $STARKECHO_OUT_DIR or .)");

  using Command = void (*)(Run&, const RunConfig&);
  const std::vector<std::pair<std::string, Command>> commands = {
      {"fid", cmd_fid},
      {"broaden", cmd_broaden},
      {"echo", cmd_echo},
      {"sweep-delay", cmd_sweep_delay},
      {"sweep-area", cmd_sweep_area},
      {"crib-backward", cmd_crib},
      {"calibrate", cmd_calibrate},
  };
  const std::map<std::string, std::string> help = {
      {"fid", "Free induction decay after one pulse"},
      {"broaden", "Probe transmission with the gradient off and on"},
      {"echo", "Forward Stark echo"},
      {"sweep-delay", "Echo intensity against delay"},
      {"sweep-area", "Echo energy against input pulse area"},
      {"crib-backward", "Backward retrieval with phase matching"},
      {"calibrate", "Coupling calibration and broadening summary"},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string command;
  Command fn = nullptr;
  for (const auto& [name, f] : commands)
    if (app.got_subcommand(name)) {
      command = name;
      fn = f;
    }

  try {
    const RunConfig cfg = load_config(opt);
    Run run(command, cfg, output_dir(opt));
    fn(run, cfg);
    run.finish();
  } catch (const ConfigFailure& f) {
    for (const auto& e : f.errors) std::cerr << "config error: " << e << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
