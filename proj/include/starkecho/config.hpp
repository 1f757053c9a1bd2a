// config.hpp - sectioned key=value run configuration.
//
//   [grid]     z_min z_max n_z t_step (mm, us); optional n_detune,
//              detune_half_width (rad/us), c_medium (mm/us)
//   [feature]  shape width peak_optical_depth (kHz); optional center (kHz),
//              homogeneous_t2 (ms)
//   [gradient] broadening_rate voltage (kHz/V, V); optional polarity.
//              Defaults are 42 kHz/V and 25 V at polarity +1.
//   [coupling] calibration = unbroadened | broadened | fixed; optical_depth
//              for broadened, value (per mm) for fixed
//   [pulse]    shape duration area; optional carrier_detuning (kHz),
//              start_time (us)
//   [protocol] mode tau; optional flip_ramp, fid_record, delays, areas
//
// Absent sections take the defaults of the reference experiment. A section
// that is present must give its leading keys. Unknown keys are errors.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "starkecho/dynamics.hpp"
#include "starkecho/model.hpp"

namespace starkecho {

enum class CouplingMode { unbroadened, broadened, fixed };

struct ProtocolSettings {
  BlochMode mode = BlochMode::linearized;
  double tau = 10.0;         // us
  double flip_ramp = 0.0;    // us
  double fid_record = 60.0;  // us past the end of the pulse
  std::vector<double> delays{3.0, 6.0, 9.0, 12.0, 15.0};  // tau values
  std::vector<double> areas;                             // empty: 20 from 0.05 to pi/2
};

struct RunConfig {
  MediumSpec medium;  // calibrated
  PulseSpec pulse;
  ProtocolSettings protocol;
  CouplingMode coupling_mode = CouplingMode::unbroadened;
  double coupling_target = 0.51;

  // Stark shift at the sample face, kHz.
  double stark_half_width_khz() const { return medium.gradient.half_shift(); }
  // Canonical text of every resolved value; the hash covers exactly this.
  std::string resolved_text() const;
  std::string hash() const;  // SHA-256 hex of resolved_text()
};

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;  // one per violation, each naming its key

  bool ok() const { return config.has_value(); }
};

// Overrides are "section.key" -> value and replace file values before
// validation.
ConfigResult validate_config(const std::string& text,
                             const std::map<std::string, std::string>& overrides = {});

// Parses "a:b:n" into n evenly spaced values from a to b inclusive.
std::vector<double> parse_range(const std::string& spec);

std::string sha256_hex(const std::string& data);

}  // namespace starkecho
