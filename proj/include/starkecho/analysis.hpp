// analysis.hpp - closed-form absorption, a discrete-atom reference simulator
// and parameter sweeps.
#pragma once

#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "starkecho/model.hpp"
#include "starkecho/protocol.hpp"
#include "starkecho/transport.hpp"

namespace starkecho {

// Field of a weak pulse after depth z of a broadband uniform absorber with
// amplitude absorption coefficient eta (per mm): e^{-eta z} E(0, t - z/c).
std::complex<double> analytic_absorption(double eta, const DriveFunction& input, double z,
                                         double t,
                                         double c = std::numeric_limits<double>::infinity());

// Companion coherence at detuning delta (rad/us):
//   e^{-eta z} (i/2) int_{t0}^{t} E(0, s) e^{-i delta (t - s)} ds
// evaluated with composite Simpson on n (even) panels.
std::complex<double> analytic_coherence(double eta, const DriveFunction& input, double z,
                                        double delta, double t, double t0 = 0.0, int n = 2000);

// Amplitude absorption coefficient of a medium for a broadband weak pulse.
double amplitude_absorption(const MediumSpec& medium);

struct OracleResult {
  std::vector<std::pair<double, double>> probe_points;  // (z mm, t us)
  std::vector<std::complex<double>> analytic_field;
  std::vector<std::complex<double>> simulated_field;
  double max_rel_error = 0.0;
};

// Runs the solver with the pulse and compares the field at the probe points
// (linear interpolation in z at the nearest recorded time) against
// analytic_absorption.
OracleResult absorption_oracle(const MediumSpec& medium, const PulseSpec& pulse,
                               const std::vector<std::pair<double, double>>& probes);

// Discrete-atom reference: n_atoms atoms at low-discrepancy positions and
// intrinsic detunings drawn from the feature, each integrated with RK4 under
// the unattenuated input field, and the emitted field summed in first Born
// approximation. Forward schedules only (inject, set_gradient, flip).
// TooThick if the unbroadened optical depth exceeds 0.2.
FieldTrace brute_force_echo(int n_atoms, const MediumSpec& medium,
                            const ProtocolSchedule& schedule);

enum class SweepVariable { tau, input_area, voltage, optical_depth };
enum class SweepProtocol { forward_echo, backward_crib };

const char* to_string(SweepVariable v);

struct SweepSpec {
  SweepVariable variable = SweepVariable::tau;
  std::vector<double> values;
  // base experiment; the swept variable overrides one of these
  MediumSpec medium;  // calibrated
  PulseSpec pulse;
  double tau = 10.0;
  BlochMode mode = BlochMode::linearized;
  SweepProtocol protocol = SweepProtocol::forward_echo;
  // Metric columns. Known names: peak_time_us, echo_energy, efficiency,
  // fidelity, input_energy, echo_intensity_at_2tau, fid_intensity_at_2tau,
  // ratio.
  std::vector<std::string> outputs;

  void validate() const;
};

// One row per swept value in the order given. The optical_depth variable
// recalibrates the coupling: against the unbroadened feature for forward
// echoes, against the broadened medium for backward retrieval. The
// fid_intensity_at_2tau column comes from one gradient-off FID run of the
// base pulse.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // NaN where a row failed
  std::vector<std::string> errors;        // empty string for rows that ran

  std::vector<double> column(const std::string& name) const;
};

Table run_sweep(const SweepSpec& spec);

}  // namespace starkecho
