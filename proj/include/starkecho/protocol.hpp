// protocol.hpp - timed experiment schedules: FID, forward Stark echo and
// backward retrieval with phase matching.
//
// Echo timing is referenced to the centre of the input pulse support t_c. A
// flip at t_c + tau rephases the Stark broadening at t_c + 2 tau.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "starkecho/dynamics.hpp"
#include "starkecho/model.hpp"
#include "starkecho/transport.hpp"

namespace starkecho {

struct InjectPulse {
  PulseSpec pulse;  // start_time is taken from the event time
};

struct SetGradient {
  double voltage = 0.0;
  int polarity = 0;
};

struct FlipPolarity {
  double ramp = 0.0;  // us; 0 is an instantaneous switch
};

struct PhaseMatchAndReverse {};

struct EndRun {};

using ScheduleAction =
    std::variant<InjectPulse, SetGradient, FlipPolarity, PhaseMatchAndReverse, EndRun>;

struct ScheduleEvent {
  double time = 0.0;  // us
  ScheduleAction action;
};

struct ProtocolSchedule {
  std::vector<ScheduleEvent> events;
  BlochMode mode = BlochMode::linearized;
  double record_until = 0.0;  // us

  // Structural checks: events in time order, exactly one end (last), at most
  // one phase match, record_until within the run. Throws InvalidSchedule.
  void validate() const;
  // Structural checks plus the gradient state seen by each flip, starting
  // from `initial`.
  void validate(const StarkGradient& initial) const;
  double end_time() const;
};

const char* event_name(const ScheduleAction& action);

struct ScheduleResult {
  // boundary_in is the drive at the current entry face; boundary_out is the
  // field leaving the current exit face, so after a reversal it holds the
  // backward emission at z_min.
  FieldTrace trace;
  EnsembleState<double> state;
  MediumSpec medium;  // as left at the end of the run
};

ScheduleResult execute_schedule(const MediumSpec& medium, const ProtocolSchedule& schedule,
                                const std::vector<double>& snapshot_times = {});

struct EchoMetrics {
  double peak_time_us = 0.0;  // relative to the input pulse centre
  double echo_energy = 0.0;   // int |Omega|^2 dt over the echo window
  double efficiency = 0.0;    // echo_energy / input energy
  double fidelity = 0.0;      // overlap with the time-reversed input
  std::optional<double> tbp;
};

// expected_echo_time is absolute. The window is expected +/- 3 durations; the
// reversal reference is midway between the pulse centre and expected time.
// NoEchoFound if the window maximum does not exceed noise_floor times the
// peak input amplitude.
EchoMetrics echo_metrics(const FieldTrace& trace, const PulseSpec& input,
                         double expected_echo_time, double noise_floor = 1e-10);

// Storage window over which echo intensity stays at or above threshold times
// its zero-delay value, divided by the pulse duration. delays are total
// delays 2 tau (strictly increasing, at least three). The zero-delay value is
// the quadratic through the three shortest delays evaluated at zero.
// OutOfRange if the intensity never falls below the threshold.
double time_bandwidth_product(const std::vector<double>& delays,
                              const std::vector<double>& intensities, double duration,
                              double threshold = 0.1353352832366127);

ProtocolSchedule fid_schedule(const PulseSpec& pulse, BlochMode mode, double record_until);
ProtocolSchedule forward_echo_schedule(const PulseSpec& pulse, double tau, BlochMode mode,
                                       double flip_ramp = 0.0);
ProtocolSchedule backward_crib_schedule(const PulseSpec& pulse, double tau, BlochMode mode);

// Default record length for an FID: 60 us past the end of the pulse.
FieldTrace run_fid(const MediumSpec& medium, const PulseSpec& pulse, BlochMode mode,
                   std::optional<double> record_until = std::nullopt);

std::pair<FieldTrace, EchoMetrics> run_forward_echo(const MediumSpec& medium,
                                                    const PulseSpec& pulse, double tau,
                                                    BlochMode mode, double flip_ramp = 0.0);

std::pair<FieldTrace, EchoMetrics> run_backward_crib(const MediumSpec& medium,
                                                     const PulseSpec& pulse, double tau,
                                                     BlochMode mode);

// Trapezoid integral of |Omega|^2 over samples with t in [from, to].
double trace_energy(const std::vector<double>& times,
                    const std::vector<std::complex<double>>& field, double from, double to);

// Schedule in the sectioned key=value config format:
//   [schedule] mode, record_until
//   [event1], [event2], ... with time, type and the type's parameters
std::string schedule_to_text(const ProtocolSchedule& schedule);
ProtocolSchedule schedule_from_text(const std::string& text);

}  // namespace starkecho
