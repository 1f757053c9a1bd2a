#include "starkecho/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "starkecho/errors.hpp"

namespace starkecho {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void schedule_error(const std::string& what) {
  throw Error(ErrorCode::InvalidSchedule, what);
}

std::string fmt_time(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g us", t);
  return buf;
}

}  // namespace

const char* event_name(const ScheduleAction& action) {
  return std::visit(overloaded{
                        [](const InjectPulse&) { return "inject_pulse"; },
                        [](const SetGradient&) { return "set_gradient"; },
                        [](const FlipPolarity&) { return "flip_polarity"; },
                        [](const PhaseMatchAndReverse&) { return "phase_match_and_reverse"; },
                        [](const EndRun&) { return "end"; },
                    },
                    action);
}

double ProtocolSchedule::end_time() const {
  for (const auto& e : events)
    if (std::holds_alternative<EndRun>(e.action)) return e.time;
  schedule_error("schedule has no end event");
}

void ProtocolSchedule::validate() const {
  if (events.empty()) schedule_error("schedule has no events");
  int ends = 0, matches = 0;
  double last = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& e = events[k];
    if (!std::isfinite(e.time) || e.time < 0.0)
      schedule_error(std::string(event_name(e.action)) + " at a negative or non-finite time");
    if (e.time < last) schedule_error("events out of time order at " + fmt_time(e.time));
    last = e.time;
    if (std::holds_alternative<EndRun>(e.action)) {
      ++ends;
      if (k + 1 != events.size()) schedule_error("end must be the last event");
    }
    if (std::holds_alternative<PhaseMatchAndReverse>(e.action)) ++matches;
    if (const auto* p = std::get_if<InjectPulse>(&e.action)) {
      try {
        p->pulse.validate();
      } catch (const Error& err) {
        schedule_error(std::string("inject_pulse: ") + err.what());
      }
    }
    if (const auto* f = std::get_if<FlipPolarity>(&e.action)) {
      if (!(f->ramp >= 0.0)) schedule_error("flip_polarity ramp must be >= 0");
    }
    if (const auto* g = std::get_if<SetGradient>(&e.action)) {
      if (g->polarity < -1 || g->polarity > 1) schedule_error("set_gradient polarity must be -1, 0 or +1");
    }
  }
  if (ends != 1) schedule_error("schedule needs exactly one end event");
  if (matches > 1) schedule_error("phase_match_and_reverse may occur at most once");
  if (!(record_until > 0.0) || record_until > end_time() + 1e-12)
    schedule_error("record_until must lie in (0, end time]");

  // pulses injected before a reversal must be over by then
  double reversal = std::numeric_limits<double>::infinity();
  for (const auto& e : events)
    if (std::holds_alternative<PhaseMatchAndReverse>(e.action)) reversal = e.time;
  for (const auto& e : events) {
    const auto* p = std::get_if<InjectPulse>(&e.action);
    if (!p || e.time >= reversal) continue;
    PulseSpec pulse = p->pulse;
    pulse.start_time = e.time;
    if (pulse.support_end() > reversal + 1e-9)
      schedule_error("pulse injected at " + fmt_time(e.time) + " still running at the reversal");
  }
}

void ProtocolSchedule::validate(const StarkGradient& initial) const {
  validate();
  bool active = initial.active();
  for (const auto& e : events) {
    if (const auto* g = std::get_if<SetGradient>(&e.action)) active = g->polarity != 0 && g->voltage != 0.0;
    if (std::holds_alternative<FlipPolarity>(e.action) && !active)
      schedule_error("flip_polarity at " + fmt_time(e.time) + " while the gradient is off");
  }
}

namespace {

DriveFunction pulse_train(std::vector<PulseSpec> pulses) {
  if (pulses.empty()) return {};
  return [pulses = std::move(pulses)](double t) {
    std::complex<double> sum = 0.0;
    for (const auto& p : pulses) sum += p.envelope(t);
    return sum;
  };
}

}  // namespace

ScheduleResult execute_schedule(const MediumSpec& medium, const ProtocolSchedule& schedule,
                                const std::vector<double>& snapshot_times) {
  schedule.validate(medium.gradient);
  medium.grid.validate();

  std::vector<PulseSpec> forward_pulses, backward_pulses;
  bool reversed = false;
  for (const auto& e : schedule.events) {
    if (std::holds_alternative<PhaseMatchAndReverse>(e.action)) reversed = true;
    if (const auto* p = std::get_if<InjectPulse>(&e.action)) {
      PulseSpec pulse = p->pulse;
      pulse.start_time = e.time;
      (reversed ? backward_pulses : forward_pulses).push_back(pulse);
    }
  }

  Propagator<double> prop(medium, make_ensemble<double>(medium, schedule.mode),
                          pulse_train(forward_pulses));
  const double dt = medium.grid.t_step;
  const double end = schedule.end_time();

  ScheduleResult result;
  FieldTrace& trace = result.trace;
  trace.sample_step = dt;
  std::size_t next_event = 0, next_snapshot = 0;

  auto apply = [&](const ScheduleEvent& e) {
    std::visit(overloaded{
                   [](const InjectPulse&) {},
                   [&](const SetGradient& g) {
                     StarkGradient gradient = prop.medium().gradient;
                     gradient.voltage = g.voltage;
                     gradient.polarity = g.polarity;
                     build_medium(medium.grid, medium.feature, gradient);
                     prop.set_gradient(gradient);
                   },
                   [&](const FlipPolarity& f) { prop.flip_polarity(f.ramp); },
                   [&](const PhaseMatchAndReverse&) {
                     prop.phase_match();
                     prop.set_drive(pulse_train(backward_pulses));
                   },
                   [](const EndRun&) {},
               },
               e.action);
  };
  auto apply_due = [&] {
    while (next_event < schedule.events.size() &&
           schedule.events[next_event].time <= prop.time() + 0.5 * dt)
      apply(schedule.events[next_event++]);
  };
  auto record = [&] {
    if (prop.time() > schedule.record_until + 0.5 * dt) return;
    trace.times.push_back(prop.time());
    trace.boundary_in.push_back(prop.entry_field());
    trace.boundary_out.push_back(prop.exit_field());
    while (next_snapshot < snapshot_times.size() &&
           snapshot_times[next_snapshot] <= prop.time() + 0.5 * dt) {
      trace.snapshot_times.push_back(prop.time());
      trace.snapshots.push_back(prop.field().transpose().matrix());
      ++next_snapshot;
    }
  };

  const auto steps = static_cast<long>(std::llround(end / dt));
  apply_due();
  record();
  for (long n = 0; n < steps; ++n) {
    prop.step();
    apply_due();
    record();
  }
  trace.direction = prop.direction();
  result.state = prop.state();
  result.medium = prop.medium();
  return result;
}

double trace_energy(const std::vector<double>& times,
                    const std::vector<std::complex<double>>& field, double from, double to) {
  if (times.size() != field.size())
    throw Error(ErrorCode::InvalidArgument, "times and field differ in length");
  double sum = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (times[k - 1] < from || times[k] > to) continue;
    sum += 0.5 * (times[k] - times[k - 1]) * (std::norm(field[k - 1]) + std::norm(field[k]));
  }
  return sum;
}

EchoMetrics echo_metrics(const FieldTrace& trace, const PulseSpec& input,
                         double expected_echo_time, double noise_floor) {
  if (trace.size() < 2) throw Error(ErrorCode::InvalidArgument, "trace too short");
  if (trace.times.back() < expected_echo_time + input.duration - 0.5 * trace.sample_step)
    throw Error(ErrorCode::OutOfRange, "trace ends before the echo window is complete");
  const double lo = expected_echo_time - 3.0 * input.duration;
  const double hi = expected_echo_time + 3.0 * input.duration;

  std::size_t peak = trace.size();
  double peak_abs = -1.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (trace.times[k] < lo || trace.times[k] > hi) continue;
    const double a = std::abs(trace.boundary_out[k]);
    if (a > peak_abs) {
      peak_abs = a;
      peak = k;
    }
  }
  if (peak == trace.size() || !(peak_abs > noise_floor * input.peak_amplitude()))
    throw Error(ErrorCode::NoEchoFound, "echo window maximum below the noise floor");

  const double input_energy =
      trace_energy(trace.times, trace.boundary_in, -std::numeric_limits<double>::infinity(),
                   std::numeric_limits<double>::infinity());
  if (!(input_energy > 0.0)) throw Error(ErrorCode::InvalidArgument, "trace carries no input");

  EchoMetrics m;
  m.peak_time_us = trace.times[peak] - input.reference_time();
  m.echo_energy = trace_energy(trace.times, trace.boundary_out, lo, hi);
  m.efficiency = m.echo_energy / input_energy;

  const double mirror = input.reference_time() + expected_echo_time;
  std::complex<double> cross = 0.0;
  double ee = 0.0, rr = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (trace.times[k] < lo || trace.times[k] > hi) continue;
    const std::complex<double> e = trace.boundary_out[k];
    const std::complex<double> r = input.envelope(mirror - trace.times[k]);
    cross += e * std::conj(r);
    ee += std::norm(e);
    rr += std::norm(r);
  }
  m.fidelity = (ee > 0.0 && rr > 0.0) ? std::norm(cross) / (ee * rr) : 0.0;
  return m;
}

double time_bandwidth_product(const std::vector<double>& delays,
                              const std::vector<double>& intensities, double duration,
                              double threshold) {
  if (delays.size() != intensities.size() || delays.size() < 3)
    throw Error(ErrorCode::InvalidArgument, "need at least three delay/intensity pairs");
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
  for (std::size_t k = 1; k < delays.size(); ++k)
    if (!(delays[k] > delays[k - 1]))
      throw Error(ErrorCode::InvalidArgument, "delays must be strictly increasing");

  const double x0 = delays[0], x1 = delays[1], x2 = delays[2];
  const double i0 = intensities[0] * (x1 * x2) / ((x0 - x1) * (x0 - x2)) +
                    intensities[1] * (x0 * x2) / ((x1 - x0) * (x1 - x2)) +
                    intensities[2] * (x0 * x1) / ((x2 - x0) * (x2 - x1));
  if (!(i0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "zero-delay extrapolation not positive");
  const double level = threshold * i0;
  if (intensities[0] < level) return delays[0] / duration;
  for (std::size_t k = 1; k < delays.size(); ++k) {
    if (intensities[k] < level) {
      const double f = (intensities[k - 1] - level) / (intensities[k - 1] - intensities[k]);
      return (delays[k - 1] + f * (delays[k] - delays[k - 1])) / duration;
    }
  }
  throw Error(ErrorCode::OutOfRange, "echo intensity never drops below the threshold");
}

ProtocolSchedule fid_schedule(const PulseSpec& pulse, BlochMode mode, double record_until) {
  ProtocolSchedule s;
  s.mode = mode;
  s.record_until = record_until;
  s.events.push_back({pulse.start_time, InjectPulse{pulse}});
  s.events.push_back({record_until, EndRun{}});
  return s;
}

namespace {

double checked_flip_time(const PulseSpec& pulse, double tau, double ramp) {
  pulse.validate();
  const double flip = pulse.reference_time() + tau - 0.5 * ramp;
  if (flip < pulse.support_end() - 1e-9) {
    std::ostringstream os;
    os << "flip at " << flip << " us falls inside the pulse ending at " << pulse.support_end()
       << " us";
    throw Error(ErrorCode::TauTooSmall, os.str());
  }
  return flip;
}

double echo_record_end(const PulseSpec& pulse, double tau) {
  return pulse.reference_time() + 2.0 * tau + 4.0 * pulse.duration;
}

}  // namespace

ProtocolSchedule forward_echo_schedule(const PulseSpec& pulse, double tau, BlochMode mode,
                                       double flip_ramp) {
  const double flip = checked_flip_time(pulse, tau, flip_ramp);
  ProtocolSchedule s;
  s.mode = mode;
  s.record_until = echo_record_end(pulse, tau);
  s.events.push_back({pulse.start_time, InjectPulse{pulse}});
  s.events.push_back({flip, FlipPolarity{flip_ramp}});
  s.events.push_back({s.record_until, EndRun{}});
  return s;
}

ProtocolSchedule backward_crib_schedule(const PulseSpec& pulse, double tau, BlochMode mode) {
  const double flip = checked_flip_time(pulse, tau, 0.0);
  ProtocolSchedule s;
  s.mode = mode;
  s.record_until = echo_record_end(pulse, tau);
  s.events.push_back({pulse.start_time, InjectPulse{pulse}});
  s.events.push_back({flip, FlipPolarity{}});
  s.events.push_back({flip, PhaseMatchAndReverse{}});
  s.events.push_back({s.record_until, EndRun{}});
  return s;
}

FieldTrace run_fid(const MediumSpec& medium, const PulseSpec& pulse, BlochMode mode,
                   std::optional<double> record_until) {
  pulse.validate();
  const double until = record_until.value_or(pulse.support_end() + 60.0);
  return execute_schedule(medium, fid_schedule(pulse, mode, until)).trace;
}

std::pair<FieldTrace, EchoMetrics> run_forward_echo(const MediumSpec& medium,
                                                    const PulseSpec& pulse, double tau,
                                                    BlochMode mode, double flip_ramp) {
  ProtocolSchedule s = forward_echo_schedule(pulse, tau, mode, flip_ramp);
  // with the gradient off there is nothing to flip
  if (!medium.gradient.active())
    std::erase_if(s.events, [](const ScheduleEvent& e) {
      return std::holds_alternative<FlipPolarity>(e.action);
    });
  FieldTrace trace = execute_schedule(medium, s).trace;
  EchoMetrics m = echo_metrics(trace, pulse, pulse.reference_time() + 2.0 * tau);
  return {std::move(trace), m};
}

std::pair<FieldTrace, EchoMetrics> run_backward_crib(const MediumSpec& medium,
                                                     const PulseSpec& pulse, double tau,
                                                     BlochMode mode) {
  ProtocolSchedule s = backward_crib_schedule(pulse, tau, mode);
  if (!medium.gradient.active())
    std::erase_if(s.events, [](const ScheduleEvent& e) {
      return std::holds_alternative<FlipPolarity>(e.action);
    });
  FieldTrace trace = execute_schedule(medium, s).trace;
  EchoMetrics m = echo_metrics(trace, pulse, pulse.reference_time() + 2.0 * tau);
  return {std::move(trace), m};
}

namespace {

namespace pt = boost::property_tree;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* shape_name(PulseShape s) {
  switch (s) {
    case PulseShape::square: return "square";
    case PulseShape::gaussian: return "gaussian";
    case PulseShape::ramp: return "ramp";
  }
  return "square";
}

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigError, key + ": " + what);
}

double get_number(const pt::ptree& sec, const std::string& section, const std::string& key) {
  const auto v = sec.get_optional<std::string>(key);
  if (!v) config_error(section + "." + key, "missing");
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    config_error(section + "." + key, "not a number: '" + *v + "'");
  }
}

void check_keys(const pt::ptree& sec, const std::string& section,
                const std::set<std::string>& allowed) {
  for (const auto& [k, v] : sec)
    if (!allowed.count(k)) config_error(section + "." + k, "unknown key");
}

}  // namespace

std::string schedule_to_text(const ProtocolSchedule& schedule) {
  std::ostringstream os;
  os << "[schedule]\n";
  os << "mode = " << (schedule.mode == BlochMode::linearized ? "linearized" : "full_bloch") << "\n";
  os << "record_until = " << num(schedule.record_until) << "\n";
  int k = 0;
  for (const auto& e : schedule.events) {
    os << "\n[event" << ++k << "]\n";
    os << "time = " << num(e.time) << "\n";
    os << "type = " << event_name(e.action) << "\n";
    std::visit(overloaded{
                   [&](const InjectPulse& p) {
                     os << "shape = " << shape_name(p.pulse.shape) << "\n";
                     os << "duration = " << num(p.pulse.duration) << "\n";
                     os << "area = " << num(p.pulse.area) << "\n";
                     os << "carrier_detuning = " << num(p.pulse.carrier_detuning) << "\n";
                   },
                   [&](const SetGradient& g) {
                     os << "voltage = " << num(g.voltage) << "\n";
                     os << "polarity = " << g.polarity << "\n";
                   },
                   [&](const FlipPolarity& f) { os << "ramp = " << num(f.ramp) << "\n"; },
                   [](const PhaseMatchAndReverse&) {},
                   [](const EndRun&) {},
               },
               e.action);
  }
  return os.str();
}

ProtocolSchedule schedule_from_text(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("schedule: ") + e.message());
  }

  ProtocolSchedule s;
  std::map<int, const pt::ptree*> events;
  for (const auto& [name, sec] : tree) {
    if (name == "schedule") continue;
    if (name.rfind("event", 0) != 0) config_error(name, "unknown section");
    int index = 0;
    try {
      std::size_t used = 0;
      index = std::stoi(name.substr(5), &used);
      if (used != name.size() - 5 || index < 1) throw std::invalid_argument(name);
    } catch (const std::exception&) {
      config_error(name, "event sections are named event1, event2, ...");
    }
    events[index] = &sec;
  }

  const auto sched = tree.get_child_optional("schedule");
  if (!sched) config_error("schedule", "missing section");
  check_keys(*sched, "schedule", {"mode", "record_until"});
  const std::string mode = sched->get<std::string>("mode", "linearized");
  if (mode == "linearized") {
    s.mode = BlochMode::linearized;
  } else if (mode == "full_bloch" || mode == "full-bloch") {
    s.mode = BlochMode::full_bloch;
  } else {
    config_error("schedule.mode", "expected linearized or full_bloch, got '" + mode + "'");
  }
  s.record_until = get_number(*sched, "schedule", "record_until");

  int expected = 1;
  for (const auto& [index, secp] : events) {
    const pt::ptree& sec = *secp;
    const std::string name = "event" + std::to_string(index);
    if (index != expected++) config_error(name, "event sections must be numbered consecutively");
    ScheduleEvent e;
    e.time = get_number(sec, name, "time");
    const auto type = sec.get_optional<std::string>("type");
    if (!type) config_error(name + ".type", "missing");
    if (*type == "inject_pulse") {
      check_keys(sec, name, {"time", "type", "shape", "duration", "area", "carrier_detuning"});
      PulseSpec p;
      const std::string shape = sec.get<std::string>("shape", "square");
      if (shape == "square") p.shape = PulseShape::square;
      else if (shape == "gaussian") p.shape = PulseShape::gaussian;
      else if (shape == "ramp") p.shape = PulseShape::ramp;
      else config_error(name + ".shape", "unknown pulse shape '" + shape + "'");
      p.duration = get_number(sec, name, "duration");
      p.area = get_number(sec, name, "area");
      if (sec.count("carrier_detuning")) p.carrier_detuning = get_number(sec, name, "carrier_detuning");
      p.start_time = e.time;
      e.action = InjectPulse{p};
    } else if (*type == "set_gradient") {
      check_keys(sec, name, {"time", "type", "voltage", "polarity"});
      SetGradient g;
      g.voltage = get_number(sec, name, "voltage");
      const double pol = get_number(sec, name, "polarity");
      if (pol != -1.0 && pol != 0.0 && pol != 1.0)
        config_error(name + ".polarity", "must be -1, 0 or 1");
      g.polarity = static_cast<int>(pol);
      e.action = g;
    } else if (*type == "flip_polarity") {
      check_keys(sec, name, {"time", "type", "ramp"});
      FlipPolarity f;
      if (sec.count("ramp")) f.ramp = get_number(sec, name, "ramp");
      e.action = f;
    } else if (*type == "phase_match_and_reverse") {
      check_keys(sec, name, {"time", "type"});
      e.action = PhaseMatchAndReverse{};
    } else if (*type == "end") {
      check_keys(sec, name, {"time", "type"});
      e.action = EndRun{};
    } else {
      config_error(name + ".type", "unknown event type '" + *type + "'");
    }
    s.events.push_back(std::move(e));
  }
  s.validate();
  return s;
}

}  // namespace starkecho
