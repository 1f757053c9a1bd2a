#include "starkecho/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "starkecho/errors.hpp"
#include "starkecho/units.hpp"

namespace starkecho {

std::complex<double> analytic_absorption(double eta, const DriveFunction& input, double z,
                                         double t, double c) {
  const double retarded = std::isinf(c) ? t : t - z / c;
  return std::exp(-eta * z) * input(retarded);
}

std::complex<double> analytic_coherence(double eta, const DriveFunction& input, double z,
                                        double delta, double t, double t0, int n) {
  if (n < 2 || n % 2) throw Error(ErrorCode::InvalidArgument, "Simpson panels must be even");
  if (t <= t0) return 0.0;
  const double h = (t - t0) / n;
  std::complex<double> sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double s = t0 + k * h;
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    sum += w * input(s) * std::polar(1.0, -delta * (t - s));
  }
  return std::exp(-eta * z) * std::complex<double>(0.0, 0.5) * sum * (h / 3.0);
}

double amplitude_absorption(const MediumSpec& medium) {
  return 0.5 * medium.resonant_optical_depth() / medium.grid.length();
}

OracleResult absorption_oracle(const MediumSpec& medium, const PulseSpec& pulse,
                               const std::vector<std::pair<double, double>>& probes) {
  const SimGrid& g = medium.grid;
  std::vector<double> times;
  for (const auto& [z, t] : probes) {
    if (z < g.z_min || z > g.z_max || t < 0.0)
      throw Error(ErrorCode::OutOfRange, "probe point outside the grid");
    times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  const double until = std::max(times.empty() ? 0.0 : times.back(), g.t_step);
  const ScheduleResult run = execute_schedule(medium, fid_schedule(pulse, BlochMode::linearized,
                                                                   until + g.t_step),
                                              times);
  const auto& snaps = run.trace.snapshots;
  const auto& snap_t = run.trace.snapshot_times;
  const double eta = amplitude_absorption(medium);
  const DriveFunction input = [pulse](double t) { return pulse.envelope(t); };

  OracleResult r;
  r.probe_points = probes;
  for (const auto& [z, t] : probes) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < snap_t.size(); ++k)
      if (std::abs(snap_t[k] - t) < std::abs(snap_t[best] - t)) best = k;
    const double x = (z - g.z_min) / g.dz();
    const int j = std::min(static_cast<int>(x), g.n_z - 2);
    const double f = x - j;
    const std::complex<double> sim = (1.0 - f) * snaps[best][j] + f * snaps[best][j + 1];
    const std::complex<double> ref = analytic_absorption(eta, input, z - g.z_min, snap_t[best]);
    r.analytic_field.push_back(ref);
    r.simulated_field.push_back(sim);
    if (std::abs(ref) > 0.0)
      r.max_rel_error = std::max(r.max_rel_error, std::abs(sim - ref) / std::abs(ref));
  }
  return r;
}

namespace {

double radical_inverse(unsigned n, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (n > 0) {
    r += f * (n % base);
    n /= base;
    f *= inv;
  }
  return r;
}

// offset from the feature centre with cumulative fraction u
double feature_quantile(const SpectralFeature& feature, double u) {
  const double total = feature.spectral_area();
  double lo = -feature.half_extent(), hi = feature.half_extent();
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feature.cumulative(mid) < u * total ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

FieldTrace brute_force_echo(int n_atoms, const MediumSpec& medium,
                            const ProtocolSchedule& schedule) {
  if (n_atoms < 1 || n_atoms > 2000)
    throw Error(ErrorCode::InvalidArgument, "n_atoms must lie in [1, 2000]");
  schedule.validate(medium.gradient);
  MediumSpec off = medium;
  off.gradient.polarity = 0;
  const double thickness = off.resonant_optical_depth();
  if (thickness > 0.2)
    throw Error(ErrorCode::TooThick, "optical depth " + std::to_string(thickness) +
                                         " exceeds the thin-sample limit 0.2");

  using Array = Eigen::ArrayXd;
  using CArray = Eigen::ArrayXcd;
  const SimGrid& g = medium.grid;
  Array intrinsic(n_atoms), coord(n_atoms);
  for (int n = 0; n < n_atoms; ++n) {
    const double u = radical_inverse(static_cast<unsigned>(n + 1), 2);
    const double v = radical_inverse(static_cast<unsigned>(n + 1), 3);
    coord[n] = 2.0 * u - 1.0;
    intrinsic[n] = medium.feature.center_rad() + feature_quantile(medium.feature, v);
  }
  const double emit = medium.coupling * g.length() * medium.feature.spectral_area() / n_atoms;

  std::vector<PulseSpec> pulses;
  for (const auto& e : schedule.events) {
    if (std::holds_alternative<PhaseMatchAndReverse>(e.action))
      throw Error(ErrorCode::InvalidArgument, "the discrete-atom reference is forward only");
    if (const auto* p = std::get_if<InjectPulse>(&e.action)) {
      PulseSpec pulse = p->pulse;
      pulse.start_time = e.time;
      pulses.push_back(pulse);
    }
  }
  auto drive = [&](double t) {
    std::complex<double> s = 0.0;
    for (const auto& p : pulses) s += p.envelope(t);
    return s;
  };

  StarkGradient gradient = medium.gradient;
  double ramp_start = 0.0, ramp_duration = 0.0, ramp_from = 0.0;
  bool ramping = false;
  auto polarity_at = [&](double t) {
    if (!ramping) return static_cast<double>(gradient.polarity);
    const double f = std::clamp((t - ramp_start) / ramp_duration, 0.0, 1.0);
    return ramp_from * (1.0 - 2.0 * f);
  };

  const std::complex<double> half_i(0.0, 0.5);
  CArray alpha = CArray::Zero(n_atoms);
  auto rhs = [&](double t, const CArray& a) -> CArray {
    const double half = units::khz_to_rad_per_us(gradient.half_shift()) * polarity_at(t);
    const Array delta = intrinsic + half * coord;
    return std::complex<double>(0.0, -1.0) * delta * a + half_i * drive(t);
  };

  const double dt = g.t_step;
  constexpr int kSub = 4;
  const double h = dt / kSub;
  FieldTrace trace;
  trace.sample_step = dt;
  double t = 0.0;
  std::size_t next_event = 0;
  auto apply_due = [&] {
    while (next_event < schedule.events.size() &&
           schedule.events[next_event].time <= t + 0.5 * dt) {
      const auto& action = schedule.events[next_event++].action;
      if (const auto* s = std::get_if<SetGradient>(&action)) {
        gradient.voltage = s->voltage;
        gradient.polarity = s->polarity;
        ramping = false;
      } else if (const auto* f = std::get_if<FlipPolarity>(&action)) {
        if (gradient.voltage == 0.0 || gradient.polarity == 0) continue;
        if (f->ramp > 0.0) {
          ramping = true;
          ramp_start = t;
          ramp_duration = f->ramp;
          ramp_from = gradient.polarity;
        }
        gradient.polarity = -gradient.polarity;
      }
    }
    if (ramping && t >= ramp_start + ramp_duration - 1e-9 * dt) ramping = false;
  };
  auto record = [&] {
    if (t > schedule.record_until + 0.5 * dt) return;
    const std::complex<double> in = drive(t);
    trace.times.push_back(t);
    trace.boundary_in.push_back(in);
    trace.boundary_out.push_back(in + std::complex<double>(0.0, emit) * alpha.sum());
  };

  const auto steps = static_cast<long>(std::llround(schedule.end_time() / dt));
  apply_due();
  record();
  for (long n = 0; n < steps; ++n) {
    for (int s = 0; s < kSub; ++s) {
      const double ts = t + s * h;
      const CArray k1 = rhs(ts, alpha);
      const CArray k2 = rhs(ts + 0.5 * h, alpha + 0.5 * h * k1);
      const CArray k3 = rhs(ts + 0.5 * h, alpha + 0.5 * h * k2);
      const CArray k4 = rhs(ts + h, alpha + h * k3);
      alpha += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t = (n + 1) * dt;
    apply_due();
    record();
  }
  trace.direction = Direction::forward;
  return trace;
}

const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::tau: return "tau";
    case SweepVariable::input_area: return "input_area";
    case SweepVariable::voltage: return "voltage";
    case SweepVariable::optical_depth: return "optical_depth";
  }
  return "unknown";
}

namespace {

const std::set<std::string>& known_outputs() {
  static const std::set<std::string> names = {
      "peak_time_us", "echo_energy",           "efficiency",            "fidelity",
      "input_energy", "echo_intensity_at_2tau", "fid_intensity_at_2tau", "ratio"};
  return names;
}

double intensity_near(const FieldTrace& trace, double t) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (std::abs(trace.times[k] - t) < std::abs(trace.times[best] - t)) best = k;
  return std::norm(trace.boundary_out[best]);
}

std::vector<double> sweep_row(const SweepSpec& spec, double value) {
  MediumSpec m = spec.medium;
  PulseSpec p = spec.pulse;
  double tau = spec.tau;
  switch (spec.variable) {
    case SweepVariable::tau:
      tau = value;
      break;
    case SweepVariable::input_area:
      p.area = value;
      break;
    case SweepVariable::voltage: {
      StarkGradient g = m.gradient;
      g.voltage = value;
      const double coupling = m.coupling;
      const auto t2 = m.homogeneous_t2;
      m = build_medium(m.grid, m.feature, g);
      m.coupling = coupling;
      m.homogeneous_t2 = t2;
      break;
    }
    case SweepVariable::optical_depth:
      m = spec.protocol == SweepProtocol::forward_echo ? calibrate_unbroadened(m, value)
                                                       : calibrate_broadened(m, value);
      break;
  }

  const auto [trace, metrics] = spec.protocol == SweepProtocol::forward_echo
                                    ? run_forward_echo(m, p, tau, spec.mode)
                                    : run_backward_crib(m, p, tau, spec.mode);
  const double echo_time = p.reference_time() + 2.0 * tau;
  const double echo_intensity = intensity_near(trace, echo_time);

  double fid_intensity = std::nan("");
  const auto needs_fid = [&](const std::string& s) {
    return s == "fid_intensity_at_2tau" || s == "ratio";
  };
  if (std::any_of(spec.outputs.begin(), spec.outputs.end(), needs_fid)) {
    MediumSpec off = m;
    off.gradient.polarity = 0;
    const FieldTrace fid = run_fid(off, p, spec.mode, echo_time + p.duration);
    fid_intensity = intensity_near(fid, echo_time);
  }

  std::vector<double> row{value};
  if (spec.variable == SweepVariable::tau) row.push_back(2.0 * value);
  for (const auto& name : spec.outputs) {
    if (name == "peak_time_us") row.push_back(metrics.peak_time_us);
    else if (name == "echo_energy") row.push_back(metrics.echo_energy);
    else if (name == "efficiency") row.push_back(metrics.efficiency);
    else if (name == "fidelity") row.push_back(metrics.fidelity);
    else if (name == "input_energy") row.push_back(metrics.echo_energy / metrics.efficiency);
    else if (name == "echo_intensity_at_2tau") row.push_back(echo_intensity);
    else if (name == "fid_intensity_at_2tau") row.push_back(fid_intensity);
    else if (name == "ratio") row.push_back(echo_intensity / fid_intensity);
  }
  return row;
}

}  // namespace

void SweepSpec::validate() const {
  if (outputs.empty()) throw Error(ErrorCode::InvalidArgument, "sweep has no output metrics");
  for (const auto& name : outputs)
    if (!known_outputs().count(name))
      throw Error(ErrorCode::InvalidArgument, "unknown sweep output '" + name + "'");
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "sweep has no values");
  bool up = true, down = true;
  for (std::size_t k = 1; k < values.size(); ++k) {
    up = up && values[k] > values[k - 1];
    down = down && values[k] < values[k - 1];
  }
  if (!up && !down) throw Error(ErrorCode::InvalidArgument, "sweep values must be strictly monotone");
  for (double v : values)
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "sweep values must be finite");
}

std::vector<double> Table::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::InvalidArgument, "no column '" + name + "'");
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

Table run_sweep(const SweepSpec& spec) {
  spec.validate();
  Table table;
  table.columns.push_back(to_string(spec.variable));
  if (spec.variable == SweepVariable::tau) table.columns.push_back("2tau");
  for (const auto& name : spec.outputs) table.columns.push_back(name);

  const std::size_t n = spec.values.size();
  table.rows.assign(n, {});
  table.errors.assign(n, {});
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        table.rows[k] = sweep_row(spec, spec.values[k]);
      } catch (const std::exception& e) {
        std::vector<double> failed(table.columns.size(), std::nan(""));
        failed[0] = spec.values[k];
        if (spec.variable == SweepVariable::tau) failed[1] = 2.0 * spec.values[k];
        table.rows[k] = std::move(failed);
        table.errors[k] = e.what();
      }
    }
  };
  const unsigned threads =
      std::clamp<unsigned>(std::thread::hardware_concurrency(), 1u, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return table;
}

}  // namespace starkecho
