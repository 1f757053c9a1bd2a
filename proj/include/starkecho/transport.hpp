// transport.hpp - propagation of the field envelope through the ensemble.
//
// Transit through the 4 mm sample takes picoseconds, so the field is solved
// quasi-statically along the characteristic at every time step:
//   d Omega / ds = s i kappa P(z),   P(z) = sum_classes weight * coherence
// where s runs in the propagation direction (s = +1 forward, -1 backward,
// matching the sign of the atomic source term) and kappa is the calibrated
// coupling. With this convention a weak field is absorbed with intensity
// optical depth pi * kappa * int g dz in either direction.
//
// Each linear step is solved in a single sweep: the atomic update is linear in
// the end-of-step field at the same node, so the trapezoid relation between
// neighbouring nodes can be solved for that field node by node.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "starkecho/dynamics.hpp"
#include "starkecho/errors.hpp"
#include "starkecho/model.hpp"

namespace starkecho {

using DriveFunction = std::function<std::complex<double>(double)>;

/// Field recorded at the sample faces, one sample per time step.
struct FieldTrace {
  std::vector<double> times;
  std::vector<std::complex<double>> boundary_in;
  std::vector<std::complex<double>> boundary_out;
  Direction direction = Direction::forward;
  double sample_step = 0.0;
  std::vector<double> snapshot_times;
  std::vector<Eigen::VectorXcd> snapshots;  // Omega(z) at snapshot_times

  std::size_t size() const { return times.size(); }
};

/// Coupling-scaled polarization at node j, summed in class order.
template <typename Real>
std::complex<double> polarization_source(const EnsembleState<Real>& state,
                                         const MediumSpec& medium, Eigen::Index j) {
  const auto layout = make_layout<Real>(medium);
  if (state.classes() != layout.classes() || state.nodes() != layout.nodes())
    throw Error(ErrorCode::GridMismatch, "state and medium grids differ");
  if (j < 0 || j >= state.nodes()) throw Error(ErrorCode::OutOfRange, "node index out of range");
  std::complex<Real> sum = 0;
  for (Eigen::Index i = 0; i < state.classes(); ++i) sum += layout.weight[i] * state.coherence(i, j);
  return medium.coupling * std::complex<double>(sum);
}

template <typename Real>
class Propagator {
 public:
  using Complex = std::complex<Real>;

  Propagator(MediumSpec medium, EnsembleState<Real> state, DriveFunction drive = {})
      : medium_(std::move(medium)),
        layout_(make_layout<Real>(medium_)),
        state_(std::move(state)),
        drive_(std::move(drive)) {
    medium_.grid.validate();
    if (state_.classes() != layout_.classes() || state_.nodes() != layout_.nodes())
      throw Error(ErrorCode::GridMismatch, "state and medium grids differ");
    if (state_.direction == Direction::backward && !state_.phase_matched)
      throw Error(ErrorCode::DirectionMismatch, "backward state without phase matching");
    refresh_coefficients(state_.polarity);
    resweep();
  }

  const MediumSpec& medium() const { return medium_; }
  const EnsembleState<Real>& state() const { return state_; }
  const SpectralLayout<Real>& layout() const { return layout_; }
  double time() const { return state_.time; }
  Direction direction() const { return state_.direction; }
  const ComplexRowX<Real>& field() const { return field_; }

  Eigen::Index entry_node() const { return forward() ? 0 : nodes() - 1; }
  Eigen::Index exit_node() const { return forward() ? nodes() - 1 : 0; }
  std::complex<double> entry_field() const { return std::complex<double>(field_[entry_node()]); }
  std::complex<double> exit_field() const { return std::complex<double>(field_[exit_node()]); }

  /// Replaces the drive applied at the entry face; the field is re-solved at
  /// the current time.
  void set_drive(DriveFunction drive) {
    drive_ = std::move(drive);
    resweep();
  }

  void set_gradient(const StarkGradient& gradient) {
    medium_.gradient = gradient;
    layout_ = make_layout<Real>(medium_);
    state_.polarity = Real(gradient.polarity);
    ramp_.reset();
    refresh_coefficients(state_.polarity);
  }

  /// Reverses the gradient polarity, instantly or over a linear ramp.
  void flip_polarity(double ramp_duration = 0.0) {
    if (medium_.gradient.voltage == 0.0 || medium_.gradient.polarity == 0) return;
    if (ramp_duration <= 0.0) {
      std::tie(state_, medium_) = starkecho::flip_polarity<Real>(std::move(state_), medium_);
      ramp_.reset();
      return;
    }
    ramp_ = Ramp{state_.time, ramp_duration, Real(medium_.gradient.polarity)};
    medium_.gradient.polarity = -medium_.gradient.polarity;
  }

  /// Applies the phase-matching operation and turns the propagation around.
  void phase_match() {
    state_ = starkecho::phase_match<Real>(std::move(state_));
    resweep();
  }

  void step() {
    const double dt = medium_.grid.t_step;
    const double t1 = state_.time + dt;
    Real polarity = state_.polarity;
    if (ramp_) {
      const double frac = std::clamp((state_.time + 0.5 * dt - ramp_->start) / ramp_->duration,
                                     0.0, 1.0);
      polarity = ramp_->from * Real(1.0 - 2.0 * frac);
    }
    if (state_.mode == BlochMode::linearized) {
      step_linear(polarity, t1);
    } else {
      step_bloch(polarity, t1);
    }
    state_.time = t1;
    if (ramp_ && t1 >= ramp_->start + ramp_->duration - 1e-9 * dt) {
      state_.polarity = -ramp_->from;
      ramp_.reset();
    } else if (ramp_) {
      state_.polarity = polarity;
    }
  }

 private:
  struct Ramp {
    double start;
    double duration;
    Real from;
  };

  bool forward() const { return state_.direction == Direction::forward; }
  Eigen::Index nodes() const { return layout_.nodes(); }
  Eigen::Index node_at(Eigen::Index k) const { return forward() ? k : nodes() - 1 - k; }
  Real sign() const { return source_sign<Real>(state_.direction); }
  Complex drive_at(double t) const { return drive_ ? Complex(drive_(t)) : Complex(0); }

  Real spacing(Eigen::Index a, Eigen::Index b) const {
    return std::abs(layout_.position[a] - layout_.position[b]);
  }

  void refresh_coefficients(Real polarity) {
    coeff_ = linear_coefficients<Real>(layout_, polarity, Real(medium_.decay_rate()),
                                       Real(medium_.grid.t_step));
    coeff_polarity_ = polarity;
    end_sum_.resize(nodes());
    for (Eigen::Index j = 0; j < nodes(); ++j) {
      Complex s = 0;
      for (Eigen::Index i = 0; i < layout_.classes(); ++i) s += layout_.weight[i] * coeff_.end(i, j);
      end_sum_[j] = s;
    }
  }

  Complex column_polarization(const ComplexArrayX<Real>& a, Eigen::Index j) const {
    Complex s = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) s += layout_.weight[i] * a(i, j);
    return s;
  }

  // Field along the sample from the present coherence and drive.
  void resweep() {
    field_.resize(nodes());
    const Complex k = Complex(0, sign() * Real(medium_.coupling) * Real(0.5));
    Eigen::Index prev = node_at(0);
    field_[prev] = drive_at(state_.time);
    Complex p_prev = column_polarization(state_.coherence, prev);
    for (Eigen::Index s = 1; s < nodes(); ++s) {
      const Eigen::Index j = node_at(s);
      const Complex p = column_polarization(state_.coherence, j);
      field_[j] = field_[prev] + k * spacing(j, prev) * (p_prev + p);
      p_prev = p;
      prev = j;
    }
  }

  void step_linear(Real polarity, double t1) {
    if (polarity != coeff_polarity_) refresh_coefficients(polarity);
    const Complex src(0, Real(0.5) * sign());
    const Complex k = Complex(0, sign() * Real(medium_.coupling) * Real(0.5));

    partial_ = coeff_.rotation * state_.coherence + src * (coeff_.start.rowwise() * field_);
    ComplexRowX<Real> next(nodes());
    Eigen::Index prev = node_at(0);
    next[prev] = drive_at(t1);
    Complex p_prev = column_polarization(partial_, prev) + src * end_sum_[prev] * next[prev];
    for (Eigen::Index s = 1; s < nodes(); ++s) {
      const Eigen::Index j = node_at(s);
      const Complex p_free = column_polarization(partial_, j);
      const Complex kd = k * spacing(j, prev);
      next[j] = (next[prev] + kd * (p_prev + p_free)) / (Complex(1) - kd * src * end_sum_[j]);
      p_prev = p_free + src * end_sum_[j] * next[j];
      prev = j;
    }
    state_.coherence = partial_ + src * (coeff_.end.rowwise() * next);
    field_ = std::move(next);
  }

  void rotate_column(Eigen::Index j, Complex omega_mid, Real polarity, Real dt,
                     Eigen::Array<Complex, Eigen::Dynamic, 1>& rho, RealColX<Real>& w) const {
    const Real damping = std::exp(-Real(medium_.decay_rate()) * dt);
    const Complex omega = sign() * omega_mid;
    for (Eigen::Index i = 0; i < rho.size(); ++i) {
      const Real delta = layout_.detuning[i] + polarity * layout_.unit_shift[j];
      rotate_bloch<Real>(rho[i], w[i], omega, delta, dt);
      rho[i] *= damping;
    }
  }

  Complex weighted_sum(const Eigen::Array<Complex, Eigen::Dynamic, 1>& rho) const {
    Complex s = 0;
    for (Eigen::Index i = 0; i < rho.size(); ++i) s += layout_.weight[i] * rho[i];
    return s;
  }

  // Full-Bloch step: the atomic update is nonlinear in the field, so the
  // end-of-step field at each node is found by fixed-point iteration.
  void step_bloch(Real polarity, double t1) {
    constexpr int kIterations = 2;
    const Real dt = Real(medium_.grid.t_step);
    const Complex k = Complex(0, sign() * Real(medium_.coupling) * Real(0.5));
    const Eigen::Index m = layout_.classes();
    Eigen::Array<Complex, Eigen::Dynamic, 1> rho(m);
    RealColX<Real> w(m);
    ComplexRowX<Real> next(nodes());

    auto advance = [&](Eigen::Index j, Complex end_field) {
      rho = state_.coherence.col(j);
      w = state_.inversion.col(j);
      rotate_column(j, Real(0.5) * (field_[j] + end_field), polarity, dt, rho, w);
      return weighted_sum(rho);
    };

    Eigen::Index prev = node_at(0);
    next[prev] = drive_at(t1);
    Complex p_prev = advance(prev, next[prev]);
    state_.coherence.col(prev) = rho;
    state_.inversion.col(prev) = w;
    for (Eigen::Index s = 1; s < nodes(); ++s) {
      const Eigen::Index j = node_at(s);
      const Complex kd = k * spacing(j, prev);
      Complex guess = field_[j] + (next[prev] - field_[prev]);
      for (int it = 0; it < kIterations; ++it) guess = next[prev] + kd * (p_prev + advance(j, guess));
      const Complex p = advance(j, guess);
      next[j] = next[prev] + kd * (p_prev + p);
      state_.coherence.col(j) = rho;
      state_.inversion.col(j) = w;
      p_prev = p;
      prev = j;
    }
    field_ = std::move(next);
  }

  MediumSpec medium_;
  SpectralLayout<Real> layout_;
  EnsembleState<Real> state_;
  DriveFunction drive_;
  LinearStepCoefficients<Real> coeff_;
  Real coeff_polarity_ = 0;
  ComplexRowX<Real> end_sum_;
  ComplexRowX<Real> field_;
  ComplexArrayX<Real> partial_;
  std::optional<Ramp> ramp_;
};

/// Advances the coupled system for `duration` with the given drive at the
/// entry face of `direction`, recording both boundaries every step.
template <typename Real>
std::pair<EnsembleState<Real>, FieldTrace> run_transport(
    const MediumSpec& medium, EnsembleState<Real> state, const DriveFunction& drive,
    double duration, Direction direction, const std::vector<double>& snapshot_times = {}) {
  if (state.direction != direction)
    throw Error(ErrorCode::DirectionMismatch, "state direction differs from requested direction");
  medium.grid.validate();
  Propagator<Real> prop(medium, std::move(state), drive);
  const double dt = medium.grid.t_step;
  const auto steps = static_cast<long>(std::llround(duration / dt));

  FieldTrace trace;
  trace.direction = direction;
  trace.sample_step = dt;
  std::size_t next_snapshot = 0;
  auto record = [&] {
    trace.times.push_back(prop.time());
    trace.boundary_in.push_back(prop.entry_field());
    trace.boundary_out.push_back(prop.exit_field());
    while (next_snapshot < snapshot_times.size() &&
           snapshot_times[next_snapshot] <= prop.time() + 0.5 * dt) {
      trace.snapshot_times.push_back(prop.time());
      trace.snapshots.push_back(prop.field().template cast<std::complex<double>>().transpose().matrix());
      ++next_snapshot;
    }
  };
  record();
  for (long n = 0; n < steps; ++n) {
    prop.step();
    record();
  }
  return {prop.state(), std::move(trace)};
}

}  // namespace starkecho
