// dynamics.hpp - time stepping of the atomic ensemble.
//
// Coherence convention (rotating frame, Rabi field Omega in rad/us):
//   linearized:  d alpha/dt = -i delta alpha + s (i/2) Omega
//   full Bloch:  d rho/dt   = -i delta rho   - s (i/2) Omega w
//                dw/dt      = 2 s Im(rho conj(Omega))
// with s = +1 for the forward envelope and -1 for the backward one. The
// Bloch vector is (u, v, w) = (2 Re rho, -2 Im rho, w), so w = -1 reduces the
// full equations to the linear ones. delta is the intrinsic detuning of a
// class plus polarity * Stark shift of its node.
//
// The state is a (detuning class x node) array. Only classes carrying
// spectral mass are stored; class detunings sit on the lab lattice spacing.
#pragma once

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "starkecho/errors.hpp"
#include "starkecho/model.hpp"
#include "starkecho/units.hpp"

namespace starkecho {

enum class Direction { forward, backward };
enum class BlochMode { linearized, full_bloch };

template <typename Real>
using ComplexArrayX = Eigen::Array<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using ComplexRowX = Eigen::Array<std::complex<Real>, 1, Eigen::Dynamic>;
template <typename Real>
using RealArrayX = Eigen::Array<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using RealColX = Eigen::Array<Real, Eigen::Dynamic, 1>;
template <typename Real>
using RealRowX = Eigen::Array<Real, 1, Eigen::Dynamic>;

template <typename Real>
constexpr Real source_sign(Direction d) {
  return d == Direction::forward ? Real(1) : Real(-1);
}

/// Detuning classes and node geometry of a medium.
template <typename Real>
struct SpectralLayout {
  RealColX<Real> detuning;   // intrinsic detuning per class, rad/us
  RealColX<Real> weight;     // spectral mass per class, rad/us
  RealRowX<Real> unit_shift; // Stark shift per node at polarity +1, rad/us
  RealRowX<Real> position;   // mm

  Eigen::Index classes() const { return detuning.size(); }
  Eigen::Index nodes() const { return position.size(); }
};

template <typename Real>
SpectralLayout<Real> make_layout(const MediumSpec& medium) {
  const SimGrid& grid = medium.grid;
  const SpectralFeature& f = medium.feature;
  SpectralLayout<Real> layout;

  if (grid.n_detune == 1) {
    layout.detuning = RealColX<Real>::Constant(1, Real(f.center_rad()));
    layout.weight = RealColX<Real>::Constant(1, Real(f.spectral_area()));
  } else {
    const double h = grid.detune_spacing();
    const int reach = static_cast<int>(std::ceil(f.half_extent() / h)) + 1;
    const double total = f.spectral_area();
    std::vector<std::pair<double, double>> kept;
    for (int k = -reach; k <= reach; ++k) {
      const double mass = f.cumulative(k * h + 0.5 * h) - f.cumulative(k * h - 0.5 * h);
      if (mass > 1e-16 * total) kept.emplace_back(f.center_rad() + k * h, mass);
    }
    layout.detuning.resize(static_cast<Eigen::Index>(kept.size()));
    layout.weight.resize(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      layout.detuning[static_cast<Eigen::Index>(i)] = Real(kept[i].first);
      layout.weight[static_cast<Eigen::Index>(i)] = Real(kept[i].second);
    }
  }

  const double half = units::khz_to_rad_per_us(medium.gradient.half_shift());
  layout.unit_shift.resize(grid.n_z);
  layout.position.resize(grid.n_z);
  for (int j = 0; j < grid.n_z; ++j) {
    layout.unit_shift[j] = Real(half * node_coordinate(grid, j));
    layout.position[j] = Real(grid.position(j));
  }
  return layout;
}

/// Ensemble of coherences (and inversions in full-Bloch mode).
template <typename Real>
struct EnsembleState {
  ComplexArrayX<Real> coherence;
  RealArrayX<Real> inversion;  // empty in linearized mode
  Direction direction = Direction::forward;
  BlochMode mode = BlochMode::linearized;
  // Effective polarity; fractional only while a switching ramp is running.
  Real polarity = 0;
  double time = 0.0;
  bool phase_matched = false;

  Eigen::Index classes() const { return coherence.rows(); }
  Eigen::Index nodes() const { return coherence.cols(); }
};

template <typename Real>
EnsembleState<Real> make_ensemble(const MediumSpec& medium, BlochMode mode,
                                  const SpectralLayout<Real>& layout) {
  EnsembleState<Real> s;
  s.coherence = ComplexArrayX<Real>::Zero(layout.classes(), layout.nodes());
  if (mode == BlochMode::full_bloch)
    s.inversion = RealArrayX<Real>::Constant(layout.classes(), layout.nodes(), Real(-1));
  s.mode = mode;
  s.polarity = Real(medium.gradient.polarity);
  return s;
}

template <typename Real>
EnsembleState<Real> make_ensemble(const MediumSpec& medium, BlochMode mode) {
  return make_ensemble<Real>(medium, mode, make_layout<Real>(medium));
}

namespace detail {

// phi1(y) = (1 - e^-y) / y and phi2(y) = (1 - e^-y (1 + y)) / y^2
template <typename Real>
std::pair<std::complex<Real>, std::complex<Real>> phi12(std::complex<Real> y) {
  using C = std::complex<Real>;
  if (std::abs(y) < Real(0.125)) {
    C p1 = 0, p2 = 0, term = 1;  // term = (-y)^k / k!
    for (int k = 0; k < 16; ++k) {
      p1 += term / Real(k + 1);
      p2 += term / Real(k + 2);
      term *= -y / Real(k + 1);
    }
    return {p1, p2};
  }
  const C e = std::exp(-y);
  return {(C(1) - e) / y, (C(1) - e * (C(1) + y)) / (y * y)};
}

}  // namespace detail

/// Exact-rotation coefficients of one linear step.
///   alpha(t+dt) = rotation alpha(t) + s (i/2) (start Omega(t) + end Omega(t+dt))
/// The source is integrated exactly against the integrating factor for a
/// field varying linearly over the step.
template <typename Real>
struct LinearStepCoefficients {
  ComplexArrayX<Real> rotation;
  ComplexArrayX<Real> start;
  ComplexArrayX<Real> end;
};

template <typename Real>
LinearStepCoefficients<Real> linear_coefficients(const SpectralLayout<Real>& layout, Real polarity,
                                                 Real decay_rate, Real dt) {
  using C = std::complex<Real>;
  const Eigen::Index m = layout.classes(), n = layout.nodes();
  LinearStepCoefficients<Real> c;
  c.rotation.resize(m, n);
  c.start.resize(m, n);
  c.end.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Real delta = layout.detuning[i] + polarity * layout.unit_shift[j];
      const C y = C(decay_rate, delta) * dt;
      const auto [p1, p2] = detail::phi12(y);
      c.rotation(i, j) = std::exp(-y);
      c.start(i, j) = dt * p2;
      c.end(i, j) = dt * (p1 - p2);
    }
  }
  return c;
}

template <typename Real>
void apply_linear_step(ComplexArrayX<Real>& coherence, const LinearStepCoefficients<Real>& c,
                       const ComplexRowX<Real>& field_start, const ComplexRowX<Real>& field_end,
                       Real sign) {
  const std::complex<Real> src(0, Real(0.5) * sign);
  coherence = c.rotation * coherence +
              src * (c.start.rowwise() * field_start + c.end.rowwise() * field_end);
}

/// Rotates one Bloch vector by a constant drive over dt. omega is the
/// effective (sign-adjusted) Rabi field.
template <typename Real>
void rotate_bloch(std::complex<Real>& rho, Real& w, std::complex<Real> omega, Real delta,
                  Real dt) {
  Real u = 2 * rho.real(), v = -2 * rho.imag();
  const Real ax = -omega.real(), ay = omega.imag(), az = delta;
  const Real rate = std::sqrt(ax * ax + ay * ay + az * az);
  const Real angle = rate * dt;
  if (angle == Real(0)) return;
  const Real nx = ax / rate, ny = ay / rate, nz = az / rate;
  const Real c = std::cos(angle), s = std::sin(angle);
  const Real dot = nx * u + ny * v + nz * w;
  const Real cx = ny * w - nz * v, cy = nz * u - nx * w, cz = nx * v - ny * u;
  const Real k = dot * (Real(1) - c);
  const Real u2 = u * c + cx * s + nx * k;
  const Real v2 = v * c + cy * s + ny * k;
  const Real w2 = w * c + cz * s + nz * k;
  rho = std::complex<Real>(Real(0.5) * u2, Real(-0.5) * v2);
  w = w2;
}

namespace detail {

template <typename Real>
void check_shapes(const EnsembleState<Real>& state, const SpectralLayout<Real>& layout,
                  Eigen::Index field_size) {
  if (state.classes() != layout.classes() || state.nodes() != layout.nodes() ||
      field_size != layout.nodes())
    throw Error(ErrorCode::GridMismatch, "state, field and medium grids differ");
}

template <typename Real>
EnsembleState<Real> linear_step(EnsembleState<Real> state, const ComplexRowX<Real>& field_start,
                                const ComplexRowX<Real>& field_end, const MediumSpec& medium,
                                double dt, Direction expected) {
  if (state.mode != BlochMode::linearized)
    throw Error(ErrorCode::ModeMismatch, "linear stepper on a full-Bloch state");
  if (state.direction != expected)
    throw Error(ErrorCode::DirectionMismatch, "stepper direction differs from state direction");
  const auto layout = make_layout<Real>(medium);
  check_shapes(state, layout, field_start.size());
  check_shapes(state, layout, field_end.size());
  const auto c = linear_coefficients<Real>(layout, state.polarity, Real(medium.decay_rate()),
                                           Real(dt));
  apply_linear_step<Real>(state.coherence, c, field_start, field_end,
                          source_sign<Real>(expected));
  state.time += dt;
  return state;
}

}  // namespace detail

/// One forward step of the linearized coherence equation. The field may be
/// given at both ends of the step (linear in between) or once (held constant).
template <typename Real>
EnsembleState<Real> step_coherence_linear(EnsembleState<Real> state,
                                          const ComplexRowX<Real>& field_start,
                                          const ComplexRowX<Real>& field_end,
                                          const MediumSpec& medium, double dt) {
  return detail::linear_step<Real>(std::move(state), field_start, field_end, medium, dt,
                                   Direction::forward);
}

template <typename Real>
EnsembleState<Real> step_coherence_linear(EnsembleState<Real> state,
                                          const ComplexRowX<Real>& field,
                                          const MediumSpec& medium, double dt) {
  return step_coherence_linear<Real>(std::move(state), field, field, medium, dt);
}

/// Backward counterpart: same rotation, source term negated.
template <typename Real>
EnsembleState<Real> step_coherence_backward(EnsembleState<Real> state,
                                            const ComplexRowX<Real>& field_start,
                                            const ComplexRowX<Real>& field_end,
                                            const MediumSpec& medium, double dt) {
  return detail::linear_step<Real>(std::move(state), field_start, field_end, medium, dt,
                                   Direction::backward);
}

template <typename Real>
EnsembleState<Real> step_coherence_backward(EnsembleState<Real> state,
                                            const ComplexRowX<Real>& field,
                                            const MediumSpec& medium, double dt) {
  return step_coherence_backward<Real>(std::move(state), field, field, medium, dt);
}

/// Full two-level step: each cell's Bloch vector is rotated exactly about
/// (-Re Omega, Im Omega, delta) using the mid-step field, which preserves the
/// Bloch norm. Homogeneous decay, if any, damps u and v after the rotation.
template <typename Real>
EnsembleState<Real> step_bloch_full(EnsembleState<Real> state, const ComplexRowX<Real>& field_mid,
                                    const MediumSpec& medium, double dt) {
  if (state.mode != BlochMode::full_bloch || state.inversion.size() != state.coherence.size())
    throw Error(ErrorCode::ModeMismatch, "full-Bloch stepper needs an initialised inversion");
  const auto layout = make_layout<Real>(medium);
  detail::check_shapes(state, layout, field_mid.size());
  const Real sign = source_sign<Real>(state.direction);
  const Real damping = std::exp(-Real(medium.decay_rate() * dt));
  for (Eigen::Index j = 0; j < state.nodes(); ++j) {
    const std::complex<Real> omega = sign * field_mid[j];
    for (Eigen::Index i = 0; i < state.classes(); ++i) {
      const Real delta = layout.detuning[i] + state.polarity * layout.unit_shift[j];
      rotate_bloch<Real>(state.coherence(i, j), state.inversion(i, j), omega, delta, Real(dt));
      state.coherence(i, j) *= damping;
    }
  }
  state.time += dt;
  return state;
}

/// Reverses the Stark polarity of both the state and the medium. Coherences
/// are untouched; only future evolution changes. With the gradient off this
/// is a no-op.
template <typename Real>
std::pair<EnsembleState<Real>, MediumSpec> flip_polarity(EnsembleState<Real> state,
                                                         MediumSpec medium) {
  if (medium.gradient.voltage == 0.0) return {std::move(state), std::move(medium)};
  medium.gradient.polarity = -medium.gradient.polarity;
  state.polarity = -state.polarity;
  return {std::move(state), std::move(medium)};
}

/// Phase-matching operation. In envelope variables the position-dependent
/// factor exp(2ikz) is exactly the change from the forward to the backward
/// envelope convention, so the coherence values carry over unchanged and the
/// state is relabelled as backward.
template <typename Real>
EnsembleState<Real> phase_match(EnsembleState<Real> state) {
  if (state.direction != Direction::forward)
    throw Error(ErrorCode::DirectionMismatch, "phase_match requires a forward state");
  state.direction = Direction::backward;
  state.phase_matched = true;
  return state;
}

}  // namespace starkecho
