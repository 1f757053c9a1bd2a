// model.hpp - grids, the prepared spectral feature, the Stark gradient and
// the medium built from them.
//
// The medium density is g(delta, z) = f(delta - c - delta_S(z)) where f is the
// intrinsic feature profile (peak 1) centred at c and delta_S the linear
// Stark shift. The gradient translates the feature rigidly in frequency; it
// never reshapes it.
#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <optional>

#include <Eigen/Dense>

namespace starkecho {

struct SimGrid {
  double z_min = 0.0;  // mm
  double z_max = 4.0;  // mm
  int n_z = 200;
  double t_step = 0.02;  // us
  int n_detune = 7681;
  double detune_half_width = 9.42477796076938;  // rad/us (1500 kHz)
  // Speed of light in the medium, mm/us. Infinite selects the quasi-static
  // sweep; a finite value only enforces t_step <= dz / c_medium.
  double c_medium = std::numeric_limits<double>::infinity();

  double length() const { return z_max - z_min; }
  double dz() const { return length() / (n_z - 1); }
  double position(int j) const;
  // spacing of the lab-frame detuning lattice, rad/us
  double detune_spacing() const { return 2.0 * detune_half_width / (n_detune - 1); }
  double lab_detuning(int i) const { return -detune_half_width + i * detune_spacing(); }
  // Largest t_step allowed by the characteristic constraint (infinite when
  // c_medium is).
  double max_t_step() const {
    return std::isinf(c_medium) ? std::numeric_limits<double>::infinity() : dz() / c_medium;
  }

  void validate() const;
};

enum class FeatureShape { top_hat, gaussian };

struct SpectralFeature {
  FeatureShape shape = FeatureShape::top_hat;
  double width = 25.0;  // kHz; full width (top hat) or FWHM (gaussian)
  double center = 0.0;  // kHz
  double peak_optical_depth = 0.51;

  void validate() const;

  // Profile at an offset from the centre (rad/us); peak value 1.
  double density(double offset) const;
  // Integral of the profile from -inf to offset.
  double cumulative(double offset) const;
  // Offset beyond which the profile is treated as zero, rad/us.
  double half_extent() const;
  // Integral of the profile over all offsets, rad/us.
  double spectral_area() const;
  double center_rad() const;
};

struct StarkGradient {
  double broadening_rate = 42.0;  // kHz per volt
  double voltage = 0.0;           // volts
  int polarity = 0;               // +1, -1, 0 (off)

  // Shift at the sample face for polarity +1, kHz.
  double half_shift() const { return broadening_rate * voltage; }
  bool active() const { return polarity != 0 && voltage != 0.0; }
};

// Linear Stark shift at z, kHz. Antisymmetric about the sample centre.
double stark_shift_at(const StarkGradient& gradient, const SimGrid& grid, double z);

// Normalised coordinate 2 (z - z_min) / L - 1 of grid node j, exactly
// antisymmetric in j.
double node_coordinate(const SimGrid& grid, int j);

struct MediumSpec {
  SimGrid grid;
  SpectralFeature feature;
  StarkGradient gradient;
  double coupling = 0.0;  // per mm
  std::optional<double> homogeneous_t2;  // ms

  // Stark shift at grid node j under the current polarity, rad/us.
  double node_stark_shift(int j) const;
  // g(delta, z) for a lab-frame detuning in rad/us.
  double density(double lab_detuning, double z) const;
  // Cell-averaged g on the lab detuning lattice at grid node j.
  Eigen::VectorXd sampled_density(int j) const;
  // Trapezoid integral of sampled_density(j) over detuning, rad/us.
  double sampled_area(int j) const;
  // Weak monochromatic probe intensity transmission through the full length.
  double probe_transmission(double probe_detuning_khz) const;
  double probe_transmission() const { return probe_transmission(feature.center); }
  // -ln of probe_transmission at the feature centre.
  double resonant_optical_depth() const;
  double decay_rate() const;  // 1/us, zero without T2
};

MediumSpec build_medium(const SimGrid& grid, const SpectralFeature& feature,
                        const StarkGradient& gradient);

// Sets the coupling so that a weak probe at the feature centre sees
// intensity transmission exp(-target). Requires the gradient to be off.
MediumSpec calibrate_coupling(MediumSpec medium, double target_peak_optical_depth);

// Calibrates with the gradient switched off, then restores the gradient.
MediumSpec calibrate_unbroadened(MediumSpec medium, double target_peak_optical_depth);

// Calibrates the coupling against the resonant optical depth seen with the
// gradient as configured (used to set a broadened optical depth directly).
MediumSpec calibrate_broadened(MediumSpec medium, double target_optical_depth);

enum class PulseShape { square, gaussian, ramp };

// Input pulse. The envelope is the Rabi frequency in rad/us.
//  square:   constant over [start, start + duration]
//  gaussian: duration is the FWHM, support [start, start + 4 duration]
//  ramp:     (t'/T) sin^2(pi t'/T) over [start, start + duration]; smooth
//            and asymmetric, peaking late
struct PulseSpec {
  PulseShape shape = PulseShape::square;
  double duration = 1.0;  // us
  double area = 0.1;      // rad
  double carrier_detuning = 0.0;  // kHz
  double start_time = 0.0;        // us

  void validate() const;
  double support_end() const;
  // Centre of the support; the reference for echo timing.
  double reference_time() const { return 0.5 * (start_time + support_end()); }
  double peak_amplitude() const;
  // Envelope including the carrier phase. At a square edge the mean of the
  // one-sided limits is returned, so trapezoid sampling keeps the area.
  std::complex<double> envelope(double t) const;
};

}  // namespace starkecho
