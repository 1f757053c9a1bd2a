#include "starkecho/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "starkecho/errors.hpp"
#include "starkecho/units.hpp"

namespace starkecho {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::NonPositiveWidth: return "NonPositiveWidth";
    case ErrorCode::GridTooNarrow: return "GridTooNarrow";
    case ErrorCode::CalibrationDiverged: return "CalibrationDiverged";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::DirectionMismatch: return "DirectionMismatch";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::TauTooSmall: return "TauTooSmall";
    case ErrorCode::NoEchoFound: return "NoEchoFound";
    case ErrorCode::TooThick: return "TooThick";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

double SimGrid::position(int j) const {
  if (j == n_z - 1) return z_max;
  return z_min + j * dz();
}

void SimGrid::validate() const {
  if (n_z < 2) throw Error(ErrorCode::InvalidGrid, "n_z must be >= 2");
  if (n_detune < 1) throw Error(ErrorCode::InvalidGrid, "n_detune must be >= 1");
  if (!(t_step > 0.0)) throw Error(ErrorCode::InvalidGrid, "t_step must be > 0");
  if (!(z_max > z_min)) throw Error(ErrorCode::InvalidGrid, "z_max must exceed z_min");
  if (!(detune_half_width > 0.0))
    throw Error(ErrorCode::InvalidGrid, "detune_half_width must be > 0");
  if (!(c_medium > 0.0)) throw Error(ErrorCode::InvalidGrid, "c_medium must be > 0");
  if (t_step > max_t_step()) {
    std::ostringstream os;
    os << "t_step " << t_step << " us exceeds dz/c_medium = " << max_t_step() << " us";
    throw Error(ErrorCode::StepTooLarge, os.str());
  }
}

void SpectralFeature::validate() const {
  if (!(width > 0.0)) throw Error(ErrorCode::NonPositiveWidth, "feature width must be > 0");
  if (!(peak_optical_depth >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "peak_optical_depth must be >= 0");
}

double SpectralFeature::center_rad() const { return units::khz_to_rad_per_us(center); }

namespace {

double gaussian_sigma(double fwhm_rad) { return fwhm_rad / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

}  // namespace

double SpectralFeature::density(double offset) const {
  const double w = units::khz_to_rad_per_us(width);
  switch (shape) {
    case FeatureShape::top_hat:
      return std::abs(offset) <= 0.5 * w ? 1.0 : 0.0;
    case FeatureShape::gaussian: {
      const double s = gaussian_sigma(w);
      return std::exp(-0.5 * offset * offset / (s * s));
    }
  }
  return 0.0;
}

double SpectralFeature::cumulative(double offset) const {
  const double w = units::khz_to_rad_per_us(width);
  switch (shape) {
    case FeatureShape::top_hat:
      return std::clamp(offset + 0.5 * w, 0.0, w);
    case FeatureShape::gaussian: {
      const double s = gaussian_sigma(w);
      return s * std::sqrt(0.5 * std::numbers::pi) *
             std::erfc(-offset / (s * std::numbers::sqrt2));
    }
  }
  return 0.0;
}

double SpectralFeature::half_extent() const {
  const double w = units::khz_to_rad_per_us(width);
  return shape == FeatureShape::top_hat ? 0.5 * w : 4.0 * w;
}

double SpectralFeature::spectral_area() const {
  const double w = units::khz_to_rad_per_us(width);
  if (shape == FeatureShape::top_hat) return w;
  return gaussian_sigma(w) * std::sqrt(2.0 * std::numbers::pi);
}

double node_coordinate(const SimGrid& grid, int j) {
  return static_cast<double>(2 * j - (grid.n_z - 1)) / (grid.n_z - 1);
}

double stark_shift_at(const StarkGradient& gradient, const SimGrid& grid, double z) {
  if (z < grid.z_min || z > grid.z_max)
    throw Error(ErrorCode::OutOfRange, "position outside [z_min, z_max]");
  const double x = (2.0 * z - (grid.z_min + grid.z_max)) / grid.length();
  return gradient.polarity * gradient.half_shift() * x;
}

double MediumSpec::node_stark_shift(int j) const {
  return gradient.polarity * units::khz_to_rad_per_us(gradient.half_shift()) *
         node_coordinate(grid, j);
}

double MediumSpec::density(double lab_detuning, double z) const {
  const double shift = units::khz_to_rad_per_us(stark_shift_at(gradient, grid, z));
  return feature.density(lab_detuning - feature.center_rad() - shift);
}

Eigen::VectorXd MediumSpec::sampled_density(int j) const {
  const double h = grid.detune_spacing();
  const double origin = feature.center_rad() + node_stark_shift(j);
  Eigen::VectorXd g(grid.n_detune);
  if (grid.n_detune == 1) {
    g[0] = feature.density(grid.lab_detuning(0) - origin);
    return g;
  }
  for (int i = 0; i < grid.n_detune; ++i) {
    const double d = grid.lab_detuning(i) - origin;
    g[i] = (feature.cumulative(d + 0.5 * h) - feature.cumulative(d - 0.5 * h)) / h;
  }
  return g;
}

double MediumSpec::sampled_area(int j) const {
  const Eigen::VectorXd g = sampled_density(j);
  if (g.size() == 1) return g[0];
  const double h = grid.detune_spacing();
  return h * (g.sum() - 0.5 * (g[0] + g[g.size() - 1]));
}

double MediumSpec::probe_transmission(double probe_detuning_khz) const {
  // Amplitude absorption per mm at detuning D is pi * coupling * g(D, z) / 2,
  // so the intensity optical depth is pi * coupling * int g(D, z) dz.
  const double probe = units::khz_to_rad_per_us(probe_detuning_khz) - feature.center_rad();
  const double slope = gradient.polarity * units::khz_to_rad_per_us(gradient.half_shift()) *
                       2.0 / grid.length();
  double column;
  if (slope == 0.0) {
    column = grid.length() * feature.density(probe);
  } else {
    // offset runs linearly from probe + shift_max to probe - shift_max
    const double a = probe + 0.5 * slope * grid.length();
    const double b = probe - 0.5 * slope * grid.length();
    column = std::abs(feature.cumulative(std::max(a, b)) - feature.cumulative(std::min(a, b))) /
             std::abs(slope);
  }
  return std::exp(-std::numbers::pi * coupling * column);
}

double MediumSpec::resonant_optical_depth() const { return -std::log(probe_transmission()); }

double MediumSpec::decay_rate() const {
  return homogeneous_t2 ? units::t2_ms_to_rate(*homogeneous_t2) : 0.0;
}

MediumSpec build_medium(const SimGrid& grid, const SpectralFeature& feature,
                        const StarkGradient& gradient) {
  grid.validate();
  feature.validate();
  if (gradient.polarity < -1 || gradient.polarity > 1)
    throw Error(ErrorCode::InvalidArgument, "polarity must be -1, 0 or +1");
  if (!(gradient.broadening_rate >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "broadening_rate must be >= 0");

  const double max_shift = units::khz_to_rad_per_us(std::abs(gradient.half_shift()));
  const double reach = std::abs(feature.center_rad()) + feature.half_extent() + max_shift;
  if (reach > grid.detune_half_width) {
    std::ostringstream os;
    os << "feature plus Stark shift reaches " << units::rad_per_us_to_khz(reach)
       << " kHz but the detuning window half width is "
       << units::rad_per_us_to_khz(grid.detune_half_width) << " kHz";
    throw Error(ErrorCode::GridTooNarrow, os.str());
  }
  MediumSpec m;
  m.grid = grid;
  m.feature = feature;
  m.gradient = gradient;
  m.coupling = 0.0;
  return m;
}

MediumSpec calibrate_coupling(MediumSpec medium, double target) {
  if (medium.gradient.active())
    throw Error(ErrorCode::InvalidArgument, "calibration requires the gradient off");
  return calibrate_broadened(std::move(medium), target);
}

MediumSpec calibrate_unbroadened(MediumSpec medium, double target) {
  const StarkGradient saved = medium.gradient;
  medium.gradient.polarity = 0;
  medium = calibrate_coupling(std::move(medium), target);
  medium.gradient = saved;
  return medium;
}

MediumSpec calibrate_broadened(MediumSpec medium, double target) {
  if (!(target >= 0.0)) throw Error(ErrorCode::InvalidArgument, "target optical depth < 0");
  if (target == 0.0) {
    medium.coupling = 0.0;
    return medium;
  }
  const double goal = std::exp(-target);
  auto transmission = [&](double coupling) {
    medium.coupling = coupling;
    return medium.probe_transmission();
  };

  double lo = 0.0, hi = 1.0;
  int expansions = 0;
  while (transmission(hi) > goal) {
    lo = hi;
    hi *= 2.0;
    if (++expansions > 200)
      throw Error(ErrorCode::CalibrationDiverged, "could not bracket the target transmission");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (transmission(mid) > goal ? lo : hi) = mid;
  }
  medium.coupling = 0.5 * (lo + hi);
  const double achieved = medium.probe_transmission();
  if (!(std::abs(achieved - goal) <= 1e-9 * goal + 1e-15))
    throw Error(ErrorCode::CalibrationDiverged, "bisection did not converge");
  return medium;
}

void PulseSpec::validate() const {
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "pulse duration must be > 0");
  if (!(area >= 0.0)) throw Error(ErrorCode::InvalidArgument, "pulse area must be >= 0");
}

double PulseSpec::support_end() const {
  return start_time + (shape == PulseShape::gaussian ? 4.0 * duration : duration);
}

double PulseSpec::peak_amplitude() const {
  switch (shape) {
    case PulseShape::square:
      return area / duration;
    case PulseShape::gaussian:
      return area / (duration * std::sqrt(std::numbers::pi / (4.0 * std::log(2.0))));
    case PulseShape::ramp:
      // prefactor of x sin^2(pi x); int_0^1 x sin^2(pi x) dx = 1/4
      return 4.0 * area / duration;
  }
  return 0.0;
}

std::complex<double> PulseSpec::envelope(double t) const {
  const double end = support_end();
  const double eps = 1e-9 * duration;
  if (t < start_time - eps || t > end + eps) return {0.0, 0.0};
  double a = 0.0;
  switch (shape) {
    case PulseShape::square:
      a = peak_amplitude();
      if (std::abs(t - start_time) <= eps || std::abs(t - end) <= eps) a *= 0.5;
      break;
    case PulseShape::gaussian: {
      const double u = (t - reference_time()) / duration;
      a = peak_amplitude() * std::exp(-4.0 * std::log(2.0) * u * u);
      break;
    }
    case PulseShape::ramp: {
      const double x = std::clamp((t - start_time) / duration, 0.0, 1.0);
      const double s = std::sin(std::numbers::pi * x);
      a = peak_amplitude() * x * s * s;
      break;
    }
  }
  const double phase = -units::khz_to_rad_per_us(carrier_detuning) * t;
  return std::polar(a, phase);
}

}  // namespace starkecho
