// units.hpp - unit conventions
//
// Time is in microseconds, position in millimetres, user-facing frequencies
// in kHz. Internally detunings and Rabi frequencies are angular, rad/us.
#pragma once

#include <numbers>

namespace starkecho::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double khz_to_rad_per_us(double khz) { return two_pi * khz * 1e-3; }
constexpr double rad_per_us_to_khz(double w) { return w / two_pi * 1e3; }

// T2 given in ms -> decay rate in 1/us
constexpr double t2_ms_to_rate(double t2_ms) { return 1.0 / (t2_ms * 1e3); }

}  // namespace starkecho::units
