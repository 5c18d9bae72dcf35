#pragma once

#include <cmath>

namespace spinsim {

inline constexpr double pi     = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018
inline constexpr double mu0  = 1.25663706212e-6;  // vacuum permeability, T m / A
inline constexpr double hbar = 1.054571817e-34;   // reduced Planck constant, J s

// 1H gyromagnetic ratio, rad / (s T)
inline constexpr double gamma_h1 = 2.6752218744e8;

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double x) {
    double w = std::remainder(x, two_pi);
    if (w <= -pi) w += two_pi;
    return w;
}

} // namespace spinsim
