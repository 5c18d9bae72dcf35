#pragma once

// Rotating-frame Hamiltonians (RF in ideal and hardware form, secular dipolar
// coupling under sample spinning), nutating-frame transformation, and average
// dipolar Hamiltonians (numeric and closed form).
//
// Dipolar pair term:  H_D^rot(t) = D(t) [3 I1z I2z - I1.I2]
// Spinning:           D(t) = G1 cos(gamma_D + w_r t) + G2 cos(2 gamma_D + 2 w_r t)
//                     G1 = -(sqrt2/4) d sin(2 beta_D),  G2 = (1/4) d sin^2(beta_D)
// Static:             D = (d/2)(3 cos^2(beta_D) - 1)
// DC recoupling conditions of the nutating-frame average: 2*omega1 = k*omega_r
// with k=1 (omega1 = w_r/2, HORROR) and k=2 (omega1 = w_r, rotary resonance).

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spinsim/constants.hpp"
#include "spinsim/errors.hpp"
#include "spinsim/sequence.hpp"
#include "spinsim/spin_algebra.hpp"
#include "spinsim/waveform.hpp"

namespace spinsim {

// thrown when omega1/omega_r admits no small common period; the CLI maps this
// to its numeric-failure exit code while it stays an argument_error for the API
struct commensurability_error : argument_error {
    using argument_error::argument_error;
};

struct DipolarCoupling {
    int site_i = 0;
    int site_j = 1;
    double d = 0.0;        // rad/s
    double beta_d = 0.0;   // rad, in [0, pi]
    double gamma_d = 0.0;  // rad, in [0, 2 pi)

    void validate(int n_spins = -1) const {
        if (site_i >= site_j)
            throw argument_error("coupling: require site_i < site_j, got " +
                                 std::to_string(site_i) + "," + std::to_string(site_j));
        if (site_i < 0) throw argument_error("coupling: negative site index");
        if (n_spins >= 0 && site_j >= n_spins)
            throw argument_error("coupling: site " + std::to_string(site_j) +
                                 " out of range for n_spins = " + std::to_string(n_spins));
        if (beta_d < 0.0 || beta_d > pi)
            throw argument_error("coupling: beta_d must lie in [0, pi]");
        if (gamma_d < 0.0 || gamma_d >= two_pi)
            throw argument_error("coupling: gamma_d must lie in [0, 2*pi)");
    }
};

struct SpinSystem {
    int n_spins = 2;
    std::vector<DipolarCoupling> couplings;

    void validate() const {
        if (n_spins < 1) throw argument_error("system: n_spins must be >= 1");
        for (std::size_t a = 0; a < couplings.size(); ++a) {
            couplings[a].validate(n_spins);
            for (std::size_t b = a + 1; b < couplings.size(); ++b)
                if (couplings[a].site_i == couplings[b].site_i &&
                    couplings[a].site_j == couplings[b].site_j)
                    throw argument_error("system: duplicate coupling pair");
        }
    }
};

struct RecouplingCondition {
    int k = 2;                   // 1 = HORROR, 2 = rotary resonance
    double g_coefficient = 0.0;  // G_k for this crystallite, rad/s
};

/// d = -(mu0/4pi) gamma^2 hbar / r^3
inline double dipolar_constant(double gamma_gyro, double r) {
    if (!(r > 0.0)) throw argument_error("dipolar_constant: r must be positive");
    return -(mu0 / (4.0 * pi)) * gamma_gyro * gamma_gyro * hbar / (r * r * r);
}

inline std::pair<double, double> g_coefficients(const DipolarCoupling& c) {
    const double g1 = -(std::sqrt(2.0) / 4.0) * c.d * std::sin(2.0 * c.beta_d);
    const double s = std::sin(c.beta_d);
    const double g2 = 0.25 * c.d * s * s;
    return {g1, g2};
}

inline RecouplingCondition recoupling_condition(const DipolarCoupling& c, int k) {
    if (k != 1 && k != 2) throw argument_error("recoupling_condition: k must be 1 or 2");
    const auto [g1, g2] = g_coefficients(c);
    return {k, k == 1 ? g1 : g2};
}

/// Time-dependent coupling coefficient D(t) (static_mode: time-independent
/// secular value, with beta_d read as the angle to the static field).
inline double dipolar_coefficient(const DipolarCoupling& c, double omega_r, double t,
                                  bool static_mode) {
    if (static_mode) {
        const double cb = std::cos(c.beta_d);
        return 0.5 * c.d * (3.0 * cb * cb - 1.0);
    }
    const auto [g1, g2] = g_coefficients(c);
    return g1 * std::cos(c.gamma_d + omega_r * t) + g2 * std::cos(2.0 * c.gamma_d + 2.0 * omega_r * t);
}

/// 3 I_iz I_jz - I_i . I_j embedded in an n_spins register.
inline Operator dipolar_pair_operator(int site_i, int site_j, int n_spins) {
    const Operator izz = spin_operator(Axis::z, site_i, n_spins) * spin_operator(Axis::z, site_j, n_spins);
    Operator op = 2.0 * izz;
    op -= spin_operator(Axis::x, site_i, n_spins) * spin_operator(Axis::x, site_j, n_spins);
    op -= spin_operator(Axis::y, site_i, n_spins) * spin_operator(Axis::y, site_j, n_spins);
    return op;
}

inline Operator dipolar_hamiltonian_rot(const SpinSystem& sys, double omega_r, double t,
                                        bool static_mode) {
    sys.validate();
    const Eigen::Index dim = Eigen::Index(1) << sys.n_spins;
    Operator h = Operator::Zero(dim, dim);
    for (const auto& c : sys.couplings)
        h += dipolar_coefficient(c, omega_r, t, static_mode) *
             dipolar_pair_operator(c.site_i, c.site_j, sys.n_spins);
    return h;
}

/// omega1 Ix + omega2'(t) [Iz cos(omega1 t + zeta) - Iy sin(omega1 t + zeta)]
inline Operator rf_hamiltonian_ideal(double t, const SequenceSpec& spec, int n_spins) {
    const SegmentRf seg = segment_at(spec, t);
    const double env = envelope(seg.env, t);
    Operator h = spec.omega1 * collective_operator(Axis::x, n_spins);
    if (env != 0.0) {
        const double arg = spec.omega1 * t + seg.zeta;
        h += (env * std::cos(arg)) * collective_operator(Axis::z, n_spins);
        h -= (env * std::sin(arg)) * collective_operator(Axis::y, n_spins);
    }
    return h;
}

/// omega_a [Ix cos(Phi) + Iy sin(Phi)] for one waveform sample.
inline Operator rf_hamiltonian_hardware(const WaveformSample& sample, int n_spins) {
    Operator h = (sample.amplitude * std::cos(sample.phase)) * collective_operator(Axis::x, n_spins);
    h += (sample.amplitude * std::sin(sample.phase)) * collective_operator(Axis::y, n_spins);
    return h;
}

/// exp(+i omega1 t Ix) H exp(-i omega1 t Ix)
inline Operator to_nutating(const Operator& h, double t, double omega1, int n_spins) {
    return rotate_operator(h, Axis::x, -omega1 * t, n_spins);
}

namespace detail {

/// Best rational p/q ~ x by continued fractions, q <= max_den, relative tolerance rel_tol.
inline std::pair<long, long> rational_approx(double x, long max_den, double rel_tol) {
    if (!(x > 0.0)) throw argument_error("rational_approx: ratio must be positive");
    long p_prev = 0, q_prev = 1; // convergent n-2
    long p_cur = 1, q_cur = 0;   // convergent n-1
    double rest = x;
    for (int iter = 0; iter < 64; ++iter) {
        const double a_f = std::floor(rest);
        const long a = long(a_f);
        const long p_next = a * p_cur + p_prev;
        const long q_next = a * q_cur + q_prev;
        if (q_next > max_den) break;
        p_prev = p_cur; q_prev = q_cur; p_cur = p_next; q_cur = q_next;
        if (q_cur > 0 && p_cur > 0 &&
            std::abs(x - double(p_cur) / double(q_cur)) <= rel_tol * x)
            return {p_cur, q_cur};
        const double frac = rest - a_f;
        if (frac < 1e-15) break;
        rest = 1.0 / frac;
    }
    return {0, 0}; // no acceptable convergent
}

/// Eigenbasis of the collective Ix, cached so exp(+/- i omega1 t Ix) is two
/// matrix products per time point inside averaging loops.
struct NutatingRotation {
    Eigen::MatrixXcd v;
    Eigen::VectorXd lam;

    explicit NutatingRotation(int n_spins) {
        Eigen::SelfAdjointEigenSolver<Operator> es(collective_operator(Axis::x, n_spins));
        v = es.eigenvectors();
        lam = es.eigenvalues();
    }

    // U(t) = exp(+i omega1 t Ix)
    Operator u_plus(double omega1, double t) const {
        Eigen::VectorXcd ph(lam.size());
        for (Eigen::Index i = 0; i < lam.size(); ++i)
            ph(i) = std::exp(Complex(0.0, omega1 * t * lam(i)));
        return v * ph.asDiagonal() * v.adjoint();
    }
};

} // namespace detail

/// Nutating-frame, y-toggled time average of the spinning dipolar pair term
/// over n_periods common periods of omega1 and omega_r (uniform trapezoid,
/// >= 2000 steps per shortest oscillation period).
inline Operator average_dipolar_numeric(const DipolarCoupling& c, double omega1, double omega_r,
                                        long n_periods) {
    if (n_periods < 1) throw argument_error("average_dipolar_numeric: n_periods must be >= 1");
    if (!(omega1 > 0.0) || !(omega_r > 0.0))
        throw argument_error("average_dipolar_numeric: omega1 and omega_r must be positive");
    const auto [p, q] = detail::rational_approx(omega1 / omega_r, 1024, 1e-9);
    if (q == 0)
        throw commensurability_error(
            "average_dipolar_numeric: omega1/omega_r is not commensurate (no p/q with q <= 1024)");

    const double window = double(n_periods) * double(q) * (two_pi / omega_r);
    const double omega_max = 2.0 * omega1 + 2.0 * omega_r;    // fastest integrand component
    const long steps = std::max<long>(2000, long(std::ceil(2000.0 * window * omega_max / two_pi)));
    const double h = window / double(steps);

    const int n_spins = 2;
    const Operator pair = dipolar_pair_operator(0, 1, n_spins);
    const detail::NutatingRotation rot(n_spins);
    DipolarCoupling c01 = c;
    c01.site_i = 0; c01.site_j = 1;

    Operator acc = Operator::Zero(pair.rows(), pair.cols());
    for (long k = 0; k <= steps; ++k) {
        const double t = double(k) * h;
        const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
        const double d_t = dipolar_coefficient(c01, omega_r, t, false);
        if (d_t == 0.0) continue;
        const Operator u = rot.u_plus(omega1, t);
        acc += (w * d_t) * (u * pair * u.adjoint());
    }
    acc *= h / window;
    return rotate_operator(acc, Axis::y, 0.5 * pi, n_spins);
}

/// Closed-form average at condition 2*omega1 = k*omega_r:
/// (3/4) G_k [cos(k gamma)(I1x I2x - I1y I2y) - sin(k gamma)(I1y I2x + I1x I2y)]
inline Operator average_dipolar_closed(const DipolarCoupling& c, int k, int n_spins = 2) {
    if (k != 1 && k != 2) throw argument_error("average_dipolar_closed: k must be 1 or 2");
    if (n_spins != 2) throw argument_error("average_dipolar_closed: two-spin result only");
    const double gk = recoupling_condition(c, k).g_coefficient;
    const Operator x1 = spin_operator(Axis::x, 0, 2), x2 = spin_operator(Axis::x, 1, 2);
    const Operator y1 = spin_operator(Axis::y, 0, 2), y2 = spin_operator(Axis::y, 1, 2);
    const double a = k * c.gamma_d;
    return 0.75 * gk * (std::cos(a) * (x1 * x2 - y1 * y2) - std::sin(a) * (y1 * x2 + x1 * y2));
}

/// Static check: lhs = numeric nutating-frame average of the static pair term
/// over one omega1 period (no toggle); rhs = -(1/2) * (pi/2 y-rotation of it).
inline std::pair<Operator, Operator> static_average_check(const DipolarCoupling& c, double omega1) {
    if (!(omega1 > 0.0)) throw argument_error("static_average_check: omega1 must be positive");
    const int n_spins = 2;
    DipolarCoupling c01 = c;
    c01.site_i = 0; c01.site_j = 1;
    const Operator h_static = dipolar_coefficient(c01, 0.0, 0.0, true) *
                              dipolar_pair_operator(0, 1, n_spins);

    const double window = two_pi / omega1;
    const long steps = 4000; // 2000 per period of the fastest component (2*omega1)
    const double h = window / double(steps);
    const detail::NutatingRotation rot(n_spins);
    Operator acc = Operator::Zero(h_static.rows(), h_static.cols());
    for (long k = 0; k <= steps; ++k) {
        const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
        const Operator u = rot.u_plus(omega1, double(k) * h);
        acc += w * (u * h_static * u.adjoint());
    }
    acc *= h / window;
    return {acc, -0.5 * rotate_operator(h_static, Axis::y, 0.5 * pi, n_spins)};
}

// --- cached builders for propagation loops --------------------------------

/// Collective operators prebuilt for one register size.
struct CollectiveOps {
    int n_spins;
    Operator ix, iy, iz;

    explicit CollectiveOps(int n)
        : n_spins(n),
          ix(collective_operator(Axis::x, n)),
          iy(collective_operator(Axis::y, n)),
          iz(collective_operator(Axis::z, n)) {}
};

/// Dipolar pair operators built once; evaluation per time point is a scalar
/// blend.
struct DipolarTerms {
    std::vector<DipolarCoupling> couplings;
    std::vector<Operator> pair_ops;
    double omega_r = 0.0;
    bool static_mode = false;

    DipolarTerms(const SpinSystem& sys, double omega_r_, bool static_mode_)
        : omega_r(omega_r_), static_mode(static_mode_) {
        sys.validate();
        for (const auto& c : sys.couplings) {
            couplings.push_back(c);
            pair_ops.push_back(dipolar_pair_operator(c.site_i, c.site_j, sys.n_spins));
        }
    }

    void add_to(Operator& h, double t) const {
        for (std::size_t i = 0; i < couplings.size(); ++i)
            h += dipolar_coefficient(couplings[i], omega_r, t, static_mode) * pair_ops[i];
    }
};

} // namespace spinsim
