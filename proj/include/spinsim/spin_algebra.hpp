#pragma once

// Spin-1/2 product-basis operators and Hermitian-generator exponentials.
//
// Conventions used throughout:
//   * site 0 is the leftmost tensor factor (most significant qubit of the
//     basis index), basis bit 0 = |up> (m = +1/2);
//   * expm_skew(h, t) = exp(-i h t);
//   * rotate_operator(a, axis, theta) = R a R^dag with R = exp(-i theta I_axis),
//     so rotate_operator(I_z, y, pi/2) = +I_x.

#include <complex>
#include <string>

#include <Eigen/Dense>

#include "spinsim/errors.hpp"

namespace spinsim {

using Complex  = std::complex<double>;
using Operator = Eigen::MatrixXcd;

enum class Axis { x, y, z };

inline const char* axis_name(Axis a) {
    switch (a) {
        case Axis::x: return "x";
        case Axis::y: return "y";
        default:      return "z";
    }
}

inline void require_square_pow2(const Operator& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() < 2 || (a.rows() & (a.rows() - 1)) != 0)
        throw argument_error(std::string(who) + ": operator dimension must be a power of two, got " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
}

inline bool is_hermitian(const Operator& a, double rel_tol = 1e-12) {
    double scale = std::max(1.0, a.norm());
    return (a - a.adjoint()).norm() <= rel_tol * scale;
}

/// Frobenius distance of U U^dag from the identity.
inline double unitarity_defect(const Operator& u) {
    return (u * u.adjoint() - Operator::Identity(u.rows(), u.cols())).norm();
}

/// Single-site spin-1/2 operator I_axis at `site` embedded in an n_spins register.
inline Operator spin_operator(Axis axis, int site, int n_spins) {
    if (n_spins < 1)
        throw argument_error("spin_operator: n_spins must be >= 1, got " + std::to_string(n_spins));
    if (site < 0 || site >= n_spins)
        throw argument_error("spin_operator: site " + std::to_string(site) +
                             " out of range for n_spins = " + std::to_string(n_spins));

    const Eigen::Index dim = Eigen::Index(1) << n_spins;
    const Eigen::Index mask = Eigen::Index(1) << (n_spins - 1 - site); // site 0 = leftmost factor
    Operator op = Operator::Zero(dim, dim);
    for (Eigen::Index b = 0; b < dim; ++b) {
        const bool down = (b & mask) != 0;
        switch (axis) {
            case Axis::z: op(b, b) = down ? -0.5 : 0.5; break;
            case Axis::x: op(b ^ mask, b) = 0.5; break;
            case Axis::y: op(b ^ mask, b) = down ? Complex(0, -0.5) : Complex(0, 0.5); break;
        }
    }
    return op;
}

/// Sum of I_axis over all sites.
inline Operator collective_operator(Axis axis, int n_spins) {
    Operator op = spin_operator(axis, 0, n_spins);
    for (int s = 1; s < n_spins; ++s) op += spin_operator(axis, s, n_spins);
    return op;
}

namespace detail {

template <typename Mat>
Mat expm_skew_eig(const Mat& h, double t) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    if (es.info() != Eigen::Success)
        throw numeric_error("expm_skew: eigendecomposition failed");
    const auto& v = es.eigenvectors();
    auto phases = (Complex(0, -t) * es.eigenvalues().template cast<Complex>().array()).exp();
    return v * phases.matrix().asDiagonal() * v.adjoint();
}

} // namespace detail

/// exp(-i h t) for Hermitian h, via eigendecomposition (exactly unitary up to roundoff).
inline Operator expm_skew(const Operator& h, double t) {
    if (h.rows() != h.cols())
        throw argument_error("expm_skew: matrix must be square");
    if (!is_hermitian(h, 1e-10))
        throw numeric_error("expm_skew: generator is not Hermitian within tolerance");
    // Fixed-size paths keep the propagation hot loop off the heap.
    if (h.rows() == 2) return detail::expm_skew_eig<Eigen::Matrix2cd>(h, t);
    if (h.rows() == 4) return detail::expm_skew_eig<Eigen::Matrix4cd>(h, t);
    return detail::expm_skew_eig<Operator>(h, t);
}

/// R a R^dag with R = exp(-i angle * collective I_axis).
inline Operator rotate_operator(const Operator& a, Axis axis, double angle, int n_spins) {
    const Eigen::Index dim = Eigen::Index(1) << n_spins;
    if (a.rows() != dim || a.cols() != dim)
        throw argument_error("rotate_operator: operator is " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " but n_spins = " + std::to_string(n_spins));
    Operator r = expm_skew(collective_operator(axis, n_spins), angle);
    return r * a * r.adjoint();
}

} // namespace spinsim
