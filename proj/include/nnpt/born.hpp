#pragma once

/**
 * @file born.hpp
 * @brief Zero-energy S-wave scattering lengths of sampled, dimensionless
 *        potentials, and the sampled first- and second-order Born kernels.
 *
 * The radial equation is u'' = U(r) u on r in [0, 1] with u(0) = 0,
 * u'(0) = 1; the scattering length in units of the range is
 * a0 = 1 - u(1) / u'(1). Sample k (1-based) sits at r_k = k / H0.
 */

#include "nnpt/errors.hpp"
#include "nnpt/numkit.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

namespace nnpt {

/**
 * How a sample vector is turned into a potential function.
 *
 * Impulse: U(r) = sum_k (U_k / H0) delta(r - r_k), i.e. free propagation
 *   between grid points and a jump u' += U_k u(r_k) / H0 at each of them.
 *   The Born series of this potential has exactly the sampled kernels
 *   k^2/H0^3 and -k1 k2 (k1 + k2 - |k1 - k2|)/H0^5 as its first two terms.
 * Slab: U is piecewise constant, U_k on ((k-1)/H0, k/H0]. Exact for
 *   square wells but its Born kernels differ from the sampled ones at
 *   order 1/H0.
 */
enum class SamplingScheme { Impulse, Slab };

inline std::string_view to_string(SamplingScheme s) { return s == SamplingScheme::Impulse ? "impulse" : "slab"; }

inline SamplingScheme scheme_from_string(std::string_view s) {
    if (s == "impulse") return SamplingScheme::Impulse;
    if (s == "slab") return SamplingScheme::Slab;
    throw std::invalid_argument("unknown sampling scheme '" + std::string(s) + "'");
}

/// u(1) and u'(1) of the zero-energy solution.
struct ZeroEnergyState {
    double u = 0.0;
    double du = 1.0;
};

namespace detail {

inline void bound_state_check(double u, double r) {
    if (u <= 0.0)
        throw BoundStatePresent("zero-energy solution has a node at r <= " + std::to_string(r));
}

/// Advances (u, u') across a slab of width h with constant potential v.
/// Trigonometric slabs are split so that each piece spans less than a
/// quarter period; a node inside a piece then shows up as a sign change.
inline void slab_step(double& u, double& du, double v, double h, double r_end) {
    if (v < 0.0) {
        const double s = std::sqrt(-v);
        const int pieces = std::max(1, static_cast<int>(std::ceil(s * h / (0.5 * std::numbers::pi))));
        const double hp = h / pieces;
        const double c = std::cos(s * hp), sn = std::sin(s * hp);
        for (int i = 0; i < pieces; ++i) {
            const double nu = c * u + sn / s * du;
            du = -s * sn * u + c * du;
            u = nu;
            bound_state_check(u, r_end - (pieces - 1 - i) * hp);
        }
    } else if (v > 0.0) {
        const double s = std::sqrt(v);
        const double c = std::cosh(s * h), sn = std::sinh(s * h);
        const double nu = c * u + sn / s * du;
        du = s * sn * u + c * du;
        u = nu;
        bound_state_check(u, r_end);
    } else {
        u += h * du;
        bound_state_check(u, r_end);
    }
}

} // namespace detail

/**
 * Integrates the zero-energy equation through all samples.
 *
 * Throws BoundStatePresent if u has a node in (0, 1]. The transfer
 * matrices are exact for the chosen scheme.
 */
inline ZeroEnergyState zero_energy_state(std::span<const double> U, SamplingScheme scheme = SamplingScheme::Impulse) {
    if (U.empty()) throw ShapeError("scattering_length: empty potential");
    const double h = 1.0 / static_cast<double>(U.size());
    ZeroEnergyState st{0.0, 1.0};
    for (std::size_t k = 0; k < U.size(); ++k) {
        const double v = U[k];
        if (!std::isfinite(v)) throw NonFiniteSample("scattering_length: non-finite potential sample");
        const double r = static_cast<double>(k + 1) * h;
        if (scheme == SamplingScheme::Impulse) {
            st.u += h * st.du;
            detail::bound_state_check(st.u, r);
            st.du += v * h * st.u;
        } else {
            detail::slab_step(st.u, st.du, v, h, r);
        }
    }
    return st;
}

/**
 * a0 = 1 - u(1)/u'(1).
 *
 * Errors: u'(1) = 0 gives ThresholdSingularity; a node of u in (0, 1], or
 * u decreasing at r = 1 (the node then lies just outside the range, which
 * also means a bound state, and a0 > 1), gives BoundStatePresent.
 */
inline double scattering_length(std::span<const double> U, SamplingScheme scheme = SamplingScheme::Impulse) {
    const auto st = zero_energy_state(U, scheme);
    if (st.du == 0.0) throw ThresholdSingularity("scattering_length: u'(1) = 0 (bound state at threshold)");
    if (st.du < 0.0) throw BoundStatePresent("zero-energy solution turns over inside the range (node beyond r = 1)");
    return 1.0 - st.u / st.du;
}

inline double scattering_length(std::span<const double> U, std::size_t h0,
                                SamplingScheme scheme = SamplingScheme::Impulse) {
    if (U.size() != h0) throw ShapeError("scattering_length: expected " + std::to_string(h0) + " samples");
    return scattering_length(U, scheme);
}

/// Sampled Born kernels; index k is stored at position k-1.
struct BornKernels {
    std::size_t h0 = 0;
    Vector grad;      // k^2 / H0^3
    DenseMatrix hess; // -k1 k2 (k1 + k2 - |k1 - k2|) / H0^5
};

inline double born_grad_kernel(std::size_t k, std::size_t h0) {
    const double kk = static_cast<double>(k), h = static_cast<double>(h0);
    return kk * kk / (h * h * h);
}

inline double born_hess_kernel(std::size_t k1, std::size_t k2, std::size_t h0) {
    const double a = static_cast<double>(k1), b = static_cast<double>(k2), h = static_cast<double>(h0);
    return -a * b * (a + b - std::abs(a - b)) / (h * h * h * h * h);
}

inline BornKernels born_kernels(std::size_t h0) {
    if (h0 < 1) throw std::invalid_argument("born_kernels: H0 must be >= 1");
    BornKernels bk{h0, Vector(h0), DenseMatrix(h0, h0)};
    for (std::size_t k = 1; k <= h0; ++k) {
        bk.grad[k - 1] = born_grad_kernel(k, h0);
        for (std::size_t q = 1; q <= h0; ++q) bk.hess(k - 1, q - 1) = born_hess_kernel(k, q, h0);
    }
    return bk;
}

/// First- or second-order truncation of the sampled Born series.
inline double born_approx(std::span<const double> U, int order) {
    if (order != 1 && order != 2) throw UnsupportedOrder("born_approx: order must be 1 or 2");
    const auto bk = born_kernels(U.size());
    double a = dot(bk.grad, U);
    if (order == 2) {
        const Vector hu = matvec(bk.hess, U);
        a += 0.5 * dot(U, hu);
    }
    return a;
}

} // namespace nnpt
