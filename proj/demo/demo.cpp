// Library tour: Taylor coefficients of a small network, the diagrams behind
// them, and the scattering-length oracle next to its Born expansion.

#include "nnpt/born.hpp"
#include "nnpt/combin.hpp"
#include "nnpt/mlp.hpp"
#include "nnpt/taylor.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>

using namespace nnpt;

int main() {
    // A 3 -> 5 -> 4 -> 1 GELU network and its expansion around x0.
    const Mlp net = he_init({3, 5, 4, 1}, {Activation(ActivationKind::Gelu)}, 11);
    const Vector x0{0.2, -0.4, 0.1};
    const TaylorCoeffs tc = network_taylor(net, x0, 3);

    std::printf("f(x0) = %.10f\n", tc.value);
    std::printf("gradient:");
    for (double g : tc.gradient) std::printf(" % .6f", g);
    std::printf("\nHessian:\n");
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) std::printf(" % .6f", tc.hessian->at({a, b}));
        std::printf("\n");
    }
    std::printf("d3f/dx0 dx1 dx2 = % .6f\n", tc.third->at({0, 1, 2}));

    // The same third derivative assembled from its graph terms.
    const auto terms = network_taylor_terms(net, x0, 3);
    const std::size_t col = 0 * 9 + 1 * 3 + 2;
    double sum = 0.0;
    int gated = 0;
    for (const auto& t : terms) {
        sum += t.value[col];
        gated += t.gate == 0;
    }
    std::printf("%zu graph terms (%d gated off), sum = % .6f\n\n", terms.size(), gated, sum);

    std::printf("arborescences with 3 vertices:\n");
    for (const auto& a : enumerate_adjacency(3)) std::cout << to_dot(a);

    // Square well of depth 1: oracle against the first two Born orders.
    const std::size_t h0 = 64;
    std::printf("\nsquare well, H0 = %zu\n", h0);
    std::printf("%8s %14s %14s %14s\n", "depth", "a0", "born1", "born2");
    for (double depth : {0.01, 0.1, 0.5, 1.0}) {
        const Vector u(h0, -depth);
        std::printf("%8.2f %14.8f %14.8f %14.8f\n", depth, scattering_length(u), born_approx(u, 1), born_approx(u, 2));
    }
    const double s = 1.0;
    std::printf("continuum square well, depth 1: %.8f\n", 1.0 - std::tan(s) / s);
    return 0;
}
