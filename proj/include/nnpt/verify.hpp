#pragma once

/**
 * @file verify.hpp
 * @brief Self-checks run on demand: network Taylor coefficients against
 *        finite differences, and the combinatorial tables against direct
 *        enumeration.
 */

#include "nnpt/combin.hpp"
#include "nnpt/mlp.hpp"
#include "nnpt/numkit.hpp"
#include "nnpt/taylor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace nnpt {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;     // measured quantity (e.g. max relative error)
    double tolerance = 0.0; // limit it was compared against
    std::string detail;
};

namespace detail {

inline Mlp random_check_net(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> depth(2, 4), width(1, 8), in(1, 6), act(0, 1);
    const int L = depth(rng);
    std::vector<std::size_t> dims{static_cast<std::size_t>(in(rng))};
    for (int l = 1; l < L; ++l) dims.push_back(static_cast<std::size_t>(width(rng)));
    dims.push_back(1);
    const ActivationKind kind = act(rng) ? ActivationKind::Gelu : ActivationKind::Tanh;
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ub(-0.3, 0.3);
    std::vector<DenseMatrix> ws;
    std::vector<Vector> bs;
    std::vector<Activation> acts;
    for (std::size_t l = 1; l < dims.size(); ++l) {
        DenseMatrix w(dims[l], dims[l - 1]);
        const double s = 1.0 / std::sqrt(static_cast<double>(dims[l - 1]));
        for (double& v : w.data()) v = s * nd(rng);
        Vector b(dims[l], 0.0);
        if (l + 1 < dims.size())
            for (double& v : b) v = ub(rng);
        ws.push_back(std::move(w));
        bs.push_back(std::move(b));
        acts.emplace_back(l + 1 < dims.size() ? kind : ActivationKind::Identity);
    }
    return Mlp(dims, std::move(ws), std::move(bs), std::move(acts));
}

/// Central differences at h and h/2 combined to cancel the O(h^2) term.
/// The remaining error is O(h^4), so the steps are larger than the plain
/// defaults to keep round-off down.
inline double fd_extrapolated(const ScalarField& f, std::span<const double> x0, std::span<const std::size_t> idx) {
    const double h = idx.size() >= 3 ? 1e-2 : 1e-3;
    return (4.0 * finite_diff(f, x0, idx, h / 2) - finite_diff(f, x0, idx, h)) / 3.0;
}

} // namespace detail

/**
 * Compares network_taylor up to third order with finite differences on
 * `n_nets` random networks (2-4 layers, widths <= 8, inputs <= 6, tanh or
 * GELU). Relative errors use an absolute floor of 1e-8.
 */
inline std::vector<CheckResult> verify_derivatives(int n_nets = 30, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.5);
    double worst[3] = {0.0, 0.0, 0.0};
    const double tol[3] = {1e-4, 1e-4, 1e-3};
    for (int t = 0; t < n_nets; ++t) {
        const Mlp net = detail::random_check_net(rng);
        Vector x0(net.input_dim());
        for (double& v : x0) v = nd(rng);
        const auto tc = network_taylor(net, x0, 3);
        const ScalarField f = [&](std::span<const double> x) { return predict(net, x); };
        const std::size_t h0 = net.input_dim();
        auto rel = [](double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-8); };
        for (std::size_t a = 0; a < h0; ++a) {
            const std::size_t i1[] = {a};
            worst[0] = std::max(worst[0], rel(tc.gradient[a], detail::fd_extrapolated(f, x0, i1)));
            for (std::size_t b = a; b < h0; ++b) {
                const std::size_t i2[] = {a, b};
                worst[1] = std::max(worst[1], rel(tc.hessian->at({a, b}), detail::fd_extrapolated(f, x0, i2)));
                for (std::size_t c = b; c < h0; ++c) {
                    const std::size_t i3[] = {a, b, c};
                    worst[2] = std::max(worst[2], rel(tc.third->at({a, b, c}), detail::fd_extrapolated(f, x0, i3)));
                }
            }
        }
    }
    std::vector<CheckResult> out;
    const char* names[] = {"taylor order 1 vs finite differences", "taylor order 2 vs finite differences",
                           "taylor order 3 vs finite differences"};
    for (int o = 0; o < 3; ++o)
        out.push_back({names[o], worst[o] < tol[o], worst[o], tol[o], std::to_string(n_nets) + " random networks"});
    return out;
}

/// Partition, block-assignment and adjacency-set checks against direct enumeration.
inline std::vector<CheckResult> verify_combinatorics() {
    std::vector<CheckResult> out;
    {
        // p(N) for N = 1..8.
        const std::size_t p[] = {1, 2, 3, 5, 7, 11, 15, 22};
        bool ok = true;
        for (int n = 1; n <= 8; ++n) ok = ok && partitions(n).size() == p[n - 1];
        out.push_back({"partition counts p(N), N <= 8", ok, ok ? 0.0 : 1.0, 0.0, ""});
    }
    {
        bool ok = true;
        for (int n = 1; n <= 6; ++n)
            for (const auto& pi : partitions(n))
                ok = ok && static_cast<std::int64_t>(block_assignments(n, pi).size()) == factorial(n) / symmetry_factor(pi);
        out.push_back({"block assignments = N!/eps, N <= 6", ok, ok ? 0.0 : 1.0, 0.0, ""});
    }
    for (int n = 1; n <= 5; ++n) {
        const auto ext = enumerate_adjacency(n);
        std::set<AdjacencyMatrix> fast(ext.begin(), ext.end());
        std::set<AdjacencyMatrix> slow;
        std::vector<std::pair<int, int>> slots;
        for (int i = 1; i <= n; ++i)
            for (int j = i + 1; j <= n; ++j) slots.emplace_back(i, j);
        AdjacencyMatrix a(n);
        std::function<void(std::size_t)> rec = [&](std::size_t s) {
            if (s == slots.size()) {
                if (is_allowed(a)) slow.insert(a);
                return;
            }
            for (int v = 0; v < n; ++v) {
                a(slots[s].first, slots[s].second) = v;
                rec(s + 1);
            }
            a(slots[s].first, slots[s].second) = 0;
        };
        rec(0);
        int max_alpha = 0;
        for (const auto& m : ext) max_alpha = std::max(max_alpha, alpha(m));
        const bool ok = fast.size() == ext.size() && fast == slow && max_alpha == n - 1;
        out.push_back({"adjacency set N=" + std::to_string(n) + " (|A|=" + std::to_string(ext.size()) + ")", ok,
                       static_cast<double>(ext.size()), static_cast<double>(slow.size()),
                       "extension vs filter, max alpha " + std::to_string(max_alpha)});
    }
    return out;
}

} // namespace nnpt
