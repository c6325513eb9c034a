#pragma once

/**
 * @file taylor.hpp
 * @brief Exact higher-order derivatives of an Mlp built from layer
 *        propagators and arborescence sums.
 *
 * Notation: D^(l,p)_nm = w^(l+1)_nm * a^(l)(p)(z^(l)_m) is the propagator of
 * order p leaving layer l, and Delta^(l,N)_{m k1..kN} is the N-th input
 * derivative of the pre-activation z^(l)_m. Layer 0 is the input, treated as
 * an identity-activated layer with z^(0) = x.
 */

#include "nnpt/combin.hpp"
#include "nnpt/errors.hpp"
#include "nnpt/mlp.hpp"
#include "nnpt/numkit.hpp"
#include "nnpt/parallel.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace nnpt {

// ---------------------------------------------------------------------------
// Propagators
// ---------------------------------------------------------------------------

class PropagatorSet {
public:
    PropagatorSet() = default;

    PropagatorSet(const Mlp& net, ForwardTrace trace, int p_max) : trace_(std::move(trace)), p_max_(p_max) {
        const std::size_t L = net.num_layers();
        if (trace_.num_layers() != L) throw ShapeError("propagators: trace does not belong to this network");
        if (p_max < 0) throw std::invalid_argument("propagators: p_max must be >= 0");
        d_.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            const Activation& act = net.layer_activation(l);
            if (l > 0 && p_max > act.max_order())
                throw UnsupportedOrder("propagators: order " + std::to_string(p_max) + " exceeds layer " +
                                       std::to_string(l) + " max_order " + std::to_string(act.max_order()));
            for (int p = 0; p <= p_max; ++p) d_[l].push_back(build(net, l, p));
        }
    }

    /// D^(l,p), shape H_{l+1} x H_l.
    const DenseMatrix& operator()(std::size_t l, int p) const {
        if (p < 0 || p > p_max_)
            throw UnsupportedOrder("propagator order " + std::to_string(p) + " not cached (p_max " +
                                   std::to_string(p_max_) + ")");
        return d_.at(l).at(static_cast<std::size_t>(p));
    }

    int p_max() const noexcept { return p_max_; }
    std::size_t num_links() const noexcept { return d_.size(); }
    const ForwardTrace& trace() const noexcept { return trace_; }

    /// Recomputes one propagator from the network and the cached trace.
    DenseMatrix build(const Mlp& net, std::size_t l, int p) const {
        const Activation& act = net.layer_activation(l);
        const DenseMatrix& w = net.weight(l + 1);
        DenseMatrix out(w.rows(), w.cols());
        Vector scale(w.cols());
        for (std::size_t m = 0; m < w.cols(); ++m) {
            // Layer 0 is the identity; its derivatives beyond first order vanish.
            scale[m] = (l == 0 && p > act.max_order()) ? 0.0 : act.deriv(p, trace_.z[l][m]);
        }
        for (std::size_t n = 0; n < w.rows(); ++n)
            for (std::size_t m = 0; m < w.cols(); ++m) out(n, m) = w(n, m) * scale[m];
        return out;
    }

private:
    ForwardTrace trace_;
    int p_max_ = 0;
    std::vector<std::vector<DenseMatrix>> d_;
};

inline PropagatorSet propagators(const Mlp& net, const ForwardTrace& trace, int p_max) {
    return PropagatorSet(net, trace, p_max);
}

// ---------------------------------------------------------------------------
// Column-indexed neuron matrices. Rows are neurons of some layer; columns
// enumerate input-index tuples (k_v for every vertex v in `verts`), row-major
// with verts[0] most significant. `verts` is always sorted.
// ---------------------------------------------------------------------------

namespace detail {

struct KMatrix {
    std::vector<int> verts;
    DenseMatrix m;
};

/// Row-wise product of two KMatrices over disjoint vertex sets; the result's
/// columns run over the merged (sorted) vertex set.
inline KMatrix row_kron(const KMatrix& a, const KMatrix& b, std::size_t dim) {
    if (a.m.rows() != b.m.rows()) throw ShapeError("row_kron: row mismatch");
    KMatrix out;
    std::merge(a.verts.begin(), a.verts.end(), b.verts.begin(), b.verts.end(), std::back_inserter(out.verts));
    const std::size_t nv = out.verts.size();
    const std::size_t ncols = ipow(dim, nv);
    std::vector<std::size_t> col_a(ncols), col_b(ncols);
    std::vector<std::size_t> digit(nv);
    for (std::size_t j = 0; j < ncols; ++j) {
        std::size_t rem = j;
        for (std::size_t p = nv; p-- > 0;) {
            digit[p] = rem % dim;
            rem /= dim;
        }
        std::size_t ia = 0, ib = 0;
        std::size_t pa = 0;
        for (std::size_t p = 0; p < nv; ++p) {
            if (pa < a.verts.size() && a.verts[pa] == out.verts[p]) {
                ia = ia * dim + digit[p];
                ++pa;
            } else {
                ib = ib * dim + digit[p];
            }
        }
        col_a[j] = ia;
        col_b[j] = ib;
    }
    out.m = DenseMatrix(a.m.rows(), ncols);
    for (std::size_t r = 0; r < a.m.rows(); ++r) {
        auto ra = a.m.row(r);
        auto rb = b.m.row(r);
        auto ro = out.m.row(r);
        for (std::size_t j = 0; j < ncols; ++j) ro[j] = ra[col_a[j]] * rb[col_b[j]];
    }
    return out;
}

/// Groups of columns that are permutations of one another (for order-N
/// tuples over `dim` values), used to symmetrize over input indices.
inline std::vector<std::vector<std::size_t>> permutation_orbits(std::size_t order, std::size_t dim) {
    std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
    const std::size_t ncols = ipow(dim, order);
    std::vector<std::size_t> t(order);
    for (std::size_t j = 0; j < ncols; ++j) {
        std::size_t rem = j;
        for (std::size_t p = order; p-- > 0;) {
            t[p] = rem % dim;
            rem /= dim;
        }
        auto key = t;
        std::sort(key.begin(), key.end());
        groups[key].push_back(j);
    }
    std::vector<std::vector<std::size_t>> out;
    for (auto& [k, v] : groups) out.push_back(std::move(v));
    return out;
}

inline void symmetrize_columns(DenseMatrix& m, std::size_t order, std::size_t dim) {
    if (order <= 1) return;
    const auto orbits = permutation_orbits(order, dim);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (const auto& orb : orbits) {
            if (orb.size() == 1) continue;
            double s = 0.0;
            for (auto j : orb) s += row[j];
            s /= static_cast<double>(orb.size());
            for (auto j : orb) row[j] = s;
        }
    }
}

/// Decomposes a flat column index into `order` digits base `dim`.
inline void split_index(std::size_t flat, std::size_t dim, std::span<std::size_t> digits) {
    for (std::size_t p = digits.size(); p-- > 0;) {
        digits[p] = flat % dim;
        flat /= dim;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Delta tensors
// ---------------------------------------------------------------------------

/// Delta^(l,N): rows are the neurons m of layer l, columns the input tuples
/// (k1..kN) in row-major order. Symmetric in the input indices.
struct DeltaTensor {
    std::size_t layer = 0;
    std::size_t order = 0;
    std::size_t input_dim = 0;
    DenseMatrix data;

    double at(std::size_t m, std::initializer_list<std::size_t> ks) const {
        if (ks.size() != order) throw ShapeError("DeltaTensor: wrong number of input indices");
        std::size_t col = 0;
        for (auto k : ks) col = col * input_dim + k;
        return data(m, col);
    }
};

/// Delta^(l,1) = D^(l-1,1) ... D^(1,1) w^(1), shape H_l x H_0.
inline DenseMatrix delta_chain(const PropagatorSet& props, const Mlp& net, std::size_t l) {
    if (l < 1 || l > net.num_layers()) throw std::out_of_range("delta_chain: layer out of range");
    DenseMatrix acc = net.weight(1);
    for (std::size_t i = 1; i < l; ++i) acc = matmul(props(i, 1), acc);
    return acc;
}

/**
 * Value of one arborescence at layer l, without the saturation gate.
 *
 * Vertices are processed from N down to 1. For vertex c, S[mask] holds the
 * partial chain of c at the current layer, where `mask` marks which of c's
 * propagators have already been placed on a link below. Advancing one link
 * either extends the chain with a first-order propagator or places one
 * outstanding propagator b, whose order is 1 + n_bc and whose children's
 * values at that layer are multiplied in neuron-wise. Propagators of one
 * vertex therefore sit on distinct links, in any order.
 *
 * Returns H_l x H_0^N with columns ordered by vertex id. If the tree needs
 * more links than are available the result is exactly zero.
 */
inline DenseMatrix arborescence_value(const PropagatorSet& props, const Mlp& net, const AdjacencyMatrix& a,
                                      std::size_t l) {
    using detail::KMatrix;
    const int n = a.size();
    const std::size_t h0 = net.input_dim();
    if (l < 1 || l > net.num_layers()) throw std::out_of_range("arborescence_value: layer out of range");

    // values[c][i]: full value of vertex c's subtree at layer i (1..l).
    std::vector<std::vector<std::optional<KMatrix>>> values(static_cast<std::size_t>(n) + 1);

    for (int c = n; c >= 1; --c) {
        const int nprops = a.out_propagators(c);
        std::vector<std::vector<int>> kids(static_cast<std::size_t>(nprops) + 1);
        for (int j = 1; j <= n; ++j)
            if (a(c, j) > 0) kids[static_cast<std::size_t>(a(c, j))].push_back(j);

        const std::size_t nmask = std::size_t{1} << nprops;
        const std::size_t full = nmask - 1;
        const std::size_t top = c == 1 ? l : l - 1; // children are only read below the root's layer
        auto& vc = values[static_cast<std::size_t>(c)];
        vc.assign(l + 1, std::nullopt);

        std::vector<std::optional<KMatrix>> s(nmask);
        s[0] = KMatrix{{c}, net.weight(1)};
        if (top >= 1) vc[1] = s[full];

        for (std::size_t i = 1; i < top; ++i) {
            std::vector<std::optional<KMatrix>> next(nmask);
            for (std::size_t mask = 0; mask < nmask; ++mask) {
                if (s[mask]) {
                    KMatrix ext{s[mask]->verts, matmul(props(i, 1), s[mask]->m)};
                    next[mask] = std::move(ext);
                }
                for (int b = 1; b <= nprops; ++b) {
                    const std::size_t bit = std::size_t{1} << (b - 1);
                    if (!(mask & bit) || !s[mask ^ bit]) continue;
                    std::optional<KMatrix> joined = *s[mask ^ bit];
                    for (int kid : kids[static_cast<std::size_t>(b)]) {
                        const auto& kv = values[static_cast<std::size_t>(kid)][i];
                        if (!kv) {
                            joined.reset();
                            break;
                        }
                        joined = detail::row_kron(*joined, *kv, h0);
                    }
                    if (!joined) continue;
                    const int order = 1 + static_cast<int>(kids[static_cast<std::size_t>(b)].size());
                    DenseMatrix placed = matmul(props(i, order), joined->m);
                    if (next[mask])
                        next[mask]->m += placed;
                    else
                        next[mask] = KMatrix{joined->verts, std::move(placed)};
                }
            }
            s = std::move(next);
            vc[i + 1] = s[full];
        }
    }

    const auto& root = values[1][l];
    if (!root) return DenseMatrix(net.width(l), ipow(h0, static_cast<std::size_t>(n)));
    return root->m;
}

/// Delta^(l,N) as the gated sum over all allowed adjacency matrices.
inline DeltaTensor delta(const PropagatorSet& props, const Mlp& net, std::size_t l, std::size_t order) {
    if (order < 1) throw std::invalid_argument("delta: order must be >= 1");
    if (l < 1 || l > net.num_layers()) throw std::out_of_range("delta: layer out of range");
    const std::size_t h0 = net.input_dim();
    DeltaTensor out{l, order, h0, DenseMatrix(net.width(l), ipow(h0, order))};
    for (const auto& a : enumerate_adjacency(static_cast<int>(order))) {
        if (step_fn(static_cast<long>(l) - alpha(a)) == 0) continue;
        out.data += arborescence_value(props, net, a, l);
    }
    detail::symmetrize_columns(out.data, order, h0);
    return out;
}

namespace detail {

/// Delta^(l,q) for q = 1..n_max; at l = 0 this is the identity / zero.
inline std::vector<DenseMatrix> delta_stack(const PropagatorSet& props, const Mlp& net, std::size_t l,
                                            std::size_t n_max) {
    std::vector<DenseMatrix> out(n_max + 1);
    const std::size_t h0 = net.input_dim();
    for (std::size_t q = 1; q <= n_max; ++q) {
        if (l == 0)
            out[q] = q == 1 ? DenseMatrix::identity(h0) : DenseMatrix(h0, ipow(h0, q));
        else
            out[q] = delta(props, net, l, q).data;
    }
    return out;
}

/// Neuron-wise product over blocks: coef(m, k1..kN) = prod_i Delta^(|B_i|)(m, k_{B_i}).
/// `pieces[i]` must have H_0^{|B_i|} columns ordered by the block's (sorted) entries.
inline DenseMatrix block_product(const std::vector<const DenseMatrix*>& pieces, const BlockAssignment& blocks,
                                 std::size_t n, std::size_t h0) {
    const std::size_t rows = pieces.front()->rows();
    const std::size_t ncols = ipow(h0, n);
    std::vector<std::vector<std::size_t>> sub(blocks.size(), std::vector<std::size_t>(ncols));
    std::vector<std::size_t> digits(n);
    for (std::size_t j = 0; j < ncols; ++j) {
        split_index(j, h0, digits);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            std::size_t c = 0;
            for (int v : blocks[b]) c = c * h0 + digits[static_cast<std::size_t>(v - 1)];
            sub[b][j] = c;
        }
    }
    DenseMatrix out(rows, ncols, 1.0);
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t r = 0; r < rows; ++r) {
            auto src = pieces[b]->row(r);
            auto dst = out.row(r);
            for (std::size_t j = 0; j < ncols; ++j) dst[j] *= src[sub[b][j]];
        }
    return out;
}

} // namespace detail

/**
 * N-th input derivative of D^(l,p): tensor of shape {H_{l+1}, H_l, H_0 x N}.
 *
 * Sum over c = 1..N of D^(l,p+c) times, for each partition of N into c
 * parts and each distinct split of the input indices into blocks of those
 * sizes, the neuron-wise product of the corresponding Delta tensors.
 */
inline DenseTensor propagator_derivative(const PropagatorSet& props, const Mlp& net, std::size_t l, int p,
                                         std::size_t n) {
    if (n < 1) throw std::invalid_argument("propagator_derivative: N must be >= 1");
    if (l >= net.num_layers()) throw std::out_of_range("propagator_derivative: layer out of range");
    const std::size_t h0 = net.input_dim();
    const std::size_t hout = net.width(l + 1), hin = net.width(l);
    const auto deltas = detail::delta_stack(props, net, l, n);
    const std::size_t ncols = ipow(h0, n);

    std::vector<std::size_t> shape{hout, hin};
    shape.insert(shape.end(), n, h0);
    DenseTensor out(shape);

    for (int c = 1; c <= static_cast<int>(n); ++c) {
        const DenseMatrix& d = props(l, p + c);
        DenseMatrix coef(hin, ncols);
        for (const auto& pi : partitions(static_cast<int>(n), c))
            for (const auto& blocks : block_assignments(static_cast<int>(n), pi)) {
                std::vector<const DenseMatrix*> pieces;
                for (const auto& blk : blocks) pieces.push_back(&deltas[blk.size()]);
                coef += detail::block_product(pieces, blocks, n, h0);
            }
        for (std::size_t i = 0; i < hout; ++i)
            for (std::size_t m = 0; m < hin; ++m) {
                const double dim = d(i, m);
                if (dim == 0.0) continue;
                double* dst = out.data().data() + (i * hin + m) * ncols;
                auto src = coef.row(m);
                for (std::size_t j = 0; j < ncols; ++j) dst[j] += dim * src[j];
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network Taylor coefficients
// ---------------------------------------------------------------------------

struct TaylorCoeffs {
    Vector x0;
    double value = 0.0;
    Vector gradient;
    std::optional<SymTensor> hessian;
    std::optional<SymTensor> third;

    int order() const { return third ? 3 : hessian ? 2 : gradient.empty() ? 0 : 1; }
};

inline constexpr int kMaxTaylorOrder = 3;

namespace detail {

/// Raw (unsymmetrized) order-N derivative of output neuron `out` at the
/// trace point: sum over m of the N-th derivative of D^(L-1,0)_{out,m}.
inline Vector output_derivative(const PropagatorSet& props, const Mlp& net, std::size_t n, std::size_t out) {
    const std::size_t l = net.num_layers() - 1;
    const DenseTensor pd = propagator_derivative(props, net, l, 0, n);
    const std::size_t hin = net.width(l);
    const std::size_t ncols = ipow(net.input_dim(), n);
    Vector acc(ncols, 0.0);
    for (std::size_t m = 0; m < hin; ++m) {
        const double* src = pd.data().data() + (out * hin + m) * ncols;
        for (std::size_t j = 0; j < ncols; ++j) acc[j] += src[j];
    }
    return acc;
}

} // namespace detail

/// Value and input derivatives up to `order` (<= 3) of output neuron `out` at x0.
inline TaylorCoeffs network_taylor(const Mlp& net, std::span<const double> x0, int order, std::size_t out = 0) {
    if (order < 0 || order > kMaxTaylorOrder)
        throw UnsupportedOrder("network_taylor: order must be in 0..3");
    if (out >= net.output_dim()) throw std::out_of_range("network_taylor: output index");
    const std::size_t h0 = net.input_dim();
    auto trace = forward(net, x0);
    TaylorCoeffs tc;
    tc.x0.assign(x0.begin(), x0.end());
    tc.value = trace.output()[out];
    if (order == 0) return tc;
    const PropagatorSet props(net, std::move(trace), order);

    tc.gradient = detail::output_derivative(props, net, 1, out);
    if (order >= 2) {
        DenseTensor raw({h0, h0});
        raw.data() = detail::output_derivative(props, net, 2, out);
        tc.hessian = SymTensor::symmetrize(raw);
    }
    if (order >= 3) {
        DenseTensor raw({h0, h0, h0});
        raw.data() = detail::output_derivative(props, net, 3, out);
        tc.third = SymTensor::symmetrize(raw);
    }
    return tc;
}

/**
 * One graph term of the order-N output derivative: the propagator order c,
 * the block split of the input indices, and one arborescence per block.
 * `gate` is the product of the blocks' saturation gates; `ungated` is the
 * term evaluated regardless of the gate, `value` = gate * ungated.
 */
struct GraphTerm {
    int c = 0;
    Partition partition;
    BlockAssignment blocks;
    std::vector<AdjacencyMatrix> trees;
    int gate = 1;
    Vector ungated;
    Vector value;
};

/// Term-by-term breakdown of the order-N derivative of output neuron `out`.
inline std::vector<GraphTerm> network_taylor_terms(const Mlp& net, std::span<const double> x0, int n,
                                                   std::size_t out = 0) {
    if (n < 1 || n > kMaxTaylorOrder) throw UnsupportedOrder("network_taylor_terms: order must be in 1..3");
    const std::size_t h0 = net.input_dim();
    const std::size_t l = net.num_layers() - 1;
    const PropagatorSet props(net, forward(net, x0), n);
    const std::size_t ncols = ipow(h0, static_cast<std::size_t>(n));

    // Per-size arborescences with their (ungated) values at layer l.
    std::vector<std::vector<std::pair<AdjacencyMatrix, DenseMatrix>>> trees(static_cast<std::size_t>(n) + 1);
    for (int q = 1; q <= n; ++q)
        for (const auto& a : enumerate_adjacency(q)) trees[static_cast<std::size_t>(q)].emplace_back(a, arborescence_value(props, net, a, l));

    std::vector<GraphTerm> terms;
    for (int c = 1; c <= n; ++c) {
        const DenseMatrix& d = props(l, c);
        for (const auto& pi : partitions(n, c))
            for (const auto& blocks : block_assignments(n, pi)) {
                // Cartesian product over one tree choice per block.
                std::vector<std::size_t> choice(blocks.size(), 0);
                for (;;) {
                    GraphTerm t;
                    t.c = c;
                    t.partition = pi;
                    t.blocks = blocks;
                    std::vector<const DenseMatrix*> pieces;
                    for (std::size_t b = 0; b < blocks.size(); ++b) {
                        const auto& [a, v] = trees[blocks[b].size()][choice[b]];
                        t.trees.push_back(a);
                        t.gate *= step_fn(static_cast<long>(l) - alpha(a));
                        pieces.push_back(&v);
                    }
                    const DenseMatrix coef = detail::block_product(pieces, blocks, static_cast<std::size_t>(n), h0);
                    t.ungated.assign(ncols, 0.0);
                    for (std::size_t m = 0; m < coef.rows(); ++m) {
                        const double dm = d(out, m);
                        auto src = coef.row(m);
                        for (std::size_t j = 0; j < ncols; ++j) t.ungated[j] += dm * src[j];
                    }
                    t.value = t.ungated;
                    if (t.gate == 0) std::fill(t.value.begin(), t.value.end(), 0.0);
                    terms.push_back(std::move(t));

                    std::size_t b = 0;
                    while (b < blocks.size() && ++choice[b] == trees[blocks[b].size()].size()) choice[b++] = 0;
                    if (b == blocks.size()) break;
                }
            }
    }
    return terms;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Entry-wise mean and population std of member coefficients.
struct EnsembleTaylor {
    TaylorCoeffs mean;
    TaylorCoeffs std;
    std::vector<TaylorCoeffs> members;
};

namespace detail {

inline void accumulate_stats(std::span<const Vector* const> xs, Vector& mean, Vector& sd) {
    const std::size_t n = xs.front()->size();
    mean.assign(n, 0.0);
    sd.assign(n, 0.0);
    Vector col(xs.size());
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < xs.size(); ++i) col[i] = (*xs[i])[j];
        const auto ms = mean_std(col);
        mean[j] = ms.mean;
        sd[j] = ms.std;
    }
}

} // namespace detail

inline EnsembleTaylor ensemble_taylor(const std::vector<Mlp>& members, std::span<const double> x0, int order,
                                      std::size_t threads = 1) {
    if (members.empty()) throw std::invalid_argument("ensemble_taylor: empty ensemble");
    EnsembleTaylor et;
    et.members.resize(members.size());
    parallel_for(members.size(), threads, [&](std::size_t i) { et.members[i] = network_taylor(members[i], x0, order); });

    et.mean.x0 = et.std.x0 = Vector(x0.begin(), x0.end());
    {
        Vector vals;
        for (const auto& m : et.members) vals.push_back(m.value);
        const auto ms = mean_std(vals);
        et.mean.value = ms.mean;
        et.std.value = ms.std;
    }
    auto stats = [&](auto get, Vector& mean, Vector& sd) {
        std::vector<const Vector*> xs;
        for (const auto& m : et.members) xs.push_back(&get(m));
        detail::accumulate_stats(xs, mean, sd);
    };
    if (order >= 1) stats([](const TaylorCoeffs& t) -> const Vector& { return t.gradient; }, et.mean.gradient, et.std.gradient);
    const std::size_t h0 = x0.size();
    if (order >= 2) {
        et.mean.hessian = SymTensor(2, h0);
        et.std.hessian = SymTensor(2, h0);
        stats([](const TaylorCoeffs& t) -> const Vector& { return t.hessian->data(); }, et.mean.hessian->data(),
              et.std.hessian->data());
    }
    if (order >= 3) {
        et.mean.third = SymTensor(3, h0);
        et.std.third = SymTensor(3, h0);
        stats([](const TaylorCoeffs& t) -> const Vector& { return t.third->data(); }, et.mean.third->data(),
              et.std.third->data());
    }
    return et;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

/// CSV `k1[,k2[,k3]],mean,std` for one order; indices are 1-based and every
/// index tuple is listed (full grid), so the file loads directly as a heatmap.
inline void write_coeffs_csv(std::ostream& os, const TaylorCoeffs& mean, const TaylorCoeffs& sd, int order) {
    const std::size_t h0 = mean.x0.size();
    if (order < 0 || order > kMaxTaylorOrder) throw UnsupportedOrder("write_coeffs_csv: order must be in 0..3");
    if (order == 0) {
        os << "mean,std\n" << detail::fmt17(mean.value) << ',' << detail::fmt17(sd.value) << '\n';
        return;
    }
    for (int i = 1; i <= order; ++i) os << 'k' << i << ',';
    os << "mean,std\n";
    const std::size_t ncols = ipow(h0, static_cast<std::size_t>(order));
    std::vector<std::size_t> t(static_cast<std::size_t>(order));
    for (std::size_t j = 0; j < ncols; ++j) {
        detail::split_index(j, h0, t);
        double mv = 0.0, sv = 0.0;
        if (order == 1) {
            mv = mean.gradient.at(t[0]);
            sv = sd.gradient.at(t[0]);
        } else {
            const auto& mt = order == 2 ? mean.hessian : mean.third;
            const auto& st = order == 2 ? sd.hessian : sd.third;
            if (!mt || !st) throw std::invalid_argument("write_coeffs_csv: coefficients of that order are missing");
            mv = mt->at(t);
            sv = st->at(t);
        }
        for (auto k : t) os << k + 1 << ',';
        os << detail::fmt17(mv) << ',' << detail::fmt17(sv) << '\n';
    }
}

inline nlohmann::json to_json(const TaylorCoeffs& tc) {
    nlohmann::json j;
    j["x0"] = tc.x0;
    j["value"] = tc.value;
    j["order"] = tc.order();
    if (!tc.gradient.empty()) j["gradient"] = tc.gradient;
    if (tc.hessian) {
        const std::size_t h0 = tc.hessian->dim();
        auto rows = nlohmann::json::array();
        for (std::size_t a = 0; a < h0; ++a) {
            Vector r(h0);
            for (std::size_t b = 0; b < h0; ++b) r[b] = tc.hessian->at({a, b});
            rows.push_back(r);
        }
        j["hessian"] = rows;
    }
    if (tc.third) j["third_packed"] = tc.third->data();
    return j;
}

inline TaylorCoeffs taylor_from_json(const nlohmann::json& j) {
    TaylorCoeffs tc;
    tc.x0 = j.at("x0").get<Vector>();
    tc.value = j.at("value").get<double>();
    if (j.contains("gradient")) tc.gradient = j.at("gradient").get<Vector>();
    const std::size_t h0 = tc.x0.size();
    if (j.contains("hessian")) {
        tc.hessian = SymTensor(2, h0);
        for (std::size_t a = 0; a < h0; ++a)
            for (std::size_t b = a; b < h0; ++b) tc.hessian->at({a, b}) = j.at("hessian").at(a).at(b).get<double>();
    }
    if (j.contains("third_packed")) {
        tc.third = SymTensor(3, h0);
        tc.third->data() = j.at("third_packed").get<Vector>();
    }
    return tc;
}

/// Mean, spread and per-member coefficients of an ensemble.
inline nlohmann::json to_json(const EnsembleTaylor& et) {
    nlohmann::json j;
    j["mean"] = to_json(et.mean);
    j["std"] = to_json(et.std);
    auto members = nlohmann::json::array();
    for (const auto& m : et.members) members.push_back(to_json(m));
    j["members"] = members;
    return j;
}

inline EnsembleTaylor ensemble_taylor_from_json(const nlohmann::json& j) {
    EnsembleTaylor et;
    et.mean = taylor_from_json(j.at("mean"));
    et.std = taylor_from_json(j.at("std"));
    for (const auto& m : j.at("members")) et.members.push_back(taylor_from_json(m));
    return et;
}

} // namespace nnpt
