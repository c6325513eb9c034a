#pragma once

/**
 * @file numkit.hpp
 * @brief Dense matrices, packed symmetric tensors, a central finite-difference
 *        oracle and one-parameter least squares.
 *
 * Everything else in the library is validated against the routines here, so
 * they are kept deliberately plain.
 */

#include "nnpt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace nnpt {

using Vector = std::vector<double>;

/// Binomial coefficient for the small arguments that occur in tensor packing.
inline std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

/// Row-major matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Vector& data() noexcept { return data_; }
    const Vector& data() const noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    DenseMatrix& operator+=(const DenseMatrix& o) {
        if (o.rows_ != rows_ || o.cols_ != cols_) throw ShapeError("DenseMatrix +=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    DenseMatrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

/// C = A * B (ikj loop order, contiguous inner loop).
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw ShapeError("matvec: shape mismatch");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        y[i] = std::inner_product(ai.begin(), ai.end(), x.begin(), 0.0);
    }
    return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// ---------------------------------------------------------------------------
// DenseTensor: flat row-major tensor with an explicit shape. Used for raw,
// unsymmetrized accumulation of derivative tensors.
// ---------------------------------------------------------------------------

class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (auto s : shape_) n *= s;
        data_.assign(n, fill);
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t offset(std::span<const std::size_t> idx) const {
        if (idx.size() != shape_.size()) throw ShapeError("DenseTensor: rank mismatch");
        std::size_t off = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) off = off * shape_[i] + idx[i];
        return off;
    }

    double& at(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }
    double& at(std::initializer_list<std::size_t> idx) {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }
    double at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }

    Vector& data() noexcept { return data_; }
    const Vector& data() const noexcept { return data_; }

private:
    std::vector<std::size_t> shape_;
    Vector data_;
};

// ---------------------------------------------------------------------------
// SymTensor
// ---------------------------------------------------------------------------

/**
 * Fully symmetric tensor of order k over `dim` indices.
 *
 * Only the entries with non-decreasing index tuples are stored, in
 * lexicographic order (combination-index order), so storage is
 * C(dim + k - 1, k). Any permutation of an index tuple addresses the same slot.
 */
class SymTensor {
public:
    SymTensor() = default;
    SymTensor(std::size_t order, std::size_t dim)
        : order_(order), dim_(dim), data_(packed_size(order, dim), 0.0) {
        if (order == 0) throw ShapeError("SymTensor: order must be >= 1");
    }

    static std::size_t packed_size(std::size_t order, std::size_t dim) {
        if (dim == 0) return 0;
        return binomial(dim + order - 1, order);
    }

    std::size_t order() const noexcept { return order_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return data_.size(); }

    /// Packed position of an arbitrary (unsorted) index tuple.
    std::size_t index_of(std::span<const std::size_t> idx) const {
        if (idx.size() != order_) throw ShapeError("SymTensor: index tuple has wrong length");
        std::size_t sorted[16];
        if (order_ > 16) throw UnsupportedOrder("SymTensor: order > 16");
        std::copy(idx.begin(), idx.end(), sorted);
        std::sort(sorted, sorted + order_);
        std::size_t rank = 0;
        std::size_t lo = 0;
        for (std::size_t p = 0; p < order_; ++p) {
            if (sorted[p] >= dim_) throw ShapeError("SymTensor: index out of range");
            const std::size_t rest = order_ - p - 1;
            // Tuples whose p-th entry is v in [lo, sorted[p]) and that share the prefix.
            for (std::size_t v = lo; v < sorted[p]; ++v) rank += binomial(dim_ - v + rest - 1, rest);
            lo = sorted[p];
        }
        return rank;
    }

    double& at(std::span<const std::size_t> idx) { return data_[index_of(idx)]; }
    double at(std::span<const std::size_t> idx) const { return data_[index_of(idx)]; }
    double& at(std::initializer_list<std::size_t> idx) {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }
    double at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }

    Vector& data() noexcept { return data_; }
    const Vector& data() const noexcept { return data_; }

    /// Calls f(tuple) for every stored (non-decreasing) tuple, in storage order.
    template <class F>
    void for_each_tuple(F&& f) const {
        if (dim_ == 0) return;
        std::vector<std::size_t> t(order_, 0);
        while (true) {
            f(std::span<const std::size_t>(t));
            std::size_t p = order_;
            while (p > 0 && t[p - 1] == dim_ - 1) --p;
            if (p == 0) break;
            const std::size_t v = t[p - 1] + 1;
            for (std::size_t q = p - 1; q < order_; ++q) t[q] = v;
        }
    }

    /// Packs a dense order-k tensor (shape dim^k) by averaging over each
    /// permutation orbit.
    static SymTensor symmetrize(const DenseTensor& dense) {
        const auto& sh = dense.shape();
        if (sh.empty()) throw ShapeError("SymTensor::symmetrize: rank 0");
        for (auto s : sh)
            if (s != sh[0]) throw ShapeError("SymTensor::symmetrize: non-cubic tensor");
        SymTensor out(sh.size(), sh[0]);
        std::vector<double> counts(out.size(), 0.0);
        std::vector<std::size_t> idx(sh.size(), 0);
        for (std::size_t flat = 0; flat < dense.size(); ++flat) {
            std::size_t rem = flat;
            for (std::size_t p = sh.size(); p-- > 0;) {
                idx[p] = rem % sh[0];
                rem /= sh[0];
            }
            const std::size_t slot = out.index_of(idx);
            out.data_[slot] += dense.data()[flat];
            counts[slot] += 1.0;
        }
        for (std::size_t i = 0; i < out.size(); ++i) out.data_[i] /= counts[i];
        return out;
    }

    /// Expands to the full dim^k dense tensor.
    DenseTensor to_dense() const {
        DenseTensor dense(std::vector<std::size_t>(order_, dim_));
        std::vector<std::size_t> idx(order_, 0);
        for (std::size_t flat = 0; flat < dense.size(); ++flat) {
            std::size_t rem = flat;
            for (std::size_t p = order_; p-- > 0;) {
                idx[p] = rem % dim_;
                rem /= dim_;
            }
            dense.data()[flat] = at(idx);
        }
        return dense;
    }

private:
    std::size_t order_ = 0;
    std::size_t dim_ = 0;
    Vector data_;
};

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

using ScalarField = std::function<double(std::span<const double>)>;

/// Default steps: 1e-4 for first and second order, 5e-3 for third.
inline double default_fd_step(std::size_t order) { return order >= 3 ? 5e-3 : 1e-4; }

/**
 * Central-difference estimate of the mixed partial derivative of f at x0.
 *
 * `multi_index` lists the (0-based) coordinates to differentiate by, with
 * repetition, e.g. {0, 0} for d^2/dx0^2. The stencil is the tensor product
 * of one central difference per entry; it is exact for polynomials of degree
 * |multi_index| + 1 and second-order accurate in `step` otherwise.
 */
inline double finite_diff(const ScalarField& f, std::span<const double> x0,
                          std::span<const std::size_t> multi_index, double step) {
    if (multi_index.size() > 3) throw UnsupportedOrder("finite_diff: at most third order");
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
    for (auto i : multi_index)
        if (i >= x0.size()) throw ShapeError("finite_diff: coordinate out of range");

    const std::size_t n = multi_index.size();
    Vector x(x0.begin(), x0.end());
    double acc = 0.0;
    for (std::uint32_t signs = 0; signs < (1u << n); ++signs) {
        std::copy(x0.begin(), x0.end(), x.begin());
        double weight = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double s = (signs >> j) & 1u ? -1.0 : 1.0;
            x[multi_index[j]] += s * step;
            weight *= s;
        }
        const double v = f(x);
        if (!std::isfinite(v)) throw NonFiniteSample("finite_diff: non-finite function value on stencil");
        acc += weight * v;
    }
    return acc / std::pow(2.0 * step, static_cast<double>(n));
}

inline double finite_diff(const ScalarField& f, std::span<const double> x0,
                          std::initializer_list<std::size_t> multi_index, double step) {
    return finite_diff(f, x0, std::span<const std::size_t>(multi_index.begin(), multi_index.size()), step);
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

/// argmin_c sum_i (c * design_i - target_i)^2.
inline double lstsq_1param(std::span<const double> design, std::span<const double> targets) {
    if (design.size() != targets.size() || design.empty())
        throw ShapeError("lstsq_1param: sequences must have the same nonzero length");
    double dd = 0.0, dt = 0.0;
    for (std::size_t i = 0; i < design.size(); ++i) {
        dd += design[i] * design[i];
        dt += design[i] * targets[i];
    }
    if (dd == 0.0) throw DegenerateFit("lstsq_1param: design vector is all zero");
    return dt / dd;
}

/// Mean and population standard deviation.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
    MeanStd r;
    if (xs.empty()) return r;
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return r;
}

} // namespace nnpt
