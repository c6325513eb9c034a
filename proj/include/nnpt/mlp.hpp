#pragma once

/**
 * @file mlp.hpp
 * @brief Multilayer perceptrons with analytic activations whose derivatives
 *        are available in closed form to any requested order.
 */

#include "nnpt/errors.hpp"
#include "nnpt/numkit.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace nnpt {

enum class ActivationKind { Identity, Tanh, Gelu };

inline std::string_view to_string(ActivationKind k) {
    switch (k) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Gelu: return "gelu";
    }
    return "?";
}

inline ActivationKind activation_from_string(std::string_view s) {
    if (s == "identity") return ActivationKind::Identity;
    if (s == "tanh") return ActivationKind::Tanh;
    if (s == "gelu") return ActivationKind::Gelu;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

namespace detail {

// Polynomial helpers for the closed-form derivative recursions. Coefficients
// are stored lowest degree first.
using Poly = std::vector<double>;

inline double poly_eval(const Poly& p, double x) {
    double r = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) r = r * x + p[i];
    return r;
}

inline Poly poly_deriv(const Poly& p) {
    if (p.size() <= 1) return {0.0};
    Poly d(p.size() - 1);
    for (std::size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
    return d;
}

// d^p tanh / dx^p = T_p(t) with t = tanh(x); T_0 = t, T_{p+1} = T_p'(t) (1 - t^2).
inline std::vector<Poly> tanh_polys(int max_order) {
    std::vector<Poly> ps{{0.0, 1.0}};
    for (int p = 0; p < max_order; ++p) {
        Poly d = poly_deriv(ps.back());
        Poly next(d.size() + 2, 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            next[i] += d[i];
            next[i + 2] -= d[i];
        }
        ps.push_back(std::move(next));
    }
    return ps;
}

// GELU(x) = x Phi(x). For p >= 2, d^p GELU / dx^p = Q_p(x) phi(x) with
// Q_2 = 2 - x^2 and Q_{p+1} = Q_p' - x Q_p.
inline std::vector<Poly> gelu_polys(int max_order) {
    std::vector<Poly> ps(3);
    ps[2] = {2.0, 0.0, -1.0};
    for (int p = 2; p < max_order; ++p) {
        const Poly& q = ps.back();
        Poly d = poly_deriv(q);
        Poly next(q.size() + 1, 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) next[i] += d[i];
        for (std::size_t i = 0; i < q.size(); ++i) next[i + 1] -= q[i];
        ps.push_back(std::move(next));
    }
    return ps;
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

} // namespace detail

/**
 * An analytic activation function with exact derivatives up to `max_order`.
 */
class Activation {
public:
    static constexpr int kDefaultMaxOrder = 4;

    explicit Activation(ActivationKind kind = ActivationKind::Identity, int max_order = kDefaultMaxOrder)
        : kind_(kind), max_order_(max_order) {
        if (max_order < 4) throw std::invalid_argument("Activation: max_order must be >= 4");
        if (kind == ActivationKind::Tanh) polys_ = detail::tanh_polys(max_order);
        if (kind == ActivationKind::Gelu) polys_ = detail::gelu_polys(max_order);
    }

    ActivationKind kind() const noexcept { return kind_; }
    int max_order() const noexcept { return max_order_; }

    /// p-th derivative at x (p = 0 is the function itself).
    double deriv(int p, double x) const {
        if (p < 0 || p > max_order_)
            throw UnsupportedOrder("activation derivative of order " + std::to_string(p) +
                                   " exceeds max_order " + std::to_string(max_order_));
        switch (kind_) {
        case ActivationKind::Identity:
            return p == 0 ? x : (p == 1 ? 1.0 : 0.0);
        case ActivationKind::Tanh:
            return detail::poly_eval(polys_[static_cast<std::size_t>(p)], std::tanh(x));
        case ActivationKind::Gelu:
            if (p == 0) return x * detail::normal_cdf(x);
            if (p == 1) return detail::normal_cdf(x) + x * detail::normal_pdf(x);
            return detail::poly_eval(polys_[static_cast<std::size_t>(p)], x) * detail::normal_pdf(x);
        }
        return 0.0;
    }

    double operator()(double x) const { return deriv(0, x); }

    friend bool operator==(const Activation& a, const Activation& b) {
        return a.kind_ == b.kind_ && a.max_order_ == b.max_order_;
    }

private:
    ActivationKind kind_;
    int max_order_;
    std::vector<detail::Poly> polys_;
};

inline double activation_deriv(const Activation& act, int p, double x) { return act.deriv(p, x); }

/// Cached pre-activations z and activations y of one forward pass.
/// Index l runs over 0..L; z[0] is set equal to the input so that layer 0
/// behaves like an identity-activated layer.
struct ForwardTrace {
    Vector x;
    std::vector<Vector> z;
    std::vector<Vector> y;

    std::size_t num_layers() const noexcept { return z.empty() ? 0 : z.size() - 1; }
    const Vector& output() const { return y.back(); }
};

/**
 * Multilayer perceptron y^(l) = a^(l)(W^(l) y^(l-1) + b^(l)), l = 1..L.
 *
 * The output layer is identity-activated and bias-free. Layer l's weight
 * matrix has shape H_l x H_{l-1}.
 */
class Mlp {
public:
    Mlp() = default;

    Mlp(std::vector<std::size_t> layer_dims, std::vector<DenseMatrix> weights, std::vector<Vector> biases,
        std::vector<Activation> activations)
        : dims_(std::move(layer_dims)), weights_(std::move(weights)), biases_(std::move(biases)),
          acts_(std::move(activations)) {
        validate();
    }

    /// Number of layers L (hidden layers plus the output layer).
    std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    std::size_t width(std::size_t l) const { return dims_.at(l); }
    const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }

    /// Layer-l parameters, 1-based like the recursion they appear in.
    const DenseMatrix& weight(std::size_t l) const { return weights_.at(l - 1); }
    DenseMatrix& weight(std::size_t l) { return weights_.at(l - 1); }
    const Vector& bias(std::size_t l) const { return biases_.at(l - 1); }
    Vector& bias(std::size_t l) { return biases_.at(l - 1); }
    const Activation& activation(std::size_t l) const { return acts_.at(l - 1); }

    /// Activation applied at layer l, with layer 0 treated as the identity.
    const Activation& layer_activation(std::size_t l) const {
        static const Activation identity(ActivationKind::Identity);
        return l == 0 ? identity : acts_.at(l - 1);
    }

    /// Smallest max_order across all activations.
    int max_order() const {
        int m = 1 << 20;
        for (const auto& a : acts_) m = std::min(m, a.max_order());
        return m;
    }

    bool all_finite() const {
        for (const auto& w : weights_)
            if (!w.all_finite()) return false;
        for (const auto& b : biases_)
            for (double v : b)
                if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    void validate() const {
        if (dims_.size() < 3) throw ShapeError("Mlp: need at least one hidden layer (L >= 2)");
        const std::size_t L = dims_.size() - 1;
        if (weights_.size() != L || biases_.size() != L || acts_.size() != L)
            throw ShapeError("Mlp: per-layer parameter count does not match layer_dims");
        for (std::size_t l = 1; l <= L; ++l) {
            const auto& w = weights_[l - 1];
            if (w.rows() != dims_[l] || w.cols() != dims_[l - 1])
                throw ShapeError("Mlp: weight " + std::to_string(l) + " has shape " + std::to_string(w.rows()) +
                                 "x" + std::to_string(w.cols()));
            if (biases_[l - 1].size() != dims_[l]) throw ShapeError("Mlp: bias " + std::to_string(l) + " has wrong length");
        }
        if (acts_.back().kind() != ActivationKind::Identity)
            throw std::invalid_argument("Mlp: output layer must be identity-activated");
        for (double b : biases_.back())
            if (b != 0.0) throw std::invalid_argument("Mlp: output layer must have zero bias");
        if (!all_finite()) throw NonFiniteSample("Mlp: non-finite parameter");
    }

    std::vector<std::size_t> dims_;
    std::vector<DenseMatrix> weights_;
    std::vector<Vector> biases_;
    std::vector<Activation> acts_;
};

inline ForwardTrace forward(const Mlp& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw ShapeError("forward: input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(net.input_dim()));
    const std::size_t L = net.num_layers();
    ForwardTrace t;
    t.x.assign(x.begin(), x.end());
    t.z.resize(L + 1);
    t.y.resize(L + 1);
    t.z[0] = t.x;
    t.y[0] = t.x;
    for (std::size_t l = 1; l <= L; ++l) {
        t.z[l] = matvec(net.weight(l), t.y[l - 1]);
        const auto& b = net.bias(l);
        const auto& a = net.activation(l);
        t.y[l].resize(t.z[l].size());
        for (std::size_t n = 0; n < t.z[l].size(); ++n) {
            t.z[l][n] += b[n];
            t.y[l][n] = a(t.z[l][n]);
        }
    }
    return t;
}

/// Scalar prediction (output neuron `n`).
inline double predict(const Mlp& net, std::span<const double> x, std::size_t n = 0) {
    return forward(net, x).output().at(n);
}

/**
 * He initialization: W^(l) ~ Normal(0, 2 / H_{l-1}), all biases zero.
 *
 * `hidden` gives the activation of each hidden layer (size L-1) or a single
 * activation used for all of them.
 */
inline Mlp he_init(const std::vector<std::size_t>& layer_dims, const std::vector<Activation>& hidden,
                   std::uint64_t seed) {
    if (layer_dims.size() < 3) throw ShapeError("he_init: need at least one hidden layer");
    const std::size_t L = layer_dims.size() - 1;
    if (hidden.size() != 1 && hidden.size() != L - 1)
        throw ShapeError("he_init: need one hidden activation or one per hidden layer");
    std::mt19937_64 rng(seed);
    std::vector<DenseMatrix> ws;
    std::vector<Vector> bs;
    std::vector<Activation> acts;
    for (std::size_t l = 1; l <= L; ++l) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer_dims[l - 1])));
        DenseMatrix w(layer_dims[l], layer_dims[l - 1]);
        for (double& v : w.data()) v = dist(rng);
        ws.push_back(std::move(w));
        bs.emplace_back(layer_dims[l], 0.0);
        if (l < L)
            acts.push_back(hidden.size() == 1 ? hidden[0] : hidden[l - 1]);
        else
            acts.emplace_back(ActivationKind::Identity, hidden.front().max_order());
    }
    return Mlp(layer_dims, std::move(ws), std::move(bs), std::move(acts));
}

// ---------------------------------------------------------------------------
// Serialization. Doubles are written by nlohmann::json with round-trip
// precision, so parameters survive a save/load cycle bit-exactly.
// ---------------------------------------------------------------------------

inline constexpr int kMlpFormatVersion = 1;

inline nlohmann::json to_json(const Mlp& net) {
    nlohmann::json j;
    j["format"] = "nnpt.mlp";
    j["version"] = kMlpFormatVersion;
    j["layer_dims"] = net.layer_dims();
    j["max_order"] = net.max_order();
    auto acts = nlohmann::json::array();
    auto ws = nlohmann::json::array();
    auto bs = nlohmann::json::array();
    for (std::size_t l = 1; l <= net.num_layers(); ++l) {
        acts.push_back(std::string(to_string(net.activation(l).kind())));
        ws.push_back(net.weight(l).data());
        bs.push_back(net.bias(l));
    }
    j["activations"] = acts;
    j["weights"] = ws;
    j["biases"] = bs;
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "nnpt.mlp") throw std::invalid_argument("not an nnpt.mlp document");
    if (j.at("version").get<int>() != kMlpFormatVersion)
        throw std::invalid_argument("unsupported nnpt.mlp version " + j.at("version").dump());
    auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const int max_order = j.value("max_order", Activation::kDefaultMaxOrder);
    std::vector<DenseMatrix> ws;
    std::vector<Vector> bs;
    std::vector<Activation> acts;
    const std::size_t L = dims.size() - 1;
    for (std::size_t l = 1; l <= L; ++l) {
        ws.emplace_back(dims[l], dims[l - 1], j.at("weights").at(l - 1).get<Vector>());
        bs.push_back(j.at("biases").at(l - 1).get<Vector>());
        acts.emplace_back(activation_from_string(j.at("activations").at(l - 1).get<std::string>()), max_order);
    }
    return Mlp(std::move(dims), std::move(ws), std::move(bs), std::move(acts));
}

} // namespace nnpt
