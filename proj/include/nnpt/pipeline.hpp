#pragma once

/**
 * @file pipeline.hpp
 * @brief The perturbative learning loop for scattering lengths: data
 *        generation, leading-order subtraction, Born-kernel fits and the
 *        second-order proxy.
 */

#include "nnpt/born.hpp"
#include "nnpt/errors.hpp"
#include "nnpt/numkit.hpp"
#include "nnpt/parallel.hpp"
#include "nnpt/taylor.hpp"
#include "nnpt/train.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nnpt {

// ---------------------------------------------------------------------------
// Potential shapes
// ---------------------------------------------------------------------------

/// n(r) = -|sum_j c_j T_j(2r - 1)| sampled at r_k = k / H0, with T_j the
/// Chebyshev polynomials of degree 0..3.
inline Vector potential_shape(const std::array<double, 4>& c, std::size_t h0) {
    Vector n(h0);
    for (std::size_t k = 1; k <= h0; ++k) {
        const double x = 2.0 * static_cast<double>(k) / static_cast<double>(h0) - 1.0;
        const double t[4] = {1.0, x, 2.0 * x * x - 1.0, 4.0 * x * x * x - 3.0 * x};
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += c[static_cast<std::size_t>(j)] * t[j];
        n[k - 1] = -std::abs(s);
    }
    return n;
}

inline std::array<double, 4> draw_shape_coeffs(std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::array<double, 4> c{};
    for (double& v : c) v = nd(rng);
    return c;
}

inline double euclidean_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct GenerationStats {
    std::size_t regenerated = 0; // shapes replaced because the bisection failed
};

struct Dataset {
    std::size_t h0 = 0;
    int iteration = 0;
    double target_scale = 1.0; // raw target = stored target * target_scale
    SampleSet train;
    SampleSet test;
    GenerationStats stats;
};

/// Scattering length of depth * shape, or +inf-like sentinel when the
/// potential binds (the bisection treats that as "too deep").
namespace detail {

struct DepthProbe {
    bool binds = false;
    double a0 = 0.0;
};

inline DepthProbe probe_depth(const Vector& shape, double depth, SamplingScheme scheme) {
    Vector u(shape.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = depth * shape[k];
    try {
        return {false, scattering_length(u, scheme)};
    } catch (const BoundStatePresent&) {
        return {true, 0.0};
    } catch (const ThresholdSingularity&) {
        return {true, 0.0};
    }
}

/// One accepted sample, or nullopt if this shape cannot hit the target.
inline std::optional<std::pair<Vector, double>> fit_depth(const Vector& shape, double target, SamplingScheme scheme) {
    double lo = 0.0, hi = 1.0;
    bool bracketed = false;
    for (int i = 0; i < 64; ++i) {
        const auto p = probe_depth(shape, hi, scheme);
        if (p.binds || p.a0 < target) {
            bracketed = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if (!bracketed) return std::nullopt;
    for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const auto p = probe_depth(shape, mid, scheme);
        if (p.binds || p.a0 < target)
            hi = mid;
        else
            lo = mid;
    }
    // lo never binds and satisfies a0(lo) >= target.
    Vector u(shape.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = lo * shape[k];
    const auto p = probe_depth(shape, lo, scheme);
    if (p.binds || std::abs(p.a0 - target) > 1e-6 || !(p.a0 > -1.0 && p.a0 < 0.0)) return std::nullopt;
    return std::make_pair(std::move(u), p.a0);
}

inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint32_t split, std::size_t index, std::uint32_t attempt) {
    std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), split,
                     static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), attempt};
    return std::mt19937_64(ss);
}

inline SampleSet generate_split(std::size_t h0, std::size_t n, std::uint64_t seed, std::uint32_t split,
                                SamplingScheme scheme, std::size_t threads, std::size_t& regenerated) {
    SampleSet s{DenseMatrix(n, h0), Vector(n)};
    std::vector<std::size_t> retries(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::uint32_t attempt = 0;; ++attempt) {
            if (attempt > 1000) throw Error("generate_dataset: no acceptable shape after 1000 attempts");
            auto rng = sample_rng(seed, split, i, attempt);
            const auto c = draw_shape_coeffs(rng);
            std::uniform_real_distribution<double> ud(-1.0, 0.0);
            const double target = ud(rng);
            const Vector shape = potential_shape(c, h0);
            if (euclidean_norm(shape) == 0.0) {
                ++retries[i];
                continue;
            }
            auto hit = fit_depth(shape, target, scheme);
            if (!hit) {
                ++retries[i];
                continue;
            }
            std::copy(hit->first.begin(), hit->first.end(), s.x.row(i).begin());
            s.y[i] = hit->second;
            return;
        }
    });
    for (auto r : retries) regenerated += r;
    return s;
}

} // namespace detail

/**
 * Attractive potentials with scattering lengths uniform in (-1, 0).
 *
 * Per sample: a random shape, a target a0* ~ U(-1, 0), and a bisection on
 * the depth until the oracle's a0 is within 1e-6 of a0*. The stored label
 * is the oracle value for the stored potential. Every sample has its own
 * RNG stream derived from (seed, split, index), so the result does not
 * depend on the thread count.
 */
inline Dataset generate_dataset(std::size_t h0, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                                SamplingScheme scheme = SamplingScheme::Impulse, std::size_t threads = 1) {
    if (h0 < 1 || n_train < 1 || n_test < 1) throw std::invalid_argument("generate_dataset: sizes must be >= 1");
    Dataset d;
    d.h0 = h0;
    d.train = detail::generate_split(h0, n_train, seed, 0, scheme, threads, d.stats.regenerated);
    d.test = detail::generate_split(h0, n_test, seed, 1, scheme, threads, d.stats.regenerated);
    return d;
}

// --- CSV -------------------------------------------------------------------

/// `H0,iteration,target_scale`, one line of values, then one row per sample
/// `U_1,...,U_H0,target`. Numbers use 17 significant digits.
inline void write_dataset_csv(std::ostream& os, const Dataset& d, const SampleSet& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%d,%.17g\n", d.h0, d.iteration, d.target_scale);
    os << "H0,iteration,target_scale\n" << buf;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (double v : s.x.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", s.y[i]);
        os << buf;
    }
}

struct DatasetHeader {
    std::size_t h0 = 0;
    int iteration = 0;
    double target_scale = 1.0;
};

inline SampleSet read_dataset_csv(std::istream& is, DatasetHeader& hdr) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("H0,iteration,target_scale", 0) != 0)
        throw std::invalid_argument("dataset CSV: missing 'H0,iteration,target_scale' header");
    if (!std::getline(is, line)) throw std::invalid_argument("dataset CSV: missing header values");
    {
        std::istringstream ls(line);
        std::string tok;
        std::getline(ls, tok, ',');
        hdr.h0 = std::stoul(tok);
        std::getline(ls, tok, ',');
        hdr.iteration = std::stoi(tok);
        std::getline(ls, tok, ',');
        hdr.target_scale = std::strtod(tok.c_str(), nullptr);
    }
    Vector xs, ys;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const char* p = line.c_str();
        for (std::size_t k = 0; k <= hdr.h0; ++k) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p) throw std::invalid_argument("dataset CSV: row " + std::to_string(rows + 1) + " is short");
            (k < hdr.h0 ? xs : ys).push_back(v);
            p = *end == ',' ? end + 1 : end;
        }
        ++rows;
    }
    return SampleSet{DenseMatrix(rows, hdr.h0, std::move(xs)), std::move(ys)};
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& train_csv, const std::filesystem::path& test_csv) {
    for (const auto& [path, set] : {std::pair{train_csv, &d.train}, std::pair{test_csv, &d.test}}) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write " + path.string());
        write_dataset_csv(os, d, *set);
    }
}

inline Dataset load_dataset(const std::filesystem::path& train_csv, const std::filesystem::path& test_csv) {
    Dataset d;
    DatasetHeader a, b;
    {
        std::ifstream is(train_csv, std::ios::binary);
        if (!is) throw MissingArtifact(train_csv.string());
        d.train = read_dataset_csv(is, a);
    }
    {
        std::ifstream is(test_csv, std::ios::binary);
        if (!is) throw MissingArtifact(test_csv.string());
        d.test = read_dataset_csv(is, b);
    }
    if (a.h0 != b.h0 || a.iteration != b.iteration || a.target_scale != b.target_scale)
        throw std::invalid_argument("train and test CSV headers disagree");
    d.h0 = a.h0;
    d.iteration = a.iteration;
    d.target_scale = a.target_scale;
    return d;
}

// ---------------------------------------------------------------------------
// Leading-order subtraction
// ---------------------------------------------------------------------------

/**
 * New targets: the raw targets minus the ensemble's Taylor polynomial at
 * U = 0 up to `orders_removed` (0: constant only, 1: constant and linear,
 * 2: also the quadratic term), rescaled so the training split has unit
 * max-abs. Both splits use the same scale.
 */
/// Mean Taylor polynomial at U = 0 truncated after `orders` (in the
/// ensemble's own target units).
inline double leading_model(const TaylorCoeffs& c, std::span<const double> u, int orders) {
    double model = c.value;
    if (orders >= 1) model += dot(c.gradient, u);
    if (orders >= 2)
        for (std::size_t a = 0; a < u.size(); ++a)
            for (std::size_t b = 0; b < u.size(); ++b) model += 0.5 * c.hessian->at({a, b}) * u[a] * u[b];
    return model;
}

inline Dataset subtract_leading(const Dataset& data, const EnsembleTaylor& coeffs, double ens_target_scale,
                                int orders_removed = 1) {
    if (orders_removed < 0 || orders_removed > 2) throw std::invalid_argument("subtract_leading: orders_removed must be 0..2");
    if (coeffs.mean.order() < orders_removed) throw std::invalid_argument("subtract_leading: coefficients of too low order");
    const std::size_t h0 = data.h0;
    auto residual = [&](const SampleSet& s) {
        Vector r(s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            r[i] = s.y[i] * data.target_scale - leading_model(coeffs.mean, s.x.row(i), orders_removed) * ens_target_scale;
        return r;
    };
    Dataset out;
    out.h0 = h0;
    out.iteration = data.iteration + 1;
    out.train = {data.train.x, residual(data.train)};
    out.test = {data.test.x, residual(data.test)};
    double scale = 0.0;
    for (double v : out.train.y) scale = std::max(scale, std::abs(v));
    if (scale == 0.0 || !std::isfinite(scale)) scale = 1.0;
    for (double& v : out.train.y) v /= scale;
    for (double& v : out.test.y) v /= scale;
    out.target_scale = scale;
    return out;
}

inline Dataset subtract_leading(const Dataset& data, const Ensemble& ens, int orders_removed = 1, std::size_t threads = 1) {
    const Vector zero(data.h0, 0.0);
    return subtract_leading(data, ensemble_taylor(ens.members, zero, std::max(orders_removed, 1), threads),
                            ens.target_scale, orders_removed);
}

// ---------------------------------------------------------------------------
// Kernel fits
// ---------------------------------------------------------------------------

struct FitResult {
    Vector members;
    double mean = 0.0;
    double std = 0.0;
    double ref = 0.0;
    double z = 0.0; // |mean - ref| / std

    double ratio() const { return mean / ref; }
};

namespace detail {
inline FitResult finish_fit(Vector members, double ref) {
    FitResult f;
    f.members = std::move(members);
    const auto ms = mean_std(f.members);
    f.mean = ms.mean;
    f.std = ms.std;
    f.ref = ref;
    const double dev = std::abs(f.mean - ref);
    f.z = dev == 0.0 ? 0.0 : (f.std > 0.0 ? dev / f.std : std::numeric_limits<double>::infinity());
    return f;
}
} // namespace detail

/// Per-member alpha from the model alpha * k^2; reference 1/H0^3.
inline FitResult fit_gradient_kernel(const std::vector<Vector>& gradients, std::size_t h0) {
    Vector design(h0);
    for (std::size_t k = 1; k <= h0; ++k) design[k - 1] = static_cast<double>(k * k);
    Vector alphas;
    for (const auto& g : gradients) {
        if (g.size() != h0) throw ShapeError("fit_gradient_kernel: gradient has wrong length");
        alphas.push_back(lstsq_1param(design, g));
    }
    const double h = static_cast<double>(h0);
    return detail::finish_fit(std::move(alphas), 1.0 / (h * h * h));
}

/// Per-member beta from the model beta * k1 k2 (k1 + k2 - |k1 - k2|) over
/// all H0^2 entries; reference -1/H0^5.
inline FitResult fit_hessian_kernel(const std::vector<DenseMatrix>& hessians, std::size_t h0) {
    Vector design;
    for (std::size_t a = 1; a <= h0; ++a)
        for (std::size_t b = 1; b <= h0; ++b) {
            const double x = static_cast<double>(a), y = static_cast<double>(b);
            design.push_back(x * y * (x + y - std::abs(x - y)));
        }
    Vector betas;
    for (const auto& hm : hessians) {
        if (hm.rows() != h0 || hm.cols() != h0) throw ShapeError("fit_hessian_kernel: Hessian has wrong shape");
        betas.push_back(lstsq_1param(design, hm.data()));
    }
    const double h = static_cast<double>(h0);
    return detail::finish_fit(std::move(betas), -1.0 / (h * h * h * h * h));
}

/// Member Hessians as dense matrices, multiplied by `scale`.
inline std::vector<DenseMatrix> member_hessians(const EnsembleTaylor& et, double scale = 1.0) {
    std::vector<DenseMatrix> out;
    for (const auto& m : et.members) {
        if (!m.hessian) throw std::invalid_argument("member_hessians: coefficients lack second order");
        const std::size_t h0 = m.hessian->dim();
        DenseMatrix hm(h0, h0);
        for (std::size_t a = 0; a < h0; ++a)
            for (std::size_t b = 0; b < h0; ++b) hm(a, b) = scale * m.hessian->at({a, b});
        out.push_back(std::move(hm));
    }
    return out;
}

inline std::vector<Vector> member_gradients(const EnsembleTaylor& et, double scale = 1.0) {
    std::vector<Vector> out;
    for (const auto& m : et.members) {
        Vector g = m.gradient;
        for (double& v : g) v *= scale;
        out.push_back(std::move(g));
    }
    return out;
}

inline nlohmann::json to_json(const FitResult& f) {
    return {{"mean", f.mean}, {"std", f.std}, {"ref", f.ref}, {"z", f.z}, {"ratio", f.ratio()}, {"members", f.members}};
}

// ---------------------------------------------------------------------------
// Proxy
// ---------------------------------------------------------------------------

/// p0(U) = c0 + g.U + 1/2 U^T K U, in raw target units.
struct Proxy {
    std::size_t h0 = 0;
    double c0 = 0.0;
    double c0_std = 0.0;
    Vector g;
    DenseMatrix K;

    double operator()(std::span<const double> u) const {
        if (u.size() != h0) throw ShapeError("Proxy: input has wrong length");
        return c0 + dot(g, u) + 0.5 * dot(u, matvec(K, u));
    }
};

/// c0 and g from the first ensemble's coefficients, K from the second's,
/// each multiplied back by its ensemble's target scale.
inline Proxy build_proxy(const EnsembleTaylor& first, double scale1, const EnsembleTaylor& second, double scale2) {
    if (!second.mean.hessian) throw std::invalid_argument("build_proxy: second ensemble needs second-order coefficients");
    Proxy p;
    p.h0 = first.mean.gradient.size();
    p.c0 = first.mean.value * scale1;
    p.c0_std = first.std.value * std::abs(scale1);
    p.g = first.mean.gradient;
    for (double& v : p.g) v *= scale1;
    p.K = DenseMatrix(p.h0, p.h0);
    for (std::size_t a = 0; a < p.h0; ++a)
        for (std::size_t b = 0; b < p.h0; ++b) p.K(a, b) = second.mean.hessian->at({a, b}) * scale2;
    return p;
}

inline Proxy build_proxy(const Ensemble& ens1, const Ensemble& ens2, std::size_t threads = 1) {
    const Vector zero(ens1.input_dim(), 0.0);
    return build_proxy(ensemble_taylor(ens1.members, zero, 1, threads), ens1.target_scale,
                       ensemble_taylor(ens2.members, zero, 2, threads), ens2.target_scale);
}

/// Proxy with the exact sampled Born kernels.
inline Proxy born_proxy(std::size_t h0) {
    const auto bk = born_kernels(h0);
    return Proxy{h0, 0.0, 0.0, bk.grad, bk.hess};
}

inline nlohmann::json to_json(const Proxy& p) {
    auto rows = nlohmann::json::array();
    for (std::size_t a = 0; a < p.h0; ++a) rows.push_back(Vector(p.K.row(a).begin(), p.K.row(a).end()));
    return {{"format", "nnpt.proxy"}, {"version", 1}, {"H0", p.h0}, {"c0", p.c0}, {"c0_std", p.c0_std}, {"g", p.g}, {"K", rows}};
}

inline Proxy proxy_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "nnpt.proxy") throw std::invalid_argument("not an nnpt.proxy document");
    Proxy p;
    p.h0 = j.at("H0").get<std::size_t>();
    p.c0 = j.at("c0").get<double>();
    p.c0_std = j.value("c0_std", 0.0);
    p.g = j.at("g").get<Vector>();
    p.K = DenseMatrix(p.h0, p.h0);
    for (std::size_t a = 0; a < p.h0; ++a)
        for (std::size_t b = 0; b < p.h0; ++b) p.K(a, b) = j.at("K").at(a).at(b).get<double>();
    return p;
}

struct ScanPoint {
    int shape = 0;
    double norm = 0.0;
    double a0 = std::numeric_limits<double>::quiet_NaN();
    double p0 = 0.0;
    double rel_err = std::numeric_limits<double>::quiet_NaN();
    bool flagged = false; // oracle rejected the potential (bound state)
};

struct ProxyReport {
    std::vector<ScanPoint> points;
    double max_rel_err_le1 = 0.0; // over points with 0 < |U| <= 1 that were not flagged
};

/**
 * Scans `shapes` random unit-norm shapes over `depths` equidistant norms in
 * [0, max_norm] and compares the proxy with the oracle. The point |U| = 0
 * has a0 = 0 and is left out of the relative-error summary.
 */
inline ProxyReport validate_proxy(const Proxy& proxy, int shapes = 2, int depths = 100, double max_norm = 5.0,
                                  std::uint64_t seed = 0, SamplingScheme scheme = SamplingScheme::Impulse) {
    if (shapes < 1 || depths < 2 || !(max_norm > 0.0)) throw std::invalid_argument("validate_proxy: bad scan settings");
    ProxyReport rep;
    for (int s = 0; s < shapes; ++s) {
        auto rng = detail::sample_rng(seed, 2, static_cast<std::size_t>(s), 0);
        Vector shape = potential_shape(draw_shape_coeffs(rng), proxy.h0);
        const double nrm = euclidean_norm(shape);
        for (double& v : shape) v /= nrm;
        for (int d = 0; d < depths; ++d) {
            ScanPoint pt;
            pt.shape = s;
            pt.norm = max_norm * d / (depths - 1);
            Vector u(proxy.h0);
            for (std::size_t k = 0; k < u.size(); ++k) u[k] = pt.norm * shape[k];
            pt.p0 = proxy(u);
            try {
                pt.a0 = scattering_length(u, scheme);
            } catch (const BoundStatePresent&) {
                pt.flagged = true;
            } catch (const ThresholdSingularity&) {
                pt.flagged = true;
            }
            if (!pt.flagged && pt.a0 != 0.0) {
                pt.rel_err = std::abs(pt.p0 - pt.a0) / std::abs(pt.a0);
                if (pt.norm <= 1.0 + 1e-12) rep.max_rel_err_le1 = std::max(rep.max_rel_err_le1, pt.rel_err);
            }
            rep.points.push_back(pt);
        }
    }
    return rep;
}

inline void write_scan_csv(std::ostream& os, const ProxyReport& rep) {
    os << "shape,norm,a0,p0,rel_err,flagged\n";
    char buf[200];
    for (const auto& p : rep.points) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d\n", p.shape, p.norm, p.a0, p.p0, p.rel_err,
                      p.flagged ? 1 : 0);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

struct PipelineConfig {
    std::size_t h0 = 16;
    std::size_t n_train = 3000;
    std::size_t n_test = 300;
    std::size_t members1 = 8;
    std::size_t members2 = 8;
    int epochs = 20;
    std::size_t batch_size = 128;
    double target_floor = kDefaultTargetFloor;
    int orders_removed = 1;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    SamplingScheme scheme = SamplingScheme::Impulse;
    int proxy_shapes = 2;
    int proxy_depths = 100;
    double proxy_max_norm = 5.0;
};

/// Stream-specific seeds derived from the run seed: 0 data, 1 and 2 the
/// ensembles, 3 the proxy scan.
inline std::uint64_t stage_seed(std::uint64_t seed, std::uint32_t stage) {
    if (stage == 0) return seed;
    std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6e6e7074u, stage};
    std::uint32_t out[2];
    ss.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline EnsembleSpec ensemble_spec(const PipelineConfig& cfg, int iteration) {
    EnsembleSpec s;
    s.n_members = iteration == 1 ? cfg.members1 : cfg.members2;
    s.epochs = cfg.epochs;
    s.batch_size = cfg.batch_size;
    s.target_floor = cfg.target_floor;
    s.master_seed = stage_seed(cfg.seed, static_cast<std::uint32_t>(iteration));
    s.threads = cfg.threads;
    return s;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
    return {{"h0", c.h0},
            {"n_train", c.n_train},
            {"n_test", c.n_test},
            {"members1", c.members1},
            {"members2", c.members2},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"target_floor", c.target_floor},
            {"orders_removed", c.orders_removed},
            {"seed", c.seed},
            {"threads", c.threads},
            {"scheme", std::string(to_string(c.scheme))},
            {"proxy_shapes", c.proxy_shapes},
            {"proxy_depths", c.proxy_depths},
            {"proxy_max_norm", c.proxy_max_norm}};
}

/// Reads known keys from `j` over the defaults in `c`; unknown keys are an error.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
    for (const auto& [key, v] : j.items()) {
        if (key == "h0") c.h0 = v.get<std::size_t>();
        else if (key == "n_train") c.n_train = v.get<std::size_t>();
        else if (key == "n_test") c.n_test = v.get<std::size_t>();
        else if (key == "members1") c.members1 = v.get<std::size_t>();
        else if (key == "members2") c.members2 = v.get<std::size_t>();
        else if (key == "epochs") c.epochs = v.get<int>();
        else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
        else if (key == "target_floor") c.target_floor = v.get<double>();
        else if (key == "orders_removed") c.orders_removed = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "threads") c.threads = v.get<std::size_t>();
        else if (key == "scheme") c.scheme = scheme_from_string(v.get<std::string>());
        else if (key == "proxy_shapes") c.proxy_shapes = v.get<int>();
        else if (key == "proxy_depths") c.proxy_depths = v.get<int>();
        else if (key == "proxy_max_norm") c.proxy_max_norm = v.get<double>();
        else throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

/// MAPE of leading polynomial + ensemble-2 prediction against the original
/// iteration-0 targets.
inline MapeStats reconstructed_mape(const Ensemble& ens2, const SampleSet& test0, const EnsembleTaylor& taylor1,
                                    double scale1, int orders_removed, double floor) {
    const Vector p2 = predict_rows(ens2, test0.x);
    Vector full(p2.size());
    for (std::size_t i = 0; i < p2.size(); ++i)
        full[i] = leading_model(taylor1.mean, test0.x.row(i), orders_removed) * scale1 + p2[i] * ens2.target_scale;
    return mape_stats(full, test0.y, floor);
}

struct PipelineResult {
    Dataset data0, data1;
    Ensemble ens1, ens2;
    EnsembleTaylor taylor1, taylor2;
    MapeStats mape1;
    MapeStats mape2_residual;      // on the rescaled residual targets
    MapeStats mape2_reconstructed; // c0 + g.U + scale * ensemble-2 against the original a0
    FitResult alpha, beta;
    Proxy proxy;
    ProxyReport scan;
};

inline nlohmann::json report_json(const PipelineResult& r, const std::string& scan_path) {
    nlohmann::json j;
    j["alpha"] = to_json(r.alpha);
    j["beta"] = to_json(r.beta);
    j["intercept"] = {{"mean", r.taylor1.mean.value * r.ens1.target_scale},
                      {"std", r.taylor1.std.value * r.ens1.target_scale}};
    j["ensemble1_mape"] = r.mape1.mape;
    j["ensemble2_mape"] = {{"residual", r.mape2_residual.mape}, {"reconstructed", r.mape2_reconstructed.mape}};
    j["excluded_below_floor"] = {{"ensemble1_test", r.mape1.excluded}, {"ensemble2_test", r.mape2_residual.excluded}};
    j["members"] = {{"ensemble1", r.ens1.size()}, {"ensemble2", r.ens2.size()}};
    j["residual_target_scale"] = r.data1.target_scale;
    j["proxy_max_rel_err_le1"] = r.scan.max_rel_err_le1;
    j["proxy_scan"] = scan_path;
    return j;
}

/// The whole two-iteration loop in memory (the CLI runs the same steps as
/// separate, file-connected stages).
inline PipelineResult run_pipeline(const PipelineConfig& cfg, TrainLog* log1 = nullptr, TrainLog* log2 = nullptr) {
    PipelineResult r;
    const Vector zero(cfg.h0, 0.0);
    r.data0 = generate_dataset(cfg.h0, cfg.n_train, cfg.n_test, stage_seed(cfg.seed, 0), cfg.scheme, cfg.threads);

    r.ens1 = train_ensemble(ensemble_spec(cfg, 1), r.data0.train, &r.data0.test, log1);
    r.ens1.iteration = 1;
    r.ens1.target_scale = r.data0.target_scale;
    r.mape1 = ensemble_mape(r.ens1, r.data0.test, cfg.target_floor);
    r.taylor1 = ensemble_taylor(r.ens1.members, zero, std::max(1, cfg.orders_removed), cfg.threads);
    r.alpha = fit_gradient_kernel(member_gradients(r.taylor1, r.ens1.target_scale), cfg.h0);

    r.data1 = subtract_leading(r.data0, r.taylor1, r.ens1.target_scale, cfg.orders_removed);
    r.ens2 = train_ensemble(ensemble_spec(cfg, 2), r.data1.train, &r.data1.test, log2);
    r.ens2.iteration = 2;
    r.ens2.target_scale = r.data1.target_scale;
    r.mape2_residual = ensemble_mape(r.ens2, r.data1.test, cfg.target_floor);
    r.taylor2 = ensemble_taylor(r.ens2.members, zero, 2, cfg.threads);
    r.beta = fit_hessian_kernel(member_hessians(r.taylor2, r.ens2.target_scale), cfg.h0);

    r.mape2_reconstructed = reconstructed_mape(r.ens2, r.data0.test, r.taylor1, r.ens1.target_scale,
                                               cfg.orders_removed, cfg.target_floor);

    r.proxy = build_proxy(r.taylor1, r.ens1.target_scale, r.taylor2, r.ens2.target_scale);
    r.scan = validate_proxy(r.proxy, cfg.proxy_shapes, cfg.proxy_depths, cfg.proxy_max_norm, stage_seed(cfg.seed, 3),
                            cfg.scheme);
    return r;
}

} // namespace nnpt
