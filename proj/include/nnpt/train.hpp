#pragma once

/**
 * @file train.hpp
 * @brief Mini-batch training of Mlp members with Adam and decoupled weight
 *        decay under a MAPE loss, and random-hyperparameter ensembles.
 *
 * Matrix products during training go through Eigen; the trained parameters
 * are stored back into plain Mlp objects.
 */

#include "nnpt/errors.hpp"
#include "nnpt/mlp.hpp"
#include "nnpt/numkit.hpp"
#include "nnpt/parallel.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nnpt {

inline constexpr double kDefaultTargetFloor = 1e-3;

// ---------------------------------------------------------------------------
// Samples and loss
// ---------------------------------------------------------------------------

/// Inputs (one sample per row) and scalar targets.
struct SampleSet {
    DenseMatrix x;
    Vector y;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t dim() const noexcept { return x.cols(); }
    void validate() const {
        if (x.rows() != y.size()) throw ShapeError("SampleSet: input rows and target count differ");
    }
};

struct MapeStats {
    double mape = 0.0;
    std::size_t used = 0;
    std::size_t excluded = 0; // |target| below the floor
};

inline MapeStats mape_stats(std::span<const double> pred, std::span<const double> targets,
                            double floor = kDefaultTargetFloor) {
    if (pred.size() != targets.size()) throw ShapeError("mape: length mismatch");
    MapeStats s;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::abs(targets[i]) < floor) {
            ++s.excluded;
            continue;
        }
        acc += std::abs(pred[i] - targets[i]) / std::abs(targets[i]);
        ++s.used;
    }
    s.mape = s.used ? acc / static_cast<double>(s.used) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

/// Mean of |pred - target| / |target| over samples with |target| >= floor.
inline double mape(std::span<const double> pred, std::span<const double> targets, double floor = kDefaultTargetFloor) {
    const auto s = mape_stats(pred, targets, floor);
    if (s.used == 0) throw std::invalid_argument("mape: every target is below the floor");
    return s.mape;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 20;
    std::size_t batch_size = 128;
    double eta_bar = 2.5;
    double lambda_bar = 4.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double target_floor = kDefaultTargetFloor;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
};

/// lr(epoch) = exp(-(epoch - 1) / eta_bar) * 10^(-eta_bar), epochs counted from 1.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 1 || epoch > cfg.epochs) throw std::out_of_range("lr_at_epoch: epoch out of range");
    return std::exp(-(epoch - 1) / cfg.eta_bar) * std::pow(10.0, -cfg.eta_bar);
}

inline double weight_decay(const TrainConfig& cfg) { return std::pow(10.0, -cfg.lambda_bar); }

// ---------------------------------------------------------------------------
// Training log
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    int member_id = 0;
    double train_mape = 0.0; // mean over the epoch's batches, at the parameters each batch saw
    double test_mape = 0.0;  // NaN when no test split is given
    double lr = 0.0;
};

/// Thread-safe collector; rows are sorted by (member, epoch) on output so
/// the file does not depend on scheduling.
class TrainLog {
public:
    void add(const EpochRecord& r) {
        std::lock_guard lk(mu_);
        rows_.push_back(r);
    }
    std::vector<EpochRecord> rows() const {
        std::lock_guard lk(mu_);
        auto out = rows_;
        std::stable_sort(out.begin(), out.end(), [](const EpochRecord& a, const EpochRecord& b) {
            return std::tie(a.member_id, a.epoch) < std::tie(b.member_id, b.epoch);
        });
        return out;
    }
    void write_csv(std::ostream& os) const {
        os << "epoch,member_id,train_mape,test_mape,lr\n";
        char buf[160];
        for (const auto& r : rows()) {
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", r.epoch, r.member_id, r.train_mape,
                          r.test_mape, r.lr);
            os << buf;
        }
    }

private:
    mutable std::mutex mu_;
    std::vector<EpochRecord> rows_;
};

// ---------------------------------------------------------------------------
// Batched forward / backward
// ---------------------------------------------------------------------------

namespace detail {

using EMat = Eigen::MatrixXd;
using EVec = Eigen::VectorXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct EigenNet {
    std::vector<EMat> w;
    std::vector<EVec> b;
    std::vector<Activation> act;

    explicit EigenNet(const Mlp& net) {
        for (std::size_t l = 1; l <= net.num_layers(); ++l) {
            const auto& W = net.weight(l);
            w.emplace_back(RowMajorMap(W.data().data(), static_cast<Eigen::Index>(W.rows()),
                                       static_cast<Eigen::Index>(W.cols())));
            b.emplace_back(Eigen::Map<const EVec>(net.bias(l).data(), static_cast<Eigen::Index>(net.bias(l).size())));
            act.push_back(net.activation(l));
        }
    }

    void store(Mlp& net) const {
        for (std::size_t l = 1; l <= w.size(); ++l) {
            auto& W = net.weight(l);
            for (std::size_t r = 0; r < W.rows(); ++r)
                for (std::size_t c = 0; c < W.cols(); ++c)
                    W(r, c) = w[l - 1](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            auto& bias = net.bias(l);
            for (std::size_t r = 0; r < bias.size(); ++r) bias[r] = b[l - 1](static_cast<Eigen::Index>(r));
        }
    }
};

inline void apply_activation(const Activation& a, const EMat& z, EMat& y, EMat* dy) {
    y.resize(z.rows(), z.cols());
    if (dy) dy->resize(z.rows(), z.cols());
    const double* zp = z.data();
    double* yp = y.data();
    double* dp = dy ? dy->data() : nullptr;
    const Eigen::Index n = z.size();
    switch (a.kind()) {
    case ActivationKind::Identity:
        y = z;
        if (dy) dy->setOnes();
        return;
    case ActivationKind::Tanh:
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = std::tanh(zp[i]);
            yp[i] = t;
            if (dp) dp[i] = 1.0 - t * t;
        }
        return;
    case ActivationKind::Gelu:
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = zp[i];
            const double cdf = detail::normal_cdf(x);
            yp[i] = x * cdf;
            if (dp) dp[i] = cdf + x * detail::normal_pdf(x);
        }
        return;
    }
}

/// Forward pass over a batch stored column-wise (H0 x B); returns the
/// network outputs (first output neuron) for each column.
inline EVec forward_batch(const EigenNet& net, const EMat& x) {
    EMat y = x, z, tmp;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        z.noalias() = net.w[l] * y;
        z.colwise() += net.b[l];
        apply_activation(net.act[l], z, tmp, nullptr);
        y.swap(tmp);
    }
    return y.row(0).transpose();
}

struct Gradients {
    std::vector<EMat> w;
    std::vector<EVec> b;
};

/// MAPE loss over the batch and its gradient. Every target must satisfy
/// |t| >= floor (callers filter beforehand). d|p - t|/dp is taken as 0 at
/// p = t.
inline double mape_backprop(const EigenNet& net, const EMat& x, const EVec& t, Gradients& g) {
    const std::size_t L = net.w.size();
    std::vector<EMat> ys(L + 1), ds(L + 1);
    ys[0] = x;
    EMat z;
    for (std::size_t l = 0; l < L; ++l) {
        z.noalias() = net.w[l] * ys[l];
        z.colwise() += net.b[l];
        apply_activation(net.act[l], z, ys[l + 1], &ds[l + 1]);
    }
    const Eigen::Index bsz = x.cols();
    const double inv_n = 1.0 / static_cast<double>(bsz);
    EMat delta(1, bsz);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < bsz; ++i) {
        const double diff = ys[L](0, i) - t(i);
        const double at = std::abs(t(i));
        loss += std::abs(diff) / at;
        delta(0, i) = (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0) / at * inv_n;
    }
    loss *= inv_n;
    if (net.w[L - 1].rows() != 1) {
        // Only the first output neuron enters the loss.
        EMat full = EMat::Zero(net.w[L - 1].rows(), bsz);
        full.row(0) = delta;
        delta.swap(full);
    }
    g.w.resize(L);
    g.b.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        // delta holds dLoss/dz^(l+1) (output layer: identity, so dz = dy).
        g.w[l].noalias() = delta * ys[l].transpose();
        g.b[l] = delta.rowwise().sum();
        if (l == 0) break;
        EMat prev;
        prev.noalias() = net.w[l].transpose() * delta;
        delta = prev.cwiseProduct(ds[l]);
    }
    return loss;
}

inline EMat batch_columns(const DenseMatrix& x, std::span<const std::size_t> idx) {
    EMat out(static_cast<Eigen::Index>(x.cols()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        auto row = x.row(idx[j]);
        for (std::size_t r = 0; r < row.size(); ++r) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = row[r];
    }
    return out;
}

inline EMat all_columns(const DenseMatrix& x) {
    return RowMajorMap(x.data().data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()))
        .transpose();
}

} // namespace detail

/// Predictions of a single network for every row of `x`.
inline Vector predict_rows(const Mlp& net, const DenseMatrix& x) {
    if (x.cols() != net.input_dim()) throw ShapeError("predict_rows: input width mismatch");
    const detail::EigenNet en(net);
    const auto out = detail::forward_batch(en, detail::all_columns(x));
    return Vector(out.data(), out.data() + out.size());
}

/// Gradient of the batch MAPE with respect to all weights and biases, in
/// the layout of the network (used by the gradient checks).
struct ParamGradients {
    std::vector<DenseMatrix> w;
    std::vector<Vector> b;
};

inline ParamGradients mape_gradient(const Mlp& net, const SampleSet& batch, double* loss = nullptr) {
    batch.validate();
    const detail::EigenNet en(net);
    detail::Gradients g;
    const Eigen::Map<const detail::EVec> t(batch.y.data(), static_cast<Eigen::Index>(batch.y.size()));
    const double l = detail::mape_backprop(en, detail::all_columns(batch.x), t, g);
    if (loss) *loss = l;
    ParamGradients out;
    for (std::size_t i = 0; i < g.w.size(); ++i) {
        DenseMatrix w(static_cast<std::size_t>(g.w[i].rows()), static_cast<std::size_t>(g.w[i].cols()));
        for (std::size_t r = 0; r < w.rows(); ++r)
            for (std::size_t c = 0; c < w.cols(); ++c)
                w(r, c) = g.w[i](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        out.w.push_back(std::move(w));
        out.b.emplace_back(g.b[i].data(), g.b[i].data() + g.b[i].size());
    }
    return out;
}

/// Drops samples whose |target| is below the floor.
inline SampleSet filter_by_floor(const SampleSet& s, double floor, std::size_t* excluded = nullptr) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (std::abs(s.y[i]) >= floor) keep.push_back(i);
    if (excluded) *excluded = s.size() - keep.size();
    SampleSet out{DenseMatrix(keep.size(), s.dim()), Vector(keep.size())};
    for (std::size_t j = 0; j < keep.size(); ++j) {
        auto src = s.x.row(keep[j]);
        std::copy(src.begin(), src.end(), out.x.row(j).begin());
        out.y[j] = s.y[keep[j]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Single-member training
// ---------------------------------------------------------------------------

/**
 * Trains `net` in place-copy fashion and returns the result.
 *
 * Each epoch shuffles the training samples with a seed derived from
 * (cfg.seed, epoch) and walks over them in batches of cfg.batch_size, the
 * last batch possibly smaller. Per step: weights are scaled by
 * (1 - lr * lambda), then an Adam update is applied to weights and hidden
 * biases. The output bias stays at zero.
 */
inline Mlp train_member(Mlp net, const SampleSet& train, const TrainConfig& cfg, const SampleSet* test = nullptr,
                        TrainLog* log = nullptr, int member_id = 0) {
    cfg.validate();
    train.validate();
    if (train.size() == 0) throw std::invalid_argument("train_member: empty training set");
    if (train.dim() != net.input_dim()) throw ShapeError("train_member: input width does not match the network");

    const SampleSet data = filter_by_floor(train, cfg.target_floor);
    if (data.size() == 0) throw std::invalid_argument("train_member: every target is below the floor");

    detail::EigenNet en(net);
    const std::size_t L = en.w.size();
    std::vector<detail::EMat> mw, vw;
    std::vector<detail::EVec> mb, vb;
    for (std::size_t l = 0; l < L; ++l) {
        mw.push_back(detail::EMat::Zero(en.w[l].rows(), en.w[l].cols()));
        vw.push_back(mw.back());
        mb.push_back(detail::EVec::Zero(en.b[l].size()));
        vb.push_back(mb.back());
    }
    const double lambda = weight_decay(cfg);
    std::uint64_t step = 0;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::Gradients g;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::seed_seq ss{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                         static_cast<std::uint32_t>(epoch)};
        std::mt19937_64 shuffle_rng(ss);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, len);
            const detail::EMat xb = detail::batch_columns(data.x, idx);
            detail::EVec tb(static_cast<Eigen::Index>(len));
            for (std::size_t j = 0; j < len; ++j) tb(static_cast<Eigen::Index>(j)) = data.y[idx[j]];

            const double loss = detail::mape_backprop(en, xb, tb, g);
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch, "non-finite loss");
            loss_sum += loss * static_cast<double>(len);

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < L; ++l) {
                en.w[l] *= (1.0 - lr * lambda);
                mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * g.w[l];
                vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * g.w[l].cwiseProduct(g.w[l]);
                en.w[l].array() -= lr * (mw[l].array() / bc1) / ((vw[l].array() / bc2).sqrt() + cfg.adam_eps);
                if (l + 1 == L) continue; // output layer has no bias
                mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * g.b[l];
                vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * g.b[l].cwiseProduct(g.b[l]);
                en.b[l].array() -= lr * (mb[l].array() / bc1) / ((vb[l].array() / bc2).sqrt() + cfg.adam_eps);
            }
        }
        for (std::size_t l = 0; l < L; ++l)
            if (!en.w[l].allFinite() || !en.b[l].allFinite()) throw TrainingDiverged(epoch, "non-finite parameters");

        if (log) {
            EpochRecord rec{epoch, member_id, loss_sum / static_cast<double>(data.size()),
                            std::numeric_limits<double>::quiet_NaN(), lr};
            if (test && test->size() > 0) {
                const auto p = detail::forward_batch(en, detail::all_columns(test->x));
                rec.test_mape = mape_stats(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), test->y,
                                           cfg.target_floor)
                                    .mape;
            }
            log->add(rec);
        }
    }
    en.store(net);
    return net;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct EnsembleSpec {
    std::size_t n_members = 8;
    int depth_min = 3, depth_max = 10;    // number of layers L
    int width_min = 16, width_max = 256;  // units per hidden layer, drawn per layer
    double eta_bar_min = 2.0, eta_bar_max = 3.0;
    double lambda_bar_min = 3.0, lambda_bar_max = 5.0;
    int epochs = 20;
    std::size_t batch_size = 128;
    double target_floor = kDefaultTargetFloor;
    ActivationKind hidden = ActivationKind::Gelu;
    std::uint64_t master_seed = 0;
    std::size_t threads = 1;

    void validate() const {
        if (n_members < 1) throw std::invalid_argument("EnsembleSpec: need at least one member");
        if (depth_min < 2 || depth_min > depth_max) throw std::invalid_argument("EnsembleSpec: bad depth range");
        if (width_min < 1 || width_min > width_max) throw std::invalid_argument("EnsembleSpec: bad width range");
        if (eta_bar_min > eta_bar_max || lambda_bar_min > lambda_bar_max)
            throw std::invalid_argument("EnsembleSpec: bad hyperparameter interval");
    }
};

struct MemberInfo {
    int member_id = 0;
    int attempt = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> layer_dims;
    double eta_bar = 0.0;
    double lambda_bar = 0.0;
    double test_mape = std::numeric_limits<double>::quiet_NaN();
};

struct Ensemble {
    std::vector<Mlp> members;
    std::vector<MemberInfo> info;
    std::vector<int> dropped; // member ids that diverged twice
    int iteration = 1;
    double target_scale = 1.0; // raw target = network output * target_scale

    std::size_t size() const noexcept { return members.size(); }
    std::size_t input_dim() const { return members.at(0).input_dim(); }
};

/// Mean of the member outputs (in the ensemble's training-target units).
inline double predict(const Ensemble& ens, std::span<const double> x) {
    if (ens.members.empty()) throw std::invalid_argument("predict: empty ensemble");
    double s = 0.0;
    for (const auto& m : ens.members) s += predict(m, x);
    return s / static_cast<double>(ens.members.size());
}

inline Vector predict_rows(const Ensemble& ens, const DenseMatrix& x) {
    if (ens.members.empty()) throw std::invalid_argument("predict_rows: empty ensemble");
    Vector acc(x.rows(), 0.0);
    for (const auto& m : ens.members) {
        const Vector p = predict_rows(m, x);
        for (std::size_t i = 0; i < p.size(); ++i) acc[i] += p[i];
    }
    for (double& v : acc) v /= static_cast<double>(ens.members.size());
    return acc;
}

/// Seed for member `index`, attempt `attempt`, derived from the master seed.
inline std::uint64_t member_seed(std::uint64_t master, std::size_t index, int attempt) {
    std::seed_seq ss{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                     static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(attempt)};
    std::uint32_t out[2];
    ss.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Draws a member's architecture and hyperparameters from its seed.
inline MemberInfo draw_member(const EnsembleSpec& spec, std::size_t input_dim, std::size_t index, int attempt) {
    MemberInfo mi;
    mi.member_id = static_cast<int>(index);
    mi.attempt = attempt;
    mi.seed = member_seed(spec.master_seed, index, attempt);
    std::mt19937_64 rng(mi.seed);
    std::uniform_int_distribution<int> depth(spec.depth_min, spec.depth_max);
    std::uniform_int_distribution<int> width(spec.width_min, spec.width_max);
    std::uniform_real_distribution<double> eta(spec.eta_bar_min, spec.eta_bar_max);
    std::uniform_real_distribution<double> lam(spec.lambda_bar_min, spec.lambda_bar_max);
    const int L = depth(rng);
    mi.layer_dims.push_back(input_dim);
    for (int l = 1; l < L; ++l) mi.layer_dims.push_back(static_cast<std::size_t>(width(rng)));
    mi.layer_dims.push_back(1);
    mi.eta_bar = eta(rng);
    mi.lambda_bar = lam(rng);
    return mi;
}

/**
 * Trains spec.n_members members on the same training split. A member whose
 * training diverges is retried once with a fresh seed and dropped (with a
 * warning on stderr) if it diverges again.
 */
inline Ensemble train_ensemble(const EnsembleSpec& spec, const SampleSet& train, const SampleSet* test = nullptr,
                               TrainLog* log = nullptr) {
    spec.validate();
    train.validate();
    if (train.size() == 0) throw std::invalid_argument("train_ensemble: empty training set");
    const std::size_t n = spec.n_members;
    std::vector<std::optional<Mlp>> nets(n);
    std::vector<MemberInfo> infos(n);

    parallel_for(n, spec.threads, [&](std::size_t i) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            MemberInfo mi = draw_member(spec, train.dim(), i, attempt);
            TrainConfig cfg;
            cfg.epochs = spec.epochs;
            cfg.batch_size = spec.batch_size;
            cfg.eta_bar = mi.eta_bar;
            cfg.lambda_bar = mi.lambda_bar;
            cfg.target_floor = spec.target_floor;
            cfg.seed = mi.seed ^ 0x9e3779b97f4a7c15ULL;
            try {
                TrainLog member_log;
                Mlp net = he_init(mi.layer_dims, {Activation(spec.hidden)}, mi.seed);
                net = train_member(std::move(net), train, cfg, test, log ? &member_log : nullptr, mi.member_id);
                if (test && test->size() > 0)
                    mi.test_mape = mape_stats(predict_rows(net, test->x), test->y, spec.target_floor).mape;
                if (log)
                    for (const auto& r : member_log.rows()) log->add(r);
                nets[i] = std::move(net);
                infos[i] = mi;
                return;
            } catch (const TrainingDiverged& e) {
                std::cerr << "warning: member " << i << " diverged in epoch " << e.epoch()
                          << (attempt == 0 ? "; retrying with a fresh seed\n" : "; dropping it\n");
            }
        }
        infos[i].member_id = static_cast<int>(i);
    });

    Ensemble ens;
    for (std::size_t i = 0; i < n; ++i) {
        if (nets[i]) {
            ens.members.push_back(std::move(*nets[i]));
            ens.info.push_back(infos[i]);
        } else {
            ens.dropped.push_back(static_cast<int>(i));
        }
    }
    if (ens.members.empty()) throw TrainingDiverged(0, "train_ensemble: every member diverged");
    return ens;
}

inline MapeStats ensemble_mape(const Ensemble& ens, const SampleSet& data, double floor = kDefaultTargetFloor) {
    return mape_stats(predict_rows(ens, data.x), data.y, floor);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace detail {
inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os << s;
}
inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw MissingArtifact(p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}
} // namespace detail

inline nlohmann::json to_json(const MemberInfo& mi) {
    return {{"member_id", mi.member_id},   {"attempt", mi.attempt},       {"seed", mi.seed},
            {"layer_dims", mi.layer_dims}, {"eta_bar", mi.eta_bar},       {"lambda_bar", mi.lambda_bar},
            {"test_mape", std::isfinite(mi.test_mape) ? nlohmann::json(mi.test_mape) : nlohmann::json()}};
}

/// Writes member_NNN.json files and manifest.json into `dir`.
inline void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "nnpt.ensemble";
    manifest["version"] = 1;
    manifest["iteration"] = ens.iteration;
    manifest["target_scale"] = ens.target_scale;
    manifest["dropped"] = ens.dropped;
    auto members = nlohmann::json::array();
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "member_%03d.json", ens.info[i].member_id);
        detail::write_text(dir / name, to_json(ens.members[i]).dump(1) + "\n");
        auto m = to_json(ens.info[i]);
        m["file"] = name;
        members.push_back(m);
    }
    manifest["members"] = members;
    detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Ensemble load_ensemble(const std::filesystem::path& dir) {
    const auto manifest = nlohmann::json::parse(detail::read_text(dir / "manifest.json"));
    if (manifest.value("format", "") != "nnpt.ensemble") throw std::invalid_argument(dir.string() + ": not an ensemble");
    Ensemble ens;
    ens.iteration = manifest.at("iteration").get<int>();
    ens.target_scale = manifest.at("target_scale").get<double>();
    ens.dropped = manifest.at("dropped").get<std::vector<int>>();
    for (const auto& m : manifest.at("members")) {
        const auto file = dir / m.at("file").get<std::string>();
        ens.members.push_back(mlp_from_json(nlohmann::json::parse(detail::read_text(file))));
        MemberInfo mi;
        mi.member_id = m.at("member_id").get<int>();
        mi.attempt = m.at("attempt").get<int>();
        mi.seed = m.at("seed").get<std::uint64_t>();
        mi.layer_dims = m.at("layer_dims").get<std::vector<std::size_t>>();
        mi.eta_bar = m.at("eta_bar").get<double>();
        mi.lambda_bar = m.at("lambda_bar").get<double>();
        mi.test_mape = m.at("test_mape").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                   : m.at("test_mape").get<double>();
        ens.info.push_back(mi);
    }
    if (ens.members.empty()) throw std::invalid_argument(dir.string() + ": ensemble has no members");
    return ens;
}

/// Per-member MAPE table (the data behind a MAPE histogram).
inline void write_member_mape_csv(std::ostream& os, const Ensemble& ens) {
    os << "member_id,depth,eta_bar,lambda_bar,test_mape\n";
    char buf[160];
    for (const auto& mi : ens.info) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g,%.17g\n", mi.member_id, mi.layer_dims.size() - 1,
                      mi.eta_bar, mi.lambda_bar, mi.test_mape);
        os << buf;
    }
}

} // namespace nnpt
