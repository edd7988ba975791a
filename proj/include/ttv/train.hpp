#pragma once

// Adam, the seeded train/validation/test split and the early-stopped training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ttv/dataset.hpp"
#include "ttv/vae.hpp"

namespace ttv::train {

using vae::LossBreakdown;
using vae::Mat;
using vae::ModelConfig;
using vae::ModelParams;

template <typename T>
class Adam {
public:
    Adam(const ModelParams<T>& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(like), v_(like), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        m_.set_zero();
        v_.set_zero();
    }

    void step(ModelParams<T>& params, ModelParams<T>& grads) {
        ++t_;
        const T c1 = static_cast<T>(1.0 - std::pow(b1_, static_cast<double>(t_)));
        const T c2 = static_cast<T>(1.0 - std::pow(b2_, static_cast<double>(t_)));
        const T lr = static_cast<T>(lr_), b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_), eps = static_cast<T>(eps_);
        auto p = params.named();
        auto g = grads.named();
        auto m = m_.named();
        auto v = v_.named();
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto& gm = *g[i].second;
            m[i].second->array() = b1 * m[i].second->array() + (T(1) - b1) * gm.array();
            v[i].second->array() = b2 * v[i].second->array() + (T(1) - b2) * gm.array().square();
            p[i].second->array() -=
                lr * (m[i].second->array() / c1) / ((v[i].second->array() / c2).sqrt() + eps);
        }
    }

    std::int64_t steps() const { return t_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    ModelParams<T> m_, v_;
    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

struct Split {
    std::vector<std::size_t> train, valid, test;
};

/// Seeded shuffle, then validation and test each take round(fraction * n) (at least one when
/// n >= 10 and the fraction is non-zero); the remainder trains.
inline Split split_indices(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto count = [&](double f) {
        auto c = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
        if (f > 0.0 && c == 0 && n >= 10) c = 1;
        return c;
    };
    const std::size_t nv = count(fractions[1]), nt = count(fractions[2]);
    Split s;
    s.valid.assign(idx.begin(), idx.begin() + nv);
    s.test.assign(idx.begin() + nv, idx.begin() + nv + nt);
    s.train.assign(idx.begin() + nv + nt, idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.valid.begin(), s.valid.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

struct LedgerRow {
    int epoch = 0;
    std::string split;
    LossBreakdown loss;
};

inline const char* kLedgerHeader = "epoch,split,melody_pitch,melody_rhythm,bass_pitch,bass_rhythm,tensile,diameter,kl,beta,total";

inline void write_ledger(std::ostream& os, const std::vector<LedgerRow>& rows) {
    os << kLedgerHeader << '\n';
    char buf[512];
    for (const auto& r : rows) {
        const auto& l = r.loss;
        std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.split.c_str(),
                      l.melody_pitch, l.melody_rhythm, l.bass_pitch, l.bass_rhythm, l.tensile, l.diameter, l.kl,
                      l.beta, l.total);
        os << buf;
    }
}

inline std::string ledger_csv(const std::vector<LedgerRow>& rows) {
    std::ostringstream os;
    write_ledger(os, rows);
    return os.str();
}

/// Loss over `ids` decoding the posterior mean (no sampling), in chunks.
template <typename T>
LossBreakdown evaluate(const ModelParams<T>& params, const std::vector<dataset::Fragment>& frags,
                       const std::vector<std::size_t>& ids, double beta, std::size_t chunk = 64) {
    LossBreakdown acc;
    if (ids.empty()) return acc;
    vae::Network<T> net(params);
    for (std::size_t start = 0; start < ids.size(); start += chunk) {
        std::vector<const dataset::Fragment*> part;
        for (std::size_t i = start; i < std::min(ids.size(), start + chunk); ++i) part.push_back(&frags[ids[i]]);
        const auto batch = vae::Batch<T>::from_fragments(part);
        const Mat<T> noise = Mat<T>::Zero(batch.size, params.mu.w.cols());
        acc += net.forward_backward(batch, noise, beta, nullptr).scaled(static_cast<double>(batch.size));
    }
    auto mean = acc.scaled(1.0 / static_cast<double>(ids.size()));
    mean.beta = beta;
    mean.finalize();
    return mean;
}

struct TrainResult {
    ModelParams<float> best;
    ModelParams<float> last_good;
    std::vector<LedgerRow> ledger;
    Split split;
    int epochs_run = 0;
    int best_epoch = 0;
    std::int64_t global_batch = 0;
    double final_beta = 0.0;
    bool aborted = false;
    std::string diagnostic;
};

struct TrainOptions {
    /// Called after every epoch with the ledger rows written so far.
    std::function<void(int epoch, const std::vector<LedgerRow>&)> on_epoch;
    /// Restrict training to these fragment ids instead of the seeded split (used for overfit runs).
    std::vector<std::size_t> train_override;
};

/// Exponential per-step decay from the starting rate, floored at min_learning_rate.
inline double learning_rate_at(std::int64_t step, const ModelConfig& cfg) {
    return std::max(cfg.min_learning_rate, cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(step)));
}

/// Adam on minibatches with the annealed KL weight; early stopping on validation total loss.
/// Single-threaded and fully seeded, so identical inputs give identical ledgers and weights.
inline TrainResult train(const dataset::FragmentDataset& ds, const ModelConfig& cfg, const TrainOptions& opt = {}) {
    cfg.validate();
    if (ds.size() < 10) throw InvalidInput("training needs at least 10 fragments, got " + std::to_string(ds.size()));
    TrainResult res;
    res.split = split_indices(ds.size(), cfg.split, cfg.rng_seed);
    if (!opt.train_override.empty()) res.split.train = opt.train_override;
    if (res.split.train.empty()) throw InvalidInput("training split is empty");
    const auto& monitor_ids = res.split.valid.empty() ? res.split.train : res.split.valid;

    auto params = ModelParams<float>::init(cfg, cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
    auto grads = ModelParams<float>::zeros(cfg);
    Adam<float> adam(params, cfg.learning_rate);
    std::mt19937_64 rng(cfg.rng_seed + 1);
    std::normal_distribution<float> normal(0.0f, 1.0f);

    res.best = params;
    res.last_good = params;
    double best_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<std::size_t> order = res.split.train;
    vae::Network<float> net(params);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown acc;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const dataset::Fragment*> part;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                part.push_back(&ds.fragments[order[i]]);
            const auto batch = vae::Batch<float>::from_fragments(part);
            Mat<float> noise(batch.size, cfg.latent_dim);
            for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
            const double beta = vae::beta_schedule(res.global_batch, cfg);
            grads.set_zero();
            LossBreakdown l;
            try {
                l = net.forward_backward(batch, noise, beta, &grads);
            } catch (const NumericFailure& e) {
                res.aborted = true;
                res.diagnostic = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
                return res;
            }
            if (!std::isfinite(l.total)) {
                res.aborted = true;
                res.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(res.global_batch);
                return res;
            }
            if (cfg.grad_clip > 0.0) {
                const double norm = std::sqrt(grads.squared_norm());
                if (norm > cfg.grad_clip) grads.scale(static_cast<float>(cfg.grad_clip / norm));
            }
            adam.set_lr(learning_rate_at(res.global_batch, cfg));
            adam.step(params, grads);
            ++res.global_batch;
            res.final_beta = beta;
            acc += l.scaled(static_cast<double>(batch.size));
        }
        if (!params.all_finite()) {
            res.aborted = true;
            res.diagnostic = "non-finite parameters after epoch " + std::to_string(epoch);
            return res;
        }
        res.last_good = params;
        res.epochs_run = epoch;
        auto train_loss = acc.scaled(1.0 / static_cast<double>(order.size()));
        train_loss.finalize();  // beta column holds the epoch's mean KL weight
        res.ledger.push_back({epoch, "train", train_loss});
        const auto valid = evaluate(params, ds.fragments, monitor_ids, vae::beta_schedule(res.global_batch, cfg));
        res.ledger.push_back({epoch, "valid", valid});
        if (valid.total < best_loss) {
            best_loss = valid.total;
            res.best = params;
            res.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            if (opt.on_epoch) opt.on_epoch(epoch, res.ledger);
            break;
        }
        if (opt.on_epoch) opt.on_epoch(epoch, res.ledger);
    }
    if (!res.split.test.empty())
        res.ledger.push_back(
            {res.best_epoch, "test", evaluate(res.best, ds.fragments, res.split.test, vae::beta_schedule(res.global_batch, cfg))});
    return res;
}

/// Fraction of steps whose argmax melody pitch matches the roll, decoding the posterior mean.
template <typename T>
double melody_pitch_accuracy(const ModelParams<T>& params, const std::vector<dataset::Fragment>& frags,
                             const std::vector<std::size_t>& ids) {
    if (ids.empty()) return 0.0;
    std::vector<const PianoRoll*> rolls;
    for (auto i : ids) rolls.push_back(&frags[i].roll);
    const auto post = vae::encode_batch<T>(rolls, params);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(ids.size()), params.mu.w.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = post[i].mu.transpose();
    const auto outs = vae::decode_batch<T>(z, params);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (int t = 0; t < layout::kSteps; ++t) {
            Eigen::Index arg;
            outs[i].melody_pitch.row(t).maxCoeff(&arg);
            hits += static_cast<int>(arg) == rolls[i]->melody_column(t);
        }
    return static_cast<double>(hits) / static_cast<double>(ids.size() * layout::kSteps);
}

}  // namespace ttv::train
