#pragma once

// Recurrent VAE: a stacked GRU encoder maps a 64x89 roll to a diagonal Gaussian posterior; the
// latent code, repeated for 64 steps, drives a stacked GRU decoder with six two-layer heads
// (melody pitch/onset, bass pitch/onset, tensile strain, cloud diameter).
//
// Forward and backward passes are written out by hand over minibatches. Activations are laid out
// batch-major: a step's state is a (batch x width) matrix, and per-step matrices are stacked as
// rows t*batch + b when the heads run over the whole sequence at once.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttv/dataset.hpp"
#include "ttv/error.hpp"
#include "ttv/roll.hpp"

namespace ttv::vae {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Log-variances are clamped to [-limit, limit] before sampling.
inline constexpr double kLogvarLimit = 10.0;

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
    int latent_dim = 96;
    int hidden = 256;
    int gru_layers = 2;
    int head_hidden = 128;
    double initial_logvar = 0.0;  // starting bias of the log-variance head
    double beta_max = 0.006;
    double beta_step = 5e-7;
    double learning_rate = 0.001;
    double lr_decay = 0.9999;  // per optimizer step, floored at min_learning_rate
    double min_learning_rate = 1e-5;
    double grad_clip = 1.0;  // global L2 norm; 0 disables
    int batch_size = 64;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    int early_stop_patience = 10;
    int max_epochs = 200;
    std::uint64_t rng_seed = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw InvalidInput("model config: " + m); };
        if (latent_dim < 1) fail("latent_dim must be >= 1");
        if (hidden < 1 || gru_layers < 1 || head_hidden < 1) fail("layer sizes must be >= 1");
        if (!(beta_step > 0.0)) fail("beta_step must be positive");
        if (!(beta_max >= 0.0)) fail("beta_max must be non-negative");
        if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must be in (0, 1]");
        if (!(min_learning_rate >= 0.0)) fail("min_learning_rate must be non-negative");
        if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative");
        if (!(std::abs(initial_logvar) <= kLogvarLimit)) fail("initial_logvar must lie within the log-variance clamp");
        if (batch_size < 1) fail("batch_size must be >= 1");
        if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9) fail("split must sum to 1");
        for (double s : split)
            if (s < 0.0) fail("split fractions must be non-negative");
        if (early_stop_patience < 1 || max_epochs < 1) fail("patience and max_epochs must be >= 1");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"latent_dim", c.latent_dim},
         {"hidden", c.hidden},
         {"gru_layers", c.gru_layers},
         {"head_hidden", c.head_hidden},
         {"initial_logvar", c.initial_logvar},
         {"beta_max", c.beta_max},
         {"beta_step", c.beta_step},
         {"learning_rate", c.learning_rate},
         {"lr_decay", c.lr_decay},
         {"min_learning_rate", c.min_learning_rate},
         {"grad_clip", c.grad_clip},
         {"batch_size", c.batch_size},
         {"split", c.split},
         {"early_stop_patience", c.early_stop_patience},
         {"max_epochs", c.max_epochs},
         {"rng_seed", c.rng_seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.latent_dim = j.value("latent_dim", d.latent_dim);
    c.hidden = j.value("hidden", d.hidden);
    c.gru_layers = j.value("gru_layers", d.gru_layers);
    c.head_hidden = j.value("head_hidden", d.head_hidden);
    c.initial_logvar = j.value("initial_logvar", d.initial_logvar);
    c.beta_max = j.value("beta_max", d.beta_max);
    c.beta_step = j.value("beta_step", d.beta_step);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.lr_decay = j.value("lr_decay", d.lr_decay);
    c.min_learning_rate = j.value("min_learning_rate", d.min_learning_rate);
    c.grad_clip = j.value("grad_clip", d.grad_clip);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.split = j.value("split", d.split);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.rng_seed = j.value("rng_seed", d.rng_seed);
}

/// KL weight after `batch_index` optimizer steps: linear warm-up, clamped at beta_max.
inline double beta_schedule(std::int64_t batch_index, const ModelConfig& cfg = {}) {
    if (batch_index <= 0) return 0.0;
    // Rounding keeps the saturation point exact: 0.006 / 5e-7 = 12000 in decimal but not in binary.
    const double raw = cfg.beta_step * static_cast<double>(batch_index);
    const double steps_to_max = std::round(cfg.beta_max / cfg.beta_step);
    if (static_cast<double>(batch_index) >= steps_to_max) return cfg.beta_max;
    return std::min(raw, cfg.beta_max);
}

// ---------------------------------------------------------------------------
// Parameters

enum Head : int { kMelodyPitch = 0, kMelodyRhythm, kBassPitch, kBassRhythm, kTensile, kDiameter, kHeadCount };

inline constexpr std::array<int, kHeadCount> kHeadWidth{layout::kMelodyPitches, 1, layout::kBassPitches, 1, 1, 1};
inline constexpr std::array<const char*, kHeadCount> kHeadName{"melody_pitch", "melody_rhythm", "bass_pitch",
                                                               "bass_rhythm",  "tensile",       "diameter"};

template <typename T>
struct Gru {
    Mat<T> wx;  // in x 3H, gate blocks [reset | update | candidate]
    Mat<T> wh;  // H x 3H
    Mat<T> b;   // 1 x 3H
};

template <typename T>
struct Dense {
    Mat<T> w;  // in x out
    Mat<T> b;  // 1 x out
};

template <typename T>
struct ModelParams {
    std::vector<Gru<T>> encoder;
    std::vector<Gru<T>> decoder;
    Dense<T> mu;
    Dense<T> logvar;
    std::array<Dense<T>, kHeadCount> head_hidden;
    std::array<Dense<T>, kHeadCount> head_out;

    static ModelParams zeros(const ModelConfig& cfg) {
        ModelParams p;
        const int h = cfg.hidden;
        auto gru = [h](int in) { return Gru<T>{Mat<T>::Zero(in, 3 * h), Mat<T>::Zero(h, 3 * h), Mat<T>::Zero(1, 3 * h)}; };
        auto dense = [](int in, int out) { return Dense<T>{Mat<T>::Zero(in, out), Mat<T>::Zero(1, out)}; };
        for (int l = 0; l < cfg.gru_layers; ++l) {
            p.encoder.push_back(gru(l == 0 ? layout::kFeatures : h));
            p.decoder.push_back(gru(l == 0 ? cfg.latent_dim : h));
        }
        p.mu = dense(h, cfg.latent_dim);
        p.logvar = dense(h, cfg.latent_dim);
        for (int k = 0; k < kHeadCount; ++k) {
            p.head_hidden[k] = dense(h, cfg.head_hidden);
            p.head_out[k] = dense(cfg.head_hidden, kHeadWidth[k]);
        }
        return p;
    }

    /// Glorot-uniform kernels, orthogonal recurrent gate blocks, zero biases.
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        auto p = zeros(cfg);
        std::mt19937_64 rng(seed);
        for (auto& [name, m] : p.named()) {
            if (m->rows() == 1) continue;
            if (name.ends_with(".wh")) {
                const Eigen::Index h = m->rows();
                std::normal_distribution<double> normal(0.0, 1.0);
                for (int k = 0; k < 3; ++k) {
                    Eigen::MatrixXd a(h, h);
                    for (Eigen::Index c = 0; c < h; ++c)
                        for (Eigen::Index r = 0; r < h; ++r) a(r, c) = normal(rng);
                    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
                    Eigen::MatrixXd q = qr.householderQ();
                    // Sign fix so the draw is uniform over orthogonal matrices.
                    const Eigen::MatrixXd rr = qr.matrixQR().template triangularView<Eigen::Upper>();
                    for (Eigen::Index c = 0; c < h; ++c)
                        if (rr(c, c) < 0) q.col(c) *= -1.0;
                    m->middleCols(k * h, h) = q.cast<T>();
                }
                continue;
            }
            const double limit = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (Eigen::Index c = 0; c < m->cols(); ++c)
                for (Eigen::Index r = 0; r < m->rows(); ++r) (*m)(r, c) = static_cast<T>(dist(rng));
        }
        p.logvar.b.setConstant(static_cast<T>(cfg.initial_logvar));
        return p;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& [name, m] : named()) s += static_cast<double>(m->template cast<double>().squaredNorm());
        return s;
    }

    void scale(T factor) {
        for (auto& [name, m] : named()) *m *= factor;
    }

    /// Every tensor with a stable name, in a fixed order.
    std::vector<std::pair<std::string, Mat<T>*>> named() {
        std::vector<std::pair<std::string, Mat<T>*>> out;
        auto gru = [&](const std::string& prefix, Gru<T>& g) {
            out.emplace_back(prefix + ".wx", &g.wx);
            out.emplace_back(prefix + ".wh", &g.wh);
            out.emplace_back(prefix + ".b", &g.b);
        };
        auto dense = [&](const std::string& prefix, Dense<T>& d) {
            out.emplace_back(prefix + ".w", &d.w);
            out.emplace_back(prefix + ".b", &d.b);
        };
        for (std::size_t l = 0; l < encoder.size(); ++l) gru("encoder.gru" + std::to_string(l), encoder[l]);
        dense("encoder.mu", mu);
        dense("encoder.logvar", logvar);
        for (std::size_t l = 0; l < decoder.size(); ++l) gru("decoder.gru" + std::to_string(l), decoder[l]);
        for (int k = 0; k < kHeadCount; ++k) {
            dense(std::string("decoder.") + kHeadName[k] + ".dense0", head_hidden[k]);
            dense(std::string("decoder.") + kHeadName[k] + ".dense1", head_out[k]);
        }
        return out;
    }

    std::vector<std::pair<std::string, const Mat<T>*>> named() const {
        std::vector<std::pair<std::string, const Mat<T>*>> out;
        for (auto& [n, m] : const_cast<ModelParams*>(this)->named()) out.emplace_back(n, m);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, m] : named()) n += static_cast<std::size_t>(m->size());
        return n;
    }

    bool all_finite() const {
        for (const auto& [name, m] : named())
            if (!m->allFinite()) return false;
        return true;
    }

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        auto g = [](const Gru<T>& s) { return Gru<U>{s.wx.template cast<U>(), s.wh.template cast<U>(), s.b.template cast<U>()}; };
        auto d = [](const Dense<T>& s) { return Dense<U>{s.w.template cast<U>(), s.b.template cast<U>()}; };
        for (const auto& e : encoder) out.encoder.push_back(g(e));
        for (const auto& e : decoder) out.decoder.push_back(g(e));
        out.mu = d(mu);
        out.logvar = d(logvar);
        for (int k = 0; k < kHeadCount; ++k) {
            out.head_hidden[k] = d(head_hidden[k]);
            out.head_out[k] = d(head_out[k]);
        }
        return out;
    }

    void set_zero() {
        for (auto& [name, m] : named()) m->setZero();
    }
};

// ---------------------------------------------------------------------------
// Value types at the public boundary

struct Posterior {
    Eigen::VectorXd mu;
    Eigen::VectorXd logvar;
};

using LatentCode = Eigen::VectorXd;

struct DecoderOutput {
    Eigen::MatrixXd melody_pitch;   // 64 x 74, rows sum to 1
    Eigen::VectorXd melody_onset;   // 64, in (0,1)
    Eigen::MatrixXd bass_pitch;     // 64 x 13
    Eigen::VectorXd bass_onset;     // 64
    Eigen::VectorXd tensile;        // 64
    Eigen::VectorXd diameter;       // 64
};

/// The six reconstruction/tension terms, the unweighted KL and the total.
struct LossBreakdown {
    double melody_pitch = 0.0;
    double melody_rhythm = 0.0;
    double bass_pitch = 0.0;
    double bass_rhythm = 0.0;
    double tensile = 0.0;
    double diameter = 0.0;
    double kl = 0.0;
    double beta = 0.0;
    double total = 0.0;

    void finalize() { total = melody_pitch + melody_rhythm + bass_pitch + bass_rhythm + tensile + diameter + beta * kl; }

    LossBreakdown& operator+=(const LossBreakdown& o) {
        melody_pitch += o.melody_pitch;
        melody_rhythm += o.melody_rhythm;
        bass_pitch += o.bass_pitch;
        bass_rhythm += o.bass_rhythm;
        tensile += o.tensile;
        diameter += o.diameter;
        kl += o.kl;
        beta += o.beta;
        total += o.total;
        return *this;
    }
    LossBreakdown scaled(double s) const {
        LossBreakdown r = *this;
        r.melody_pitch *= s;
        r.melody_rhythm *= s;
        r.bass_pitch *= s;
        r.bass_rhythm *= s;
        r.tensile *= s;
        r.diameter *= s;
        r.kl *= s;
        r.beta *= s;
        r.total *= s;
        return r;
    }
};

/// Per-term multipliers on the gradient; all ones for training. Used to check terms in isolation.
struct LossWeights {
    std::array<double, kHeadCount> head{1, 1, 1, 1, 1, 1};
    double kl = 1.0;

    static LossWeights only(int term) {  // 0..5 heads, 6 = KL
        LossWeights w;
        w.head.fill(0.0);
        w.kl = 0.0;
        if (term < kHeadCount)
            w.head[term] = 1.0;
        else
            w.kl = 1.0;
        return w;
    }
};

inline constexpr double kProbFloor = 1e-10;

inline double kl_divergence(const Posterior& p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.mu.size(); ++i) s += std::exp(p.logvar[i]) + p.mu[i] * p.mu[i] - 1.0 - p.logvar[i];
    return 0.5 * s;
}

inline LatentCode reparameterize(const Posterior& p, const Eigen::VectorXd& noise) {
    if (noise.size() != p.mu.size()) throw InvalidInput("noise dimension does not match the posterior");
    return p.mu + ((0.5 * p.logvar.array()).exp() * noise.array()).matrix();
}

/// Loss of one decoded example against its roll and tension targets.
inline LossBreakdown loss(const DecoderOutput& out, const PianoRoll& roll, std::span<const float, layout::kSteps> tensile,
                          std::span<const float, layout::kSteps> diameter, double beta, double kl = 0.0) {
    auto ce = [](double p) { return -std::log(std::max(p, kProbFloor)); };
    auto bce = [&](double p, bool y) { return y ? ce(p) : ce(1.0 - p); };
    LossBreakdown l;
    for (int t = 0; t < layout::kSteps; ++t) {
        l.melody_pitch += ce(out.melody_pitch(t, roll.melody_column(t)));
        l.melody_rhythm += bce(out.melody_onset[t], roll.melody_onset(t));
        l.bass_pitch += ce(out.bass_pitch(t, roll.bass_class(t)));
        l.bass_rhythm += bce(out.bass_onset[t], roll.bass_onset(t));
        const double dt = out.tensile[t] - tensile[t];
        const double dd = out.diameter[t] - diameter[t];
        l.tensile += dt * dt;
        l.diameter += dd * dd;
    }
    const double n = layout::kSteps;
    l.melody_pitch /= n;
    l.melody_rhythm /= n;
    l.bass_pitch /= n;
    l.bass_rhythm /= n;
    l.tensile /= n;
    l.diameter /= n;
    l.kl = kl;
    l.beta = beta;
    l.finalize();
    return l;
}

// ---------------------------------------------------------------------------
// Batched network

namespace detail {

template <typename T>
Mat<T> sigmoid(const Mat<T>& a) {
    return (T(1) / (T(1) + (-a.array()).exp())).matrix();
}

template <typename T>
Mat<T> softmax_rows(const Mat<T>& a) {
    Mat<T> e = (a.colwise() - a.rowwise().maxCoeff()).array().exp().matrix();
    e.array().colwise() /= e.rowwise().sum().array();
    return e;
}

template <typename T>
void check_finite(const Mat<T>& m, const std::string& where) {
    if (!m.allFinite()) throw NumericFailure("non-finite activation in " + where);
}

/// Activations of one GRU layer over a sequence; h[0] is the initial state.
template <typename T>
struct GruTape {
    std::vector<Mat<T>> h, r, u, n;
};

template <typename T>
void gru_forward(const Gru<T>& w, const std::vector<const Mat<T>*>& xs, int batch, GruTape<T>& tape) {
    const Eigen::Index H = w.wh.rows();
    const std::size_t steps = xs.size();
    tape.h.assign(steps + 1, Mat<T>());
    tape.r.assign(steps, Mat<T>());
    tape.u.assign(steps, Mat<T>());
    tape.n.assign(steps, Mat<T>());
    tape.h[0] = Mat<T>::Zero(batch, H);
    Mat<T> gx, gh;
    const Mat<T>* last_x = nullptr;
    for (std::size_t t = 0; t < steps; ++t) {
        if (xs[t] != last_x) {  // a repeated input (the tiled latent) is projected once
            gx.noalias() = *xs[t] * w.wx;
            gx.rowwise() += w.b.row(0);
            last_x = xs[t];
        }
        const Mat<T>& hp = tape.h[t];
        gh.noalias() = hp * w.wh.leftCols(2 * H);
        tape.r[t] = sigmoid<T>(gx.leftCols(H) + gh.leftCols(H));
        tape.u[t] = sigmoid<T>(gx.middleCols(H, H) + gh.rightCols(H));
        Mat<T> rh = tape.r[t].cwiseProduct(hp);
        Mat<T> cand = gx.rightCols(H);
        cand.noalias() += rh * w.wh.rightCols(H);
        tape.n[t] = cand.array().tanh().matrix();
        tape.h[t + 1] = (T(1) - tape.u[t].array()).matrix().cwiseProduct(tape.n[t]) + tape.u[t].cwiseProduct(hp);
    }
}

/// Backpropagates `dh_out[t]` (gradient w.r.t. the state emitted at step t) through the layer.
/// Accumulates weight gradients into `g`; writes input gradients into `dxs` when non-null.
template <typename T>
void gru_backward(const Gru<T>& w, const std::vector<const Mat<T>*>& xs, const GruTape<T>& tape,
                  const std::vector<Mat<T>>& dh_out, Gru<T>& g, std::vector<Mat<T>>* dxs) {
    const Eigen::Index H = w.wh.rows();
    const std::size_t steps = xs.size();
    const Eigen::Index B = tape.h[0].rows();
    Mat<T> dh_carry = Mat<T>::Zero(B, H);
    Mat<T> dgates(B, 3 * H);
    if (dxs) dxs->assign(steps, Mat<T>());
    for (std::size_t ti = steps; ti-- > 0;) {
        const Mat<T>& hp = tape.h[ti];
        const Mat<T>& r = tape.r[ti];
        const Mat<T>& u = tape.u[ti];
        const Mat<T>& n = tape.n[ti];
        Mat<T> dh = dh_carry;
        if (dh_out[ti].size()) dh += dh_out[ti];

        const Mat<T> dn = dh.cwiseProduct((T(1) - u.array()).matrix());
        const Mat<T> du = dh.cwiseProduct(hp - n);
        Mat<T> dh_prev = dh.cwiseProduct(u);

        dgates.rightCols(H) = dn.cwiseProduct((T(1) - n.array().square()).matrix());
        dgates.middleCols(H, H) = du.cwiseProduct(u.cwiseProduct((T(1) - u.array()).matrix()));
        Mat<T> drh;
        drh.noalias() = dgates.rightCols(H) * w.wh.rightCols(H).transpose();
        dh_prev += drh.cwiseProduct(r);
        dgates.leftCols(H) = drh.cwiseProduct(hp).cwiseProduct(r.cwiseProduct((T(1) - r.array()).matrix()));

        g.wh.rightCols(H).noalias() += r.cwiseProduct(hp).transpose() * dgates.rightCols(H);
        g.wh.leftCols(2 * H).noalias() += hp.transpose() * dgates.leftCols(2 * H);
        dh_prev.noalias() += dgates.leftCols(2 * H) * w.wh.leftCols(2 * H).transpose();

        g.wx.noalias() += xs[ti]->transpose() * dgates;
        g.b += dgates.colwise().sum();
        if (dxs) (*dxs)[ti].noalias() = dgates * w.wx.transpose();
        dh_carry = std::move(dh_prev);
    }
}

}  // namespace detail

/// Model inputs and targets for a minibatch, in the network's scalar type.
template <typename T>
struct Batch {
    int size = 0;
    std::vector<Mat<T>> steps;                  // 64 matrices of (batch x 89)
    std::vector<int> melody_class, bass_class;  // stacked rows t*batch + b
    Mat<T> melody_onset, bass_onset;            // (64*batch x 1)
    Mat<T> tensile, diameter;                   // (64*batch x 1)

    static Batch from_rolls(std::span<const PianoRoll* const> rolls) {
        Batch b;
        b.size = static_cast<int>(rolls.size());
        const int N = layout::kSteps * b.size;
        b.steps.assign(layout::kSteps, Mat<T>(b.size, layout::kFeatures));
        b.melody_class.resize(N);
        b.bass_class.resize(N);
        b.melody_onset.resize(N, 1);
        b.bass_onset.resize(N, 1);
        b.tensile = Mat<T>::Zero(N, 1);
        b.diameter = Mat<T>::Zero(N, 1);
        for (int i = 0; i < b.size; ++i) {
            const PianoRoll& roll = *rolls[i];
            for (int t = 0; t < layout::kSteps; ++t) {
                for (int f = 0; f < layout::kFeatures; ++f) b.steps[t](i, f) = static_cast<T>(roll.at(t, f));
                const int row = t * b.size + i;
                b.melody_class[row] = roll.melody_column(t);
                b.bass_class[row] = roll.bass_class(t);
                b.melody_onset(row, 0) = roll.melody_onset(t) ? T(1) : T(0);
                b.bass_onset(row, 0) = roll.bass_onset(t) ? T(1) : T(0);
            }
        }
        return b;
    }

    static Batch from_fragments(std::span<const dataset::Fragment* const> frags) {
        std::vector<const PianoRoll*> rolls;
        for (const auto* f : frags) rolls.push_back(&f->roll);
        Batch b = from_rolls(rolls);
        for (int i = 0; i < b.size; ++i)
            for (int t = 0; t < layout::kSteps; ++t) {
                b.tensile(t * b.size + i, 0) = static_cast<T>(frags[i]->tensile[t]);
                b.diameter(t * b.size + i, 0) = static_cast<T>(frags[i]->diameter[t]);
            }
        return b;
    }
};

/// Stateless network evaluator over a fixed parameter set.
template <typename T>
class Network {
public:
    explicit Network(const ModelParams<T>& p) : p_(p) {}

    struct EncoderTape {
        std::vector<detail::GruTape<T>> layers;
        Mat<T> mu, logvar_raw, logvar;
    };

    struct DecoderTape {
        Mat<T> z;
        std::vector<detail::GruTape<T>> layers;
        Mat<T> stacked;  // (64*batch x H) top-layer states
        std::array<Mat<T>, kHeadCount> hidden;  // tanh activations
        std::array<Mat<T>, kHeadCount> out;     // probabilities (pitch/onset) or values (tension)
    };

    void encode(const Batch<T>& batch, EncoderTape& tape) const {
        tape.layers.assign(p_.encoder.size(), {});
        std::vector<const Mat<T>*> xs;
        for (const auto& s : batch.steps) xs.push_back(&s);
        for (std::size_t l = 0; l < p_.encoder.size(); ++l) {
            detail::gru_forward(p_.encoder[l], xs, batch.size, tape.layers[l]);
            detail::check_finite(tape.layers[l].h.back(), "encoder.gru" + std::to_string(l));
            xs.clear();
            for (int t = 0; t < layout::kSteps; ++t) xs.push_back(&tape.layers[l].h[t + 1]);
        }
        const Mat<T>& last = tape.layers.back().h.back();
        tape.mu.noalias() = last * p_.mu.w;
        tape.mu.rowwise() += p_.mu.b.row(0);
        tape.logvar_raw.noalias() = last * p_.logvar.w;
        tape.logvar_raw.rowwise() += p_.logvar.b.row(0);
        tape.logvar = tape.logvar_raw.cwiseMax(T(-kLogvarLimit)).cwiseMin(T(kLogvarLimit));
        detail::check_finite(tape.mu, "encoder.mu");
        detail::check_finite(tape.logvar, "encoder.logvar");
    }

    void decode(const Mat<T>& z, DecoderTape& tape) const {
        const int B = static_cast<int>(z.rows());
        const Eigen::Index H = p_.decoder.front().wh.rows();
        tape.z = z;
        tape.layers.assign(p_.decoder.size(), {});
        std::vector<const Mat<T>*> xs(layout::kSteps, &tape.z);
        for (std::size_t l = 0; l < p_.decoder.size(); ++l) {
            detail::gru_forward(p_.decoder[l], xs, B, tape.layers[l]);
            detail::check_finite(tape.layers[l].h.back(), "decoder.gru" + std::to_string(l));
            for (int t = 0; t < layout::kSteps; ++t) xs[t] = &tape.layers[l].h[t + 1];
        }
        tape.stacked.resize(static_cast<Eigen::Index>(layout::kSteps) * B, H);
        for (int t = 0; t < layout::kSteps; ++t) tape.stacked.middleRows(t * B, B) = tape.layers.back().h[t + 1];
        for (int k = 0; k < kHeadCount; ++k) {
            Mat<T> a;
            a.noalias() = tape.stacked * p_.head_hidden[k].w;
            a.rowwise() += p_.head_hidden[k].b.row(0);
            tape.hidden[k] = a.array().tanh().matrix();
            Mat<T> o;
            o.noalias() = tape.hidden[k] * p_.head_out[k].w;
            o.rowwise() += p_.head_out[k].b.row(0);
            switch (k) {
                case kMelodyPitch:
                case kBassPitch: tape.out[k] = detail::softmax_rows<T>(o); break;
                case kMelodyRhythm:
                case kBassRhythm: tape.out[k] = detail::sigmoid<T>(o); break;
                default: tape.out[k] = std::move(o); break;
            }
            detail::check_finite(tape.out[k], std::string("decoder.") + kHeadName[k]);
        }
    }

    /// Batch-mean loss. When `grads` is non-null it receives d(weighted loss)/d(params) (accumulated).
    /// `noise` is (batch x latent); zero noise decodes the posterior mean.
    LossBreakdown forward_backward(const Batch<T>& batch, const Mat<T>& noise, double beta, ModelParams<T>* grads,
                                   const LossWeights& weights = {}) const {
        EncoderTape enc;
        encode(batch, enc);
        const int B = batch.size;
        const Mat<T> sigma = (T(0.5) * enc.logvar.array()).exp().matrix();
        const Mat<T> z = enc.mu + sigma.cwiseProduct(noise);
        DecoderTape dec;
        decode(z, dec);

        const int N = layout::kSteps * B;
        LossBreakdown l;
        auto floor_log = [](T p) { return -std::log(std::max(static_cast<double>(p), kProbFloor)); };
        double sums[kHeadCount] = {};
        for (int row = 0; row < N; ++row) {
            sums[kMelodyPitch] += floor_log(dec.out[kMelodyPitch](row, batch.melody_class[row]));
            sums[kBassPitch] += floor_log(dec.out[kBassPitch](row, batch.bass_class[row]));
            const T pm = dec.out[kMelodyRhythm](row, 0), pb = dec.out[kBassRhythm](row, 0);
            sums[kMelodyRhythm] += batch.melody_onset(row, 0) > T(0.5) ? floor_log(pm) : floor_log(T(1) - pm);
            sums[kBassRhythm] += batch.bass_onset(row, 0) > T(0.5) ? floor_log(pb) : floor_log(T(1) - pb);
            const double dt = static_cast<double>(dec.out[kTensile](row, 0) - batch.tensile(row, 0));
            const double dd = static_cast<double>(dec.out[kDiameter](row, 0) - batch.diameter(row, 0));
            sums[kTensile] += dt * dt;
            sums[kDiameter] += dd * dd;
        }
        l.melody_pitch = sums[kMelodyPitch] / N;
        l.melody_rhythm = sums[kMelodyRhythm] / N;
        l.bass_pitch = sums[kBassPitch] / N;
        l.bass_rhythm = sums[kBassRhythm] / N;
        l.tensile = sums[kTensile] / N;
        l.diameter = sums[kDiameter] / N;
        double kl = 0.0;
        for (Eigen::Index i = 0; i < enc.mu.size(); ++i) {
            const double m = enc.mu.data()[i], lv = enc.logvar.data()[i];
            kl += std::exp(lv) + m * m - 1.0 - lv;
        }
        l.kl = 0.5 * kl / B;
        l.beta = beta;
        l.finalize();
        if (!grads) return l;

        // Output-layer gradients of the mean losses.
        const T inv_n = T(1) / T(N);
        std::array<Mat<T>, kHeadCount> dout;
        dout[kMelodyPitch] = dec.out[kMelodyPitch];
        dout[kBassPitch] = dec.out[kBassPitch];
        for (int row = 0; row < N; ++row) {
            dout[kMelodyPitch](row, batch.melody_class[row]) -= T(1);
            dout[kBassPitch](row, batch.bass_class[row]) -= T(1);
        }
        dout[kMelodyRhythm] = dec.out[kMelodyRhythm] - batch.melody_onset;
        dout[kBassRhythm] = dec.out[kBassRhythm] - batch.bass_onset;
        dout[kTensile] = T(2) * (dec.out[kTensile] - batch.tensile);
        dout[kDiameter] = T(2) * (dec.out[kDiameter] - batch.diameter);

        const Eigen::Index H = p_.decoder.front().wh.rows();
        Mat<T> dstacked = Mat<T>::Zero(N, H);
        for (int k = 0; k < kHeadCount; ++k) {
            dout[k] *= static_cast<T>(weights.head[k]) * inv_n;
            grads->head_out[k].w.noalias() += dec.hidden[k].transpose() * dout[k];
            grads->head_out[k].b += dout[k].colwise().sum();
            Mat<T> da;
            da.noalias() = dout[k] * p_.head_out[k].w.transpose();
            da = da.cwiseProduct((T(1) - dec.hidden[k].array().square()).matrix());
            grads->head_hidden[k].w.noalias() += dec.stacked.transpose() * da;
            grads->head_hidden[k].b += da.colwise().sum();
            dstacked.noalias() += da * p_.head_hidden[k].w.transpose();
        }

        // Decoder BPTT, top layer first.
        std::vector<Mat<T>> dh(layout::kSteps);
        for (int t = 0; t < layout::kSteps; ++t) dh[t] = dstacked.middleRows(t * B, B);
        Mat<T> dz = Mat<T>::Zero(B, z.cols());
        for (std::size_t l = p_.decoder.size(); l-- > 0;) {
            std::vector<const Mat<T>*> xs(layout::kSteps, &dec.z);
            if (l > 0)
                for (int t = 0; t < layout::kSteps; ++t) xs[t] = &dec.layers[l - 1].h[t + 1];
            std::vector<Mat<T>> dxs;
            detail::gru_backward(p_.decoder[l], xs, dec.layers[l], dh, grads->decoder[l], &dxs);
            if (l > 0)
                dh = std::move(dxs);
            else
                for (const auto& d : dxs) dz += d;
        }

        // Reparameterization and KL.
        const T kl_scale = static_cast<T>(weights.kl * beta) / T(B);
        Mat<T> dmu = dz + kl_scale * enc.mu;
        Mat<T> dlogvar = dz.cwiseProduct(noise).cwiseProduct(sigma) * T(0.5) +
                         (kl_scale * T(0.5)) * (enc.logvar.array().exp() - T(1)).matrix();
        for (Eigen::Index i = 0; i < dlogvar.size(); ++i) {
            const T raw = enc.logvar_raw.data()[i];
            if (raw < T(-kLogvarLimit) || raw > T(kLogvarLimit)) dlogvar.data()[i] = T(0);
        }
        const Mat<T>& last = enc.layers.back().h.back();
        grads->mu.w.noalias() += last.transpose() * dmu;
        grads->mu.b += dmu.colwise().sum();
        grads->logvar.w.noalias() += last.transpose() * dlogvar;
        grads->logvar.b += dlogvar.colwise().sum();
        Mat<T> dlast;
        dlast.noalias() = dmu * p_.mu.w.transpose();
        dlast.noalias() += dlogvar * p_.logvar.w.transpose();

        // Encoder BPTT: only the final state of the top layer feeds the heads.
        std::vector<Mat<T>> dhe(layout::kSteps);
        dhe.back() = std::move(dlast);
        for (std::size_t l = p_.encoder.size(); l-- > 0;) {
            std::vector<const Mat<T>*> xs;
            if (l == 0)
                for (const auto& s : batch.steps) xs.push_back(&s);
            else
                for (int t = 0; t < layout::kSteps; ++t) xs.push_back(&enc.layers[l - 1].h[t + 1]);
            std::vector<Mat<T>> dxs;
            detail::gru_backward(p_.encoder[l], xs, enc.layers[l], dhe, grads->encoder[l], l > 0 ? &dxs : nullptr);
            if (l > 0) dhe = std::move(dxs);
        }
        return l;
    }

    const ModelParams<T>& params() const { return p_; }

private:
    const ModelParams<T>& p_;
};

// ---------------------------------------------------------------------------
// Single-example and convenience wrappers

namespace detail {
template <typename T>
DecoderOutput unstack(const typename Network<T>::DecoderTape& tape, int b, int B) {
    DecoderOutput o;
    o.melody_pitch.resize(layout::kSteps, layout::kMelodyPitches);
    o.bass_pitch.resize(layout::kSteps, layout::kBassPitches);
    o.melody_onset.resize(layout::kSteps);
    o.bass_onset.resize(layout::kSteps);
    o.tensile.resize(layout::kSteps);
    o.diameter.resize(layout::kSteps);
    for (int t = 0; t < layout::kSteps; ++t) {
        const int row = t * B + b;
        o.melody_pitch.row(t) = tape.out[kMelodyPitch].row(row).template cast<double>();
        o.bass_pitch.row(t) = tape.out[kBassPitch].row(row).template cast<double>();
        o.melody_onset[t] = static_cast<double>(tape.out[kMelodyRhythm](row, 0));
        o.bass_onset[t] = static_cast<double>(tape.out[kBassRhythm](row, 0));
        o.tensile[t] = static_cast<double>(tape.out[kTensile](row, 0));
        o.diameter[t] = static_cast<double>(tape.out[kDiameter](row, 0));
    }
    return o;
}
}  // namespace detail

/// Posterior for each roll, processed in chunks of `chunk` examples.
template <typename T>
std::vector<Posterior> encode_batch(std::span<const PianoRoll* const> rolls, const ModelParams<T>& params,
                                    std::size_t chunk = 256) {
    std::vector<Posterior> out;
    out.reserve(rolls.size());
    Network<T> net(params);
    for (std::size_t start = 0; start < rolls.size(); start += chunk) {
        const auto part = rolls.subspan(start, std::min(chunk, rolls.size() - start));
        for (const auto* r : part) r->validate();
        const auto batch = Batch<T>::from_rolls(part);
        typename Network<T>::EncoderTape tape;
        net.encode(batch, tape);
        for (int b = 0; b < batch.size; ++b)
            out.push_back({tape.mu.row(b).transpose().template cast<double>(),
                           tape.logvar.row(b).transpose().template cast<double>()});
    }
    return out;
}

template <typename T>
Posterior encode(const PianoRoll& roll, const ModelParams<T>& params) {
    const PianoRoll* p = &roll;
    return encode_batch<T>(std::span<const PianoRoll* const>(&p, 1), params).front();
}

/// Decodes each row of `z` (n x latent_dim).
template <typename T>
std::vector<DecoderOutput> decode_batch(const Eigen::MatrixXd& z, const ModelParams<T>& params, Eigen::Index chunk = 256) {
    if (!z.allFinite()) throw InvalidInput("latent code is not finite");
    if (z.cols() != params.mu.w.cols()) throw InvalidInput("latent dimension does not match the model");
    std::vector<DecoderOutput> out;
    out.reserve(static_cast<std::size_t>(z.rows()));
    Network<T> net(params);
    for (Eigen::Index start = 0; start < z.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, z.rows() - start);
        typename Network<T>::DecoderTape tape;
        net.decode(z.middleRows(start, n).template cast<T>(), tape);
        for (int b = 0; b < n; ++b) out.push_back(detail::unstack<T>(tape, b, static_cast<int>(n)));
    }
    return out;
}

template <typename T>
DecoderOutput decode(const LatentCode& z, const ModelParams<T>& params) {
    return decode_batch<T>(z.transpose(), params).front();
}

/// n i.i.d. standard-normal latent codes (one per row).
inline Eigen::MatrixXd sample_latent(int n, int latent_dim, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("sample_latent needs n >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(n, latent_dim);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < latent_dim; ++d) z(i, d) = normal(rng);
    return z;
}

}  // namespace ttv::vae
