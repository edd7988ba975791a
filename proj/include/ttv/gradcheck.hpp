#pragma once

// Central finite-difference verification of the hand-written backward pass.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ttv/vae.hpp"

namespace ttv::gradcheck {

struct TermReport {
    std::string term;
    double max_rel_error = 0.0;
    std::string worst_tensor;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct Report {
    std::vector<TermReport> terms;  // six heads, KL, then the full total
    int samples_per_term = 0;
    double max_rel_error = 0.0;
};

struct Options {
    int samples = 200;
    double step = 1e-4;
    /// Denominator floor: gradients smaller than this are compared in absolute terms.
    double floor = 1e-6;
    double beta = 0.5;
    std::uint64_t seed = 7;
};

inline double relative_error(double a, double n, double floor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Tiny model used by the default harness.
inline vae::ModelConfig tiny_config() {
    vae::ModelConfig cfg;
    cfg.hidden = 8;
    cfg.latent_dim = 4;
    cfg.head_hidden = 6;
    return cfg;
}

/// Compares analytic gradients of each loss term (and of the full total) against central
/// differences on `opt.samples` weights drawn uniformly over all parameters.
inline Report gradient_check(const vae::ModelParams<double>& params, const vae::Batch<double>& batch,
                             const vae::Mat<double>& noise, const Options& opt = {}) {
    Report rep;
    rep.samples_per_term = opt.samples;
    auto work = params;
    auto named = work.named();
    std::size_t total_size = 0;
    for (auto& [n, m] : named) total_size += static_cast<std::size_t>(m->size());

    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total_size - 1);

    auto locate = [&](std::size_t flat) -> std::pair<std::size_t, Eigen::Index> {
        for (std::size_t t = 0; t < named.size(); ++t) {
            const auto sz = static_cast<std::size_t>(named[t].second->size());
            if (flat < sz) return {t, static_cast<Eigen::Index>(flat)};
            flat -= sz;
        }
        return {named.size() - 1, 0};
    };

    for (int term = 0; term <= vae::kHeadCount + 1; ++term) {
        const bool full = term == vae::kHeadCount + 1;
        const auto weights = full ? vae::LossWeights{} : vae::LossWeights::only(term);
        auto weighted = [&](const vae::LossBreakdown& l) {
            const double parts[vae::kHeadCount] = {l.melody_pitch, l.melody_rhythm, l.bass_pitch,
                                                   l.bass_rhythm,  l.tensile,       l.diameter};
            double s = weights.kl * opt.beta * l.kl;
            for (int k = 0; k < vae::kHeadCount; ++k) s += weights.head[k] * parts[k];
            return s;
        };
        auto grads = work;
        grads.set_zero();
        vae::Network<double> net(work);
        net.forward_backward(batch, noise, opt.beta, &grads, weights);
        auto gnamed = grads.named();

        TermReport tr;
        tr.term = full ? "total" : (term < vae::kHeadCount ? vae::kHeadName[term] : "kl");
        for (int s = 0; s < opt.samples; ++s) {
            const auto [ti, idx] = locate(pick(rng));
            double& w = named[ti].second->data()[idx];
            const double saved = w;
            w = saved + opt.step;
            const double up = weighted(net.forward_backward(batch, noise, opt.beta, nullptr));
            w = saved - opt.step;
            const double down = weighted(net.forward_backward(batch, noise, opt.beta, nullptr));
            w = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double analytic = gnamed[ti].second->data()[idx];
            const double err = relative_error(analytic, numeric, opt.floor);
            if (err > tr.max_rel_error) {
                tr.max_rel_error = err;
                tr.worst_tensor = named[ti].first + "[" + std::to_string(idx) + "]";
                tr.worst_analytic = analytic;
                tr.worst_numeric = numeric;
            }
        }
        rep.max_rel_error = std::max(rep.max_rel_error, tr.max_rel_error);
        rep.terms.push_back(tr);
    }
    return rep;
}

/// A random roll with melody/bass notes and onsets, for harness inputs.
inline PianoRoll random_roll(std::mt19937_64& rng) {
    PianoRoll r = PianoRoll::rest();
    std::uniform_int_distribution<int> mel(0, layout::kMelodyPitches - 1), bass(0, layout::kBassPitches - 1);
    std::bernoulli_distribution onset(0.4);
    int m = layout::kMelodyRest, b = layout::kBassRest;
    for (int t = 0; t < layout::kSteps; ++t) {
        bool mo = false, bo = false;
        if (t == 0 || onset(rng)) {
            m = mel(rng);
            mo = m != layout::kMelodyRest;
        }
        if (t == 0 || onset(rng)) {
            b = bass(rng);
            bo = b != layout::kBassRest;
        }
        r.set_melody(t, m, mo);
        r.set_bass(t, b, bo);
    }
    return r;
}

/// The default harness: tiny model, two random fragments, fixed noise.
inline Report run_default(const Options& opt = {}) {
    const auto cfg = tiny_config();
    std::mt19937_64 rng(opt.seed + 100);
    auto params = vae::ModelParams<double>::init(cfg, opt.seed);
    // Non-zero biases so every path carries gradient.
    std::normal_distribution<double> small(0.0, 0.1);
    for (auto& [name, m] : params.named())
        if (m->rows() == 1)
            for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = small(rng);
    std::vector<dataset::Fragment> frags;
    for (int i = 0; i < 2; ++i) frags.push_back(dataset::make_fragment(random_roll(rng)));
    std::vector<const dataset::Fragment*> ptrs;
    for (const auto& f : frags) ptrs.push_back(&f);
    const auto batch = vae::Batch<double>::from_fragments(ptrs);
    vae::Mat<double> noise(batch.size, cfg.latent_dim);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    return gradient_check(params, batch, noise, opt);
}

}  // namespace ttv::gradcheck
