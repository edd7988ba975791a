#pragma once

// Behavioral evaluation of attribute vectors: decode sampled codes with and without a scaled
// vector, harden the outputs to rolls, recompute tension from the rolls and aggregate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttv/latent.hpp"
#include "ttv/roll.hpp"
#include "ttv/spiral.hpp"
#include "ttv/vae.hpp"

namespace ttv::eval {

using latent::Curve;
using latent::Label;
using spiral::TensionKind;

/// Argmax pitch (lowest index on ties), onset iff probability > 0.5, no onset on rests.
inline PianoRoll roll_from_output(const vae::DecoderOutput& out) {
    PianoRoll r = PianoRoll::rest();
    for (int t = 0; t < layout::kSteps; ++t) {
        Eigen::Index m, b;
        out.melody_pitch.row(t).maxCoeff(&m);
        out.bass_pitch.row(t).maxCoeff(&b);
        const bool mo = out.melody_onset[t] > 0.5 && m != layout::kMelodyRest;
        const bool bo = out.bass_onset[t] > 0.5 && b != layout::kBassRest;
        r.set_melody(t, static_cast<int>(m), mo);
        r.set_bass(t, static_cast<int>(b), bo);
    }
    return r;
}

struct TrackPairMetric {
    double melody = 0.0;
    double bass = 0.0;
};

/// Fraction of steps whose pitch class/column matches, rests included.
inline TrackPairMetric pitch_accuracy(const PianoRoll& orig, const PianoRoll& mod) {
    int m = 0, b = 0;
    for (int t = 0; t < layout::kSteps; ++t) {
        m += orig.melody_column(t) == mod.melody_column(t);
        b += orig.bass_class(t) == mod.bass_class(t);
    }
    return {m / double(layout::kSteps), b / double(layout::kSteps)};
}

/// Exact-step onset F-measure of `mod` against `orig`; 1 when both are empty, 0 when only one is.
inline double onset_fscore(std::span<const bool, layout::kSteps> orig, std::span<const bool, layout::kSteps> mod) {
    int tp = 0, n_orig = 0, n_mod = 0;
    for (int t = 0; t < layout::kSteps; ++t) {
        n_orig += orig[t];
        n_mod += mod[t];
        tp += orig[t] && mod[t];
    }
    if (n_orig == 0 && n_mod == 0) return 1.0;
    if (n_orig == 0 || n_mod == 0 || tp == 0) return 0.0;
    const double p = double(tp) / n_mod, r = double(tp) / n_orig;
    return 2.0 * p * r / (p + r);
}

inline TrackPairMetric rhythm_fscore(const PianoRoll& orig, const PianoRoll& mod) {
    std::array<bool, layout::kSteps> om{}, mm{}, ob{}, mb{};
    for (int t = 0; t < layout::kSteps; ++t) {
        om[t] = orig.melody_onset(t);
        mm[t] = mod.melody_onset(t);
        ob[t] = orig.bass_onset(t);
        mb[t] = mod.bass_onset(t);
    }
    return {onset_fscore(om, mm), onset_fscore(ob, mb)};
}

inline double upward_ratio(std::span<const Curve> curves, double tau_dir) {
    if (curves.empty()) throw InvalidInput("upward_ratio needs at least one curve");
    std::size_t up = 0;
    for (const auto& c : curves) up += latent::direction_score(c) > tau_dir;
    return double(up) / double(curves.size());
}

inline double high_ratio(std::span<const Curve> curves, double center, double tau_lvl) {
    if (curves.empty()) throw InvalidInput("high_ratio needs at least one curve");
    std::size_t hi = 0;
    for (const auto& c : curves) {
        const auto ls = latent::level_score(c, center);
        hi += ls.sign > 0 && ls.magnitude > tau_lvl;
    }
    return double(hi) / double(curves.size());
}

/// Spearman rank correlation with average ranks for ties; 0 if either side is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (double(i) + double(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    return latent::pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Thresholds used to classify generated curves

struct Thresholds {
    double dir_tensile = 0.5;
    double dir_diameter = 0.5;
    std::optional<double> center_tensile, center_diameter;  // level threshold c
    double lvl_tensile = 0.0;
    double lvl_diameter = 0.0;

    /// Pulls the labeling thresholds stored with the vectors, where present.
    static Thresholds from(const latent::VectorSet& set) {
        Thresholds t;
        for (const auto& v : set.vectors) {
            const bool ts = v.kind == TensionKind::TensileStrain;
            if (v.label == Label::Direction && v.thresholds.contains("up"))
                (ts ? t.dir_tensile : t.dir_diameter) = v.thresholds["up"].get<double>();
            if (v.label == Label::Level && v.thresholds.contains("corpus_mean")) {
                (ts ? t.center_tensile : t.center_diameter) = v.thresholds["corpus_mean"].get<double>();
                (ts ? t.lvl_tensile : t.lvl_diameter) = v.thresholds.value("high", 0.0);
            }
        }
        return t;
    }
};

// ---------------------------------------------------------------------------
// Generated samples

struct GeneratedPair {
    PianoRoll original;
    PianoRoll modified;
    Curve predicted_tensile_original{}, predicted_tensile_modified{};
    Curve predicted_diameter_original{}, predicted_diameter_modified{};
    spiral::TensionPair recomputed_original;
    spiral::TensionPair recomputed_modified;
};

struct Decoded {
    PianoRoll roll;
    Curve predicted_tensile{}, predicted_diameter{};
    spiral::TensionPair recomputed;
};

template <typename T>
std::vector<Decoded> decode_and_measure(const Eigen::MatrixXd& z, const vae::ModelParams<T>& params) {
    constexpr Eigen::Index kChunk = 256;  // bounds the memory held in full decoder outputs
    std::vector<Decoded> res(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index start = 0; start < z.rows(); start += kChunk) {
        const Eigen::Index n = std::min(kChunk, z.rows() - start);
        const auto outs = vae::decode_batch<T>(z.middleRows(start, n), params);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& o = outs[static_cast<std::size_t>(j)];
            auto& d = res[static_cast<std::size_t>(start + j)];
            d.roll = roll_from_output(o);
            for (int t = 0; t < layout::kSteps; ++t) {
                d.predicted_tensile[t] = o.tensile[t];
                d.predicted_diameter[t] = o.diameter[t];
            }
            d.recomputed = spiral::tension_curves(d.roll);
        }
    }
    return res;
}

inline std::vector<Curve> recomputed(const std::vector<Decoded>& d, TensionKind kind) {
    std::vector<Curve> out;
    out.reserve(d.size());
    for (const auto& x : d) out.push_back(kind == TensionKind::TensileStrain ? x.recomputed.tensile.values : x.recomputed.diameter.values);
    return out;
}

inline std::vector<Curve> predicted(const std::vector<Decoded>& d, TensionKind kind) {
    std::vector<Curve> out;
    out.reserve(d.size());
    for (const auto& x : d) out.push_back(kind == TensionKind::TensileStrain ? x.predicted_tensile : x.predicted_diameter);
    return out;
}

/// Level thresholds fall back to the unmodified samples' mean when no level vector supplied them.
inline double ratio_for(const std::vector<Curve>& curves, TensionKind kind, Label label, const Thresholds& th,
                        double fallback_center) {
    const bool ts = kind == TensionKind::TensileStrain;
    if (label == Label::Level) {
        const double c = (ts ? th.center_tensile : th.center_diameter).value_or(fallback_center);
        return high_ratio(curves, c, ts ? th.lvl_tensile : th.lvl_diameter);
    }
    return upward_ratio(curves, ts ? th.dir_tensile : th.dir_diameter);
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
    double scale = 0.0;
    double tensile_ratio = 0.0;   // upward or high ratio, recomputed tension
    double diameter_ratio = 0.0;
    double predicted_tensile_ratio = 0.0;  // same statistic on the model's own tension heads
    double predicted_diameter_ratio = 0.0;
    double melody_pitch_accuracy = 0.0;
    double bass_pitch_accuracy = 0.0;
    double melody_rhythm_f = 0.0;
    double bass_rhythm_f = 0.0;
    std::size_t n = 0;
};

struct SweepReport {
    std::string vector_name;
    Label label = Label::Direction;
    TensionKind kind = TensionKind::TensileStrain;
    std::vector<SweepRow> rows;
    double spearman_own_kind = 0.0;  // rank correlation of scale with the vector's own ratio
    bool untrained_model = false;
};

struct SweepRequest {
    std::vector<double> scales;
    int n = 10000;
    std::uint64_t rng_seed = 0;
    Thresholds thresholds;
    bool untrained_model = false;
};

inline std::vector<double> default_scales(Label label) {
    if (label == Label::Level) return {-6, -3, 0, 3, 6};
    return {-8, -6, -4, -2, 0, 2, 4, 6, 8};
}

namespace detail {
inline double mean_value(const std::vector<Curve>& curves) {
    double s = 0.0;
    for (const auto& c : curves)
        for (double v : c) s += v;
    return curves.empty() ? 0.0 : s / double(curves.size() * layout::kSteps);
}

inline SweepRow measure(double scale, const std::vector<Decoded>& base, const std::vector<Decoded>& mod, Label label,
                        const Thresholds& th, double center_ts, double center_cd) {
    SweepRow row;
    row.scale = scale;
    row.n = mod.size();
    row.tensile_ratio = ratio_for(recomputed(mod, TensionKind::TensileStrain), TensionKind::TensileStrain, label, th, center_ts);
    row.diameter_ratio = ratio_for(recomputed(mod, TensionKind::CloudDiameter), TensionKind::CloudDiameter, label, th, center_cd);
    row.predicted_tensile_ratio =
        ratio_for(predicted(mod, TensionKind::TensileStrain), TensionKind::TensileStrain, label, th, center_ts);
    row.predicted_diameter_ratio =
        ratio_for(predicted(mod, TensionKind::CloudDiameter), TensionKind::CloudDiameter, label, th, center_cd);
    for (std::size_t i = 0; i < mod.size(); ++i) {
        const auto pa = pitch_accuracy(base[i].roll, mod[i].roll);
        const auto rf = rhythm_fscore(base[i].roll, mod[i].roll);
        row.melody_pitch_accuracy += pa.melody;
        row.bass_pitch_accuracy += pa.bass;
        row.melody_rhythm_f += rf.melody;
        row.bass_rhythm_f += rf.bass;
    }
    const double n = double(mod.size());
    row.melody_pitch_accuracy /= n;
    row.bass_pitch_accuracy /= n;
    row.melody_rhythm_f /= n;
    row.bass_rhythm_f /= n;
    return row;
}
}  // namespace detail

/// Adds alpha * v to n prior samples for every alpha and measures the decoded results.
template <typename T>
SweepReport sweep(const vae::ModelParams<T>& params, const latent::AttributeVector& v, const SweepRequest& req) {
    if (req.n < 1) throw InvalidInput("sweep needs n >= 1");
    if (v.values.size() != params.mu.w.cols()) throw InvalidInput("vector dimension does not match the model");
    SweepReport rep;
    rep.vector_name = v.name;
    rep.label = v.label == Label::Shape ? Label::Direction : v.label;
    rep.kind = v.kind;
    rep.untrained_model = req.untrained_model;
    const auto z = vae::sample_latent(req.n, static_cast<int>(params.mu.w.cols()), req.rng_seed);
    const auto base = decode_and_measure<T>(z, params);
    const double c_ts = detail::mean_value(recomputed(base, TensionKind::TensileStrain));
    const double c_cd = detail::mean_value(recomputed(base, TensionKind::CloudDiameter));
    const auto scales = req.scales.empty() ? default_scales(rep.label) : req.scales;
    std::vector<double> own;
    for (double a : scales) {
        const auto mod = a == 0.0 ? base : decode_and_measure<T>(latent::apply_vector(z, v.values, a), params);
        rep.rows.push_back(detail::measure(a, base, mod, rep.label, req.thresholds, c_ts, c_cd));
        own.push_back(v.kind == TensionKind::TensileStrain ? rep.rows.back().tensile_ratio : rep.rows.back().diameter_ratio);
    }
    rep.spearman_own_kind = spearman(scales, own);
    return rep;
}

struct InteractionReport {
    std::string vector_a, vector_b;
    Label label = Label::Direction;
    std::vector<double> scales;
    // [ordering][scale]: ordering 0 applies vector A, 1 applies vector B.
    std::array<std::vector<double>, 2> tensile_ratio, diameter_ratio;
    double cross_effect_b_under_a = 0.0;  // mean |delta| of B's kind when A is applied
    double cross_effect_a_under_b = 0.0;
    double asymmetry = 0.0;               // difference of the two cross effects
    bool untrained_model = false;
};

/// Applies A alone and B alone over the same scales and samples, measuring both tension kinds.
template <typename T>
InteractionReport interaction_grid(const vae::ModelParams<T>& params, const latent::AttributeVector& a,
                                   const latent::AttributeVector& b, const SweepRequest& req) {
    InteractionReport rep;
    rep.vector_a = a.name;
    rep.vector_b = b.name;
    rep.label = a.label == Label::Level ? Label::Level : Label::Direction;
    rep.untrained_model = req.untrained_model;
    rep.scales = req.scales.empty() ? default_scales(rep.label) : req.scales;
    const auto z = vae::sample_latent(req.n, static_cast<int>(params.mu.w.cols()), req.rng_seed);
    const auto base = decode_and_measure<T>(z, params);
    const double c_ts = detail::mean_value(recomputed(base, TensionKind::TensileStrain));
    const double c_cd = detail::mean_value(recomputed(base, TensionKind::CloudDiameter));
    const std::array<const latent::AttributeVector*, 2> vs{&a, &b};
    for (int o = 0; o < 2; ++o) {
        for (double s : rep.scales) {
            const auto mod = s == 0.0 ? base : decode_and_measure<T>(latent::apply_vector(z, vs[o]->values, s), params);
            const auto row = detail::measure(s, base, mod, rep.label, req.thresholds, c_ts, c_cd);
            rep.tensile_ratio[o].push_back(row.tensile_ratio);
            rep.diameter_ratio[o].push_back(row.diameter_ratio);
        }
    }
    // Baseline is the alpha = 0 column when present, else the unmodified samples.
    const auto zero_it = std::find(rep.scales.begin(), rep.scales.end(), 0.0);
    const std::size_t zero = zero_it == rep.scales.end() ? rep.scales.size() : std::size_t(zero_it - rep.scales.begin());
    auto cross = [&](int ordering, TensionKind measured) {
        const auto& series = measured == TensionKind::TensileStrain ? rep.tensile_ratio[ordering] : rep.diameter_ratio[ordering];
        double baseline;
        if (zero < series.size()) {
            baseline = series[zero];
        } else {
            baseline = ratio_for(recomputed(base, measured), measured, rep.label, req.thresholds,
                                 measured == TensionKind::TensileStrain ? c_ts : c_cd);
        }
        double s = 0.0;
        for (double r : series) s += std::abs(r - baseline);
        return s / double(series.size());
    };
    rep.cross_effect_b_under_a = cross(0, b.kind);
    rep.cross_effect_a_under_b = cross(1, a.kind);
    rep.asymmetry = rep.cross_effect_b_under_a - rep.cross_effect_a_under_b;
    return rep;
}

// ---------------------------------------------------------------------------
// Pitch-class distribution

using Histogram = std::array<long, 12>;

/// Sounding melody and bass pitch classes per step over bars [bar_lo, bar_hi).
inline Histogram pitch_class_histogram(std::span<const PianoRoll> rolls, int bar_lo = 2, int bar_hi = 4) {
    if (bar_lo < 0 || bar_hi > 4 || bar_lo >= bar_hi) throw InvalidInput("bar range must lie within [0, 4)");
    Histogram h{};
    for (const auto& r : rolls)
        for (int t = bar_lo * layout::kStepsPerBar; t < bar_hi * layout::kStepsPerBar; ++t) {
            const int m = r.melody_column(t);
            if (m != layout::kMelodyRest) ++h[(m + layout::kMelodyLow) % 12];
            const int b = r.bass_class(t);
            if (b != layout::kBassRest) ++h[b];
        }
    return h;
}

struct PitchDistributionReport {
    std::string vector_name;
    double scale = 0.0;
    int bar_lo = 2, bar_hi = 4;
    Histogram original{}, modified{};
    std::array<double, 12> signed_difference{};  // modified share minus original share
    bool untrained_model = false;
};

template <typename T>
PitchDistributionReport pitch_distribution(const vae::ModelParams<T>& params, const latent::AttributeVector& v,
                                           double scale, const SweepRequest& req, int bar_lo = 2, int bar_hi = 4) {
    PitchDistributionReport rep;
    rep.vector_name = v.name;
    rep.scale = scale;
    rep.bar_lo = bar_lo;
    rep.bar_hi = bar_hi;
    rep.untrained_model = req.untrained_model;
    const auto z = vae::sample_latent(req.n, static_cast<int>(params.mu.w.cols()), req.rng_seed);
    std::vector<PianoRoll> orig, mod;
    for (auto& d : decode_and_measure<T>(z, params)) orig.push_back(d.roll);
    for (auto& d : decode_and_measure<T>(latent::apply_vector(z, v.values, scale), params)) mod.push_back(d.roll);
    rep.original = pitch_class_histogram(orig, bar_lo, bar_hi);
    rep.modified = pitch_class_histogram(mod, bar_lo, bar_hi);
    const double so = std::max(1.0, double(std::accumulate(rep.original.begin(), rep.original.end(), 0L)));
    const double sm = std::max(1.0, double(std::accumulate(rep.modified.begin(), rep.modified.end(), 0L)));
    for (int i = 0; i < 12; ++i) rep.signed_difference[i] = rep.modified[i] / sm - rep.original[i] / so;
    return rep;
}

}  // namespace ttv::eval
