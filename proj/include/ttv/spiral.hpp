#pragma once

// Spiral Array pitch geometry and the two tonal-tension measures computed over
// 4-bar piano-roll fragments: cloud diameter and tensile strain.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ttv/error.hpp"
#include "ttv/roll.hpp"

namespace ttv::spiral {

/// Helix calibration and the weights of the chord and key centers.
struct SpiralConfig {
    double radius = 1.0;
    double rise = std::sqrt(2.0 / 15.0);
    std::array<double, 3> chord_weights{0.536, 0.274, 0.190};
    std::array<double, 3> key_weights{0.516, 0.315, 0.168};

    std::string violation() const {
        if (!(radius > 0.0)) return "radius must be positive";
        if (!(rise > 0.0)) return "rise must be positive";
        for (const auto* w : {&chord_weights, &key_weights}) {
            double sum = 0.0;
            for (double x : *w) {
                if (!(x >= 0.0)) return "weights must be non-negative";
                sum += x;
            }
            // The published key weights are rounded and sum to 0.999.
            if (std::abs(sum - 1.0) > 5e-3) return "weights must sum to 1";
        }
        return {};
    }
    void validate() const {
        if (auto v = violation(); !v.empty()) throw InvalidInput("spiral config: " + v);
    }
};

/// Position on the line of fifths (C = 0, G = +1, F = -1).
struct SpelledPitch {
    int fifth_index = 0;
    friend bool operator==(SpelledPitch, SpelledPitch) = default;
};

struct SpiralPoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline double distance(const SpiralPoint& a, const SpiralPoint& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Notes sounding within one analysis window, with per-member weights.
struct Cloud {
    std::vector<SpelledPitch> members;
    std::vector<double> weights;  // empty means all 1

    Cloud() = default;
    Cloud(std::initializer_list<int> fifth_indices) {
        for (int k : fifth_indices) members.push_back({k});
    }

    double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
    bool empty() const { return members.empty(); }
};

enum class TensionKind { TensileStrain, CloudDiameter };

inline const char* to_string(TensionKind k) {
    return k == TensionKind::TensileStrain ? "tensile_strain" : "cloud_diameter";
}

struct TensionCurve {
    TensionKind kind = TensionKind::TensileStrain;
    std::array<double, layout::kSteps> values{};
};

struct KeyCenter {
    SpiralPoint point;
};

/// Helix position of the pitch `k` fifths above C.
inline SpiralPoint pitch_position(int k, const SpiralConfig& cfg = {}) {
    // sin/cos of k*pi/2 are exact multiples of the radius; avoid libm rounding.
    static constexpr int kSin[4] = {0, 1, 0, -1};
    static constexpr int kCos[4] = {1, 0, -1, 0};
    const int q = ((k % 4) + 4) % 4;
    return {cfg.radius * kSin[q], cfg.radius * kCos[q], k * cfg.rise};
}

/// Fixed enharmonic spelling, flats for the black keys.
inline SpelledPitch spell(int pitch_class) {
    static constexpr int kTable[12] = {0, -5, 2, -3, 4, -1, 6, 1, -4, 3, -2, 5};
    if (pitch_class < 0 || pitch_class > 11)
        throw InvalidInput("pitch class out of range: " + std::to_string(pitch_class));
    return {kTable[pitch_class]};
}

inline double cloud_diameter(const Cloud& c, const SpiralConfig& cfg = {}) {
    if (c.empty()) throw InvalidInput("cloud_diameter of an empty cloud");
    double best = 0.0;
    for (std::size_t i = 0; i < c.members.size(); ++i) {
        const auto pi = pitch_position(c.members[i].fifth_index, cfg);
        for (std::size_t j = i + 1; j < c.members.size(); ++j)
            best = std::max(best, distance(pi, pitch_position(c.members[j].fifth_index, cfg)));
    }
    return best;
}

inline SpiralPoint center_of_effect(const Cloud& c, const SpiralConfig& cfg = {}) {
    if (c.empty()) throw InvalidInput("center_of_effect of an empty cloud");
    SpiralPoint acc;
    double total = 0.0;
    for (std::size_t i = 0; i < c.members.size(); ++i) {
        const double w = c.weight(i);
        if (!(w > 0.0)) throw InvalidInput("cloud weights must be positive");
        const auto p = pitch_position(c.members[i].fifth_index, cfg);
        acc.x += w * p.x;
        acc.y += w * p.y;
        acc.z += w * p.z;
        total += w;
    }
    return {acc.x / total, acc.y / total, acc.z / total};
}

enum class Mode { Major, Minor };

namespace detail {
inline SpiralPoint combine(const std::array<double, 3>& w, const SpiralPoint& a, const SpiralPoint& b,
                           const SpiralPoint& c) {
    return {w[0] * a.x + w[1] * b.x + w[2] * c.x, w[0] * a.y + w[1] * b.y + w[2] * c.y,
            w[0] * a.z + w[1] * b.z + w[2] * c.z};
}
}  // namespace detail

/// Center of the major triad rooted `root_k` fifths above C.
inline SpiralPoint major_chord_center(int root_k, const SpiralConfig& cfg = {}) {
    return detail::combine(cfg.chord_weights, pitch_position(root_k, cfg), pitch_position(root_k + 1, cfg),
                           pitch_position(root_k + 4, cfg));
}

/// Major key center from its tonic, dominant and subdominant chords.
inline KeyCenter key_center(int tonic_k, const SpiralConfig& cfg = {}, Mode mode = Mode::Major) {
    if (mode != Mode::Major) throw UnsupportedMode("only major key centers are supported");
    return {detail::combine(cfg.key_weights, major_chord_center(tonic_k, cfg), major_chord_center(tonic_k + 1, cfg),
                            major_chord_center(tonic_k - 1, cfg))};
}

inline double tensile_strain(const Cloud& c, const KeyCenter& key, const SpiralConfig& cfg = {}) {
    return distance(center_of_effect(c, cfg), key.point);
}

/// Centered moving average over [i - w/2, i + w/2 - 1 + w%2], truncated at the edges.
inline std::array<double, layout::kSteps> moving_average(std::span<const double, layout::kSteps> v, int w = 4) {
    if (w < 1) throw InvalidInput("moving_average window must be >= 1");
    std::array<double, layout::kSteps> out{};
    const int before = w / 2;
    const int after = w / 2 - 1 + w % 2;
    for (int i = 0; i < layout::kSteps; ++i) {
        const int lo = std::max(0, i - before);
        const int hi = std::min(layout::kSteps - 1, i + after);
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) sum += v[j];
        out[i] = sum / (hi - lo + 1);
    }
    return out;
}

struct TensionPair {
    TensionCurve tensile{TensionKind::TensileStrain, {}};
    TensionCurve diameter{TensionKind::CloudDiameter, {}};
};

/// Pitch-class cloud sounding at one step of a roll (melody first, then bass).
inline Cloud step_cloud(const PianoRoll& roll, int step) {
    Cloud c;
    const int m = roll.melody_column(step);
    if (m != layout::kMelodyRest) c.members.push_back(spell((m + layout::kMelodyLow) % 12));
    const int b = roll.bass_class(step);
    if (b != layout::kBassRest) c.members.push_back(spell(b));
    return c;
}

/// Per-16th clouds, raw tensions (0 for silent steps), then quarter-note smoothing.
inline TensionPair tension_curves(const PianoRoll& roll, const KeyCenter& key, const SpiralConfig& cfg = {}) {
    roll.validate();
    std::array<double, layout::kSteps> strain{}, diam{};
    for (int t = 0; t < layout::kSteps; ++t) {
        const Cloud c = step_cloud(roll, t);
        if (c.empty()) continue;
        strain[t] = tensile_strain(c, key, cfg);
        diam[t] = cloud_diameter(c, cfg);
    }
    TensionPair out;
    out.tensile.values = moving_average(strain, 4);
    out.diameter.values = moving_average(diam, 4);
    return out;
}

/// Tension against the fixed C major reference key used throughout the corpus.
inline TensionPair tension_curves(const PianoRoll& roll, const SpiralConfig& cfg = {}) {
    return tension_curves(roll, key_center(0, cfg), cfg);
}

}  // namespace ttv::spiral
