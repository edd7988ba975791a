#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "ttv/error.hpp"

namespace ttv {

/// Fixed 64 x 89 fragment layout: four bars of 4/4 at one 16th note per step.
namespace layout {
inline constexpr int kSteps = 64;
inline constexpr int kStepsPerBar = 16;
inline constexpr int kFeatures = 89;

inline constexpr int kMelodyLow = 24;   // MIDI pitch of column 0
inline constexpr int kMelodyHigh = 96;  // inclusive
inline constexpr int kMelodyPitches = 74;
inline constexpr int kMelodyRest = 73;
inline constexpr int kMelodyOnset = 74;

inline constexpr int kBassOffset = 75;
inline constexpr int kBassPitches = 13;
inline constexpr int kBassRest = 12;  // relative to kBassOffset
inline constexpr int kBassOnset = 88;

inline constexpr int kBassOctaveRoot = 36;  // C2, used when realizing pitch classes
}  // namespace layout

/// Binary 64 x 89 piano roll, row-major (step, feature).
class PianoRoll {
public:
    using Row = std::array<std::uint8_t, layout::kFeatures>;

    /// All-rest roll: both rest columns set, no onsets.
    static PianoRoll rest() {
        PianoRoll r;
        for (int t = 0; t < layout::kSteps; ++t) {
            r.set_melody(t, layout::kMelodyRest, false);
            r.set_bass(t, layout::kBassRest, false);
        }
        return r;
    }

    std::uint8_t at(int step, int feature) const { return cells_[step][feature]; }
    std::uint8_t& at(int step, int feature) { return cells_[step][feature]; }
    const Row& row(int step) const { return cells_[step]; }

    /// Column index 0..73 of the melody one-hot at `step` (73 = rest), or -1 if no column is set.
    int melody_column(int step) const {
        for (int c = 0; c < layout::kMelodyPitches; ++c)
            if (cells_[step][c]) return c;
        return -1;
    }
    /// Bass class 0..12 (12 = rest), or -1 if no column is set.
    int bass_class(int step) const {
        for (int c = 0; c < layout::kBassPitches; ++c)
            if (cells_[step][layout::kBassOffset + c]) return c;
        return -1;
    }
    bool melody_onset(int step) const { return cells_[step][layout::kMelodyOnset] != 0; }
    bool bass_onset(int step) const { return cells_[step][layout::kBassOnset] != 0; }

    void set_melody(int step, int column, bool onset) {
        for (int c = 0; c < layout::kMelodyPitches; ++c) cells_[step][c] = 0;
        cells_[step][column] = 1;
        cells_[step][layout::kMelodyOnset] = onset ? 1 : 0;
    }
    void set_bass(int step, int cls, bool onset) {
        for (int c = 0; c < layout::kBassPitches; ++c) cells_[step][layout::kBassOffset + c] = 0;
        cells_[step][layout::kBassOffset + cls] = 1;
        cells_[step][layout::kBassOnset] = onset ? 1 : 0;
    }

    /// Empty string when every layout invariant holds, else a description of the first violation.
    std::string violation() const {
        for (int t = 0; t < layout::kSteps; ++t) {
            int melody = 0, bass = 0;
            for (int c = 0; c < layout::kFeatures; ++c)
                if (cells_[t][c] > 1) return "non-binary cell at step " + std::to_string(t);
            for (int c = 0; c < layout::kMelodyPitches; ++c) melody += cells_[t][c];
            for (int c = 0; c < layout::kBassPitches; ++c) bass += cells_[t][layout::kBassOffset + c];
            if (melody != 1) return "melody pitch is not one-hot at step " + std::to_string(t);
            if (bass != 1) return "bass pitch is not one-hot at step " + std::to_string(t);
            if (melody_onset(t) && cells_[t][layout::kMelodyRest])
                return "melody onset on a rest at step " + std::to_string(t);
            if (bass_onset(t) && cells_[t][layout::kBassOffset + layout::kBassRest])
                return "bass onset on a rest at step " + std::to_string(t);
        }
        return {};
    }
    bool valid() const { return violation().empty(); }

    void validate() const {
        if (auto v = violation(); !v.empty()) throw InvalidRoll("invalid piano roll: " + v);
    }

    const std::uint8_t* data() const { return &cells_[0][0]; }
    std::uint8_t* data() { return &cells_[0][0]; }

    friend bool operator==(const PianoRoll&, const PianoRoll&) = default;

private:
    std::array<Row, layout::kSteps> cells_{};
};

}  // namespace ttv
