#pragma once

// Melody/bass extraction, key normalization, 4-bar segmentation and the
// piano-roll encoding of symbolic music.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ttv/error.hpp"
#include "ttv/midi.hpp"
#include "ttv/roll.hpp"
#include "ttv/spiral.hpp"

namespace ttv::corpus {

using spiral::Mode;

/// A note on the 16th-note grid.
struct NoteEvent {
    int pitch = 60;
    int onset = 0;     // steps
    int duration = 1;  // steps
    int end() const { return onset + duration; }
    friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

/// Monophonic melody and bass, each sorted by onset and non-overlapping.
struct TrackPair {
    std::vector<NoteEvent> melody;
    std::vector<NoteEvent> bass;
    friend bool operator==(const TrackPair&, const TrackPair&) = default;
};

struct Key {
    int tonic = 0;  // pitch class
    Mode mode = Mode::Major;
    friend bool operator==(const Key&, const Key&) = default;
};

inline std::string to_string(const Key& k) {
    static const char* kNames[12] = {"C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"};
    return std::string(kNames[((k.tonic % 12) + 12) % 12]) + (k.mode == Mode::Major ? " major" : " minor");
}

inline int to_step(double beats) { return static_cast<int>(std::llround(beats * 4.0)); }

// ---------------------------------------------------------------------------
// Track extraction

struct ExtractOptions {
    std::string melody_track;  // exact track name overrides; empty = heuristic
    std::string bass_track;
    std::size_t min_notes = 8;
};

/// Snap to the 16th grid; anything that collapses keeps one step.
inline std::vector<NoteEvent> quantize(const std::vector<midi::Note>& notes) {
    std::vector<NoteEvent> out;
    out.reserve(notes.size());
    for (const auto& n : notes) {
        const int on = to_step(n.onset);
        const int end = to_step(n.onset + n.duration);
        out.push_back({n.pitch, on, std::max(1, end - on)});
    }
    return out;
}

/// Skyline reduction. At every step the highest (or lowest) eligible sounding note wins; a note that
/// loses while it is sounding is truncated there and never resumes.
inline std::vector<NoteEvent> monophonize(std::vector<NoteEvent> notes, bool keep_highest) {
    std::stable_sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    int horizon = 0;
    for (const auto& n : notes) horizon = std::max(horizon, n.end());
    std::vector<bool> truncated(notes.size(), false);
    std::vector<NoteEvent> out;
    std::optional<std::size_t> current;
    for (int t = 0; t < horizon; ++t) {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < notes.size() && notes[i].onset <= t; ++i) {
            if (truncated[i] || notes[i].end() <= t) continue;
            if (!best) {
                best = i;
                continue;
            }
            const bool better = keep_highest ? notes[i].pitch > notes[*best].pitch : notes[i].pitch < notes[*best].pitch;
            if (better) best = i;
        }
        for (std::size_t i = 0; i < notes.size() && notes[i].onset <= t; ++i)
            if (best && i != *best && !truncated[i] && notes[i].end() > t) truncated[i] = true;
        if (best && current && *best == *current) {
            ++out.back().duration;
        } else if (best) {
            out.push_back({notes[*best].pitch, t, 1});
        }
        if (current && (!best || *best != *current)) truncated[*current] = true;
        current = best;
    }
    return out;
}

inline double mean_pitch(const midi::Track& t) {
    double s = 0.0;
    for (const auto& n : t.notes) s += n.pitch;
    return t.notes.empty() ? 0.0 : s / static_cast<double>(t.notes.size());
}

/// Melody = qualifying track with the highest mean pitch, bass = lowest, unless overridden by name.
inline TrackPair extract_tracks(const midi::Score& score, const ExtractOptions& opt = {}) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < score.tracks.size(); ++i)
        if (!score.tracks[i].drum && score.tracks[i].notes.size() >= opt.min_notes) candidates.push_back(i);

    auto by_name = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < score.tracks.size(); ++i)
            if (score.tracks[i].name == name && !score.tracks[i].drum) return i;
        throw InvalidSong("no non-drum track named '" + name + "'");
    };

    std::optional<std::size_t> melody, bass;
    if (!opt.melody_track.empty()) melody = by_name(opt.melody_track);
    if (!opt.bass_track.empty()) bass = by_name(opt.bass_track);
    if (!melody || !bass) {
        if (candidates.size() < 2)
            throw InvalidSong("need two non-drum tracks with at least " + std::to_string(opt.min_notes) +
                              " notes, found " + std::to_string(candidates.size()));
        auto pool = candidates;
        if (melody) std::erase(pool, *melody);
        if (bass) std::erase(pool, *bass);
        if (pool.empty()) throw InvalidSong("no track left for the heuristic melody/bass choice");
        if (!melody) {
            melody = *std::max_element(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
                return mean_pitch(score.tracks[a]) < mean_pitch(score.tracks[b]);
            });
            std::erase(pool, *melody);
        }
        if (!bass) {
            if (pool.empty()) throw InvalidSong("no track left for the bass");
            bass = *std::min_element(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
                return mean_pitch(score.tracks[a]) < mean_pitch(score.tracks[b]);
            });
        }
    }
    if (*melody == *bass) throw InvalidSong("melody and bass resolve to the same track");
    return {monophonize(quantize(score.tracks[*melody].notes), true),
            monophonize(quantize(score.tracks[*bass].notes), false)};
}

// ---------------------------------------------------------------------------
// Key detection and transposition

inline constexpr std::array<double, 12> kMajorProfile{6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                      2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
inline constexpr std::array<double, 12> kMinorProfile{6.33, 2.68, 3.52, 5.38, 2.60, 3.53,
                                                      2.54, 4.75, 3.98, 2.69, 3.34, 3.17};

inline std::array<double, 12> pitch_class_histogram(const midi::Score& score) {
    std::array<double, 12> h{};
    for (const auto& t : score.tracks) {
        if (t.drum) continue;
        for (const auto& n : t.notes) h[((n.pitch % 12) + 12) % 12] += n.duration;
    }
    return h;
}

/// Pearson correlation of a histogram with a profile rotated to `tonic`; 0 when either side is flat.
inline double profile_correlation(const std::array<double, 12>& hist, const std::array<double, 12>& profile, int tonic) {
    double mh = 0.0, mp = 0.0;
    for (int i = 0; i < 12; ++i) {
        mh += hist[i];
        mp += profile[i];
    }
    mh /= 12.0;
    mp /= 12.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int pc = 0; pc < 12; ++pc) {
        const double x = hist[pc] - mh;
        const double y = profile[((pc - tonic) % 12 + 12) % 12] - mp;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Krumhansl-Schmuckler: argmax correlation over the 24 keys; ties go to major, then the lower tonic.
inline Key detect_key(const midi::Score& score) {
    const auto hist = pitch_class_histogram(score);
    if (std::all_of(hist.begin(), hist.end(), [](double v) { return v <= 0.0; }))
        throw NoKey("score has no pitched notes");
    Key best{0, Mode::Major};
    double best_r = -2.0;
    for (Mode mode : {Mode::Major, Mode::Minor}) {
        const auto& profile = mode == Mode::Major ? kMajorProfile : kMinorProfile;
        for (int tonic = 0; tonic < 12; ++tonic) {
            const double r = profile_correlation(hist, profile, tonic);
            if (r > best_r) {
                best_r = r;
                best = {tonic, mode};
            }
        }
    }
    return best;
}

/// Signed semitone shift with the smallest magnitude taking the tonic to C (major) or A (minor).
/// A tritone resolves downwards.
inline int shift_to_c(const Key& key) {
    const int target = key.mode == Mode::Major ? 0 : 9;
    int d = ((target - key.tonic) % 12 + 12) % 12;
    if (d >= 6) d -= 12;
    return d;
}

inline int clamp_octave(int pitch) {
    while (pitch < 0) pitch += 12;
    while (pitch > 127) pitch -= 12;
    return pitch;
}

inline midi::Score transpose(midi::Score score, int semitones) {
    for (auto& t : score.tracks) {
        if (t.drum) continue;
        for (auto& n : t.notes) n.pitch = clamp_octave(n.pitch + semitones);
    }
    return score;
}

inline midi::Score transpose_to_c(midi::Score score, const Key& key) { return transpose(std::move(score), shift_to_c(key)); }

// ---------------------------------------------------------------------------
// Segmentation

struct Window {
    int bar_offset = 0;  // index of the window's first bar in the song
    TrackPair notes;     // steps relative to the window start, clipped to [0, 64)
};

struct SegmentResult {
    std::vector<Window> windows;
    std::vector<std::string> warnings;
};

namespace detail {
inline std::vector<NoteEvent> clip(const std::vector<NoteEvent>& notes, int start) {
    std::vector<NoteEvent> out;
    const int stop = start + layout::kSteps;
    for (const auto& n : notes) {
        if (n.end() <= start || n.onset >= stop) continue;
        const int on = std::max(n.onset, start);  // a note carried in is re-articulated at step 0
        const int end = std::min(n.end(), stop);
        out.push_back({n.pitch, on - start, end - on});
    }
    return out;
}
}  // namespace detail

/// Non-overlapping 4-bar windows over the 4/4 regions, counted from bar 0 (or from the start of
/// each 4/4 region). Windows where either track is silent are dropped.
inline SegmentResult segment(const TrackPair& tracks, const std::vector<midi::TimeSignature>& meters) {
    SegmentResult res;
    int horizon = 0;
    for (const auto* v : {&tracks.melody, &tracks.bass})
        for (const auto& n : *v) horizon = std::max(horizon, n.end());

    struct Bar {
        int start;
        int length;
        bool common_time;
    };
    std::vector<Bar> bars;
    std::vector<midi::TimeSignature> map = meters;
    if (map.empty() || map.front().beat > 0.0) map.insert(map.begin(), midi::TimeSignature{0.0, 4, 4});
    double beat = 0.0;
    std::size_t mi = 0;
    while (to_step(beat) < horizon) {
        while (mi + 1 < map.size() && map[mi + 1].beat <= beat + 1e-9) ++mi;
        const auto& ts = map[mi];
        double len = ts.bar_beats();
        if (mi + 1 < map.size() && beat + len > map[mi + 1].beat + 1e-9) len = map[mi + 1].beat - beat;
        if (len <= 0.0) len = ts.bar_beats();
        const bool common = ts.numerator == 4 && ts.denominator == 4 && std::abs(len - 4.0) < 1e-9;
        bars.push_back({to_step(beat), to_step(beat + len) - to_step(beat), common});
        beat += len;
    }

    std::size_t i = 0;
    while (i < bars.size()) {
        if (!bars[i].common_time) {
            const std::size_t first = i;
            while (i < bars.size() && !bars[i].common_time) ++i;
            res.warnings.push_back("skipped non-4/4 bars " + std::to_string(first) + ".." + std::to_string(i - 1));
            continue;
        }
        std::size_t run_end = i;
        while (run_end < bars.size() && bars[run_end].common_time) ++run_end;
        for (; i + 4 <= run_end; i += 4) {
            Window w;
            w.bar_offset = static_cast<int>(i);
            w.notes.melody = detail::clip(tracks.melody, bars[i].start);
            w.notes.bass = detail::clip(tracks.bass, bars[i].start);
            if (!w.notes.melody.empty() && !w.notes.bass.empty()) res.windows.push_back(std::move(w));
        }
        i = run_end;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Piano-roll encoding

inline PianoRoll encode_roll(const TrackPair& window) {
    PianoRoll roll = PianoRoll::rest();
    for (const auto& n : window.melody) {
        if (n.pitch < layout::kMelodyLow || n.pitch > layout::kMelodyHigh) continue;
        for (int t = std::max(0, n.onset); t < std::min(layout::kSteps, n.end()); ++t)
            roll.set_melody(t, n.pitch - layout::kMelodyLow, t == n.onset);
    }
    for (const auto& n : window.bass) {
        for (int t = std::max(0, n.onset); t < std::min(layout::kSteps, n.end()); ++t)
            roll.set_bass(t, ((n.pitch % 12) + 12) % 12, t == n.onset);
    }
    return roll;
}

namespace detail {
template <typename ClassAt, typename OnsetAt>
std::vector<NoteEvent> decode_track(ClassAt class_at, OnsetAt onset_at, int rest, int pitch_offset) {
    std::vector<NoteEvent> out;
    int current = rest;
    for (int t = 0; t < layout::kSteps; ++t) {
        const int c = class_at(t);
        if (c == rest) {
            current = rest;
            continue;
        }
        if (onset_at(t) || c != current) {
            out.push_back({c + pitch_offset, t, 1});
            current = c;
        } else {
            ++out.back().duration;
        }
    }
    return out;
}
}  // namespace detail

/// Inverse of encode_roll; bass pitch classes are realized in the octave rooted at C2.
inline TrackPair decode_roll(const PianoRoll& roll) {
    roll.validate();
    TrackPair out;
    out.melody = detail::decode_track([&](int t) { return roll.melody_column(t); },
                                      [&](int t) { return roll.melody_onset(t); }, layout::kMelodyRest,
                                      layout::kMelodyLow);
    out.bass = detail::decode_track([&](int t) { return roll.bass_class(t); }, [&](int t) { return roll.bass_onset(t); },
                                    layout::kBassRest, layout::kBassOctaveRoot);
    return out;
}

}  // namespace ttv::corpus
