#pragma once

// On-disk fragment dataset ("TVAE" binary + JSON sidecar) and the batch builder that
// turns a directory of MIDI files into it.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttv/corpus.hpp"
#include "ttv/error.hpp"
#include "ttv/midi.hpp"
#include "ttv/roll.hpp"
#include "ttv/spiral.hpp"

namespace ttv::dataset {

static_assert(std::endian::native == std::endian::little, "dataset and checkpoint IO assume a little-endian host");

using Curve = std::array<float, layout::kSteps>;

struct Fragment {
    PianoRoll roll;
    Curve tensile{};
    Curve diameter{};
    std::string source;
    int bar_offset = 0;
    corpus::Key original_key;
};

struct SkipRecord {
    std::string file;
    std::string reason;
};

struct FragmentDataset {
    std::vector<Fragment> fragments;
    std::vector<SkipRecord> skipped;
    std::vector<std::string> warnings;

    std::size_t size() const { return fragments.size(); }
};

inline constexpr std::uint16_t kVersion = 1;

inline Curve to_float(const std::array<double, layout::kSteps>& v) {
    Curve out{};
    for (int i = 0; i < layout::kSteps; ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

/// Fragment with both tension curves computed against C major.
inline Fragment make_fragment(const PianoRoll& roll, const spiral::SpiralConfig& cfg = {}) {
    const auto tp = spiral::tension_curves(roll, cfg);
    Fragment f;
    f.roll = roll;
    f.tensile = to_float(tp.tensile.values);
    f.diameter = to_float(tp.diameter.values);
    return f;
}

// ---------------------------------------------------------------------------
// Binary format

inline std::vector<std::uint8_t> encode_binary(const FragmentDataset& ds) {
    std::vector<std::uint8_t> out;
    const std::size_t per = layout::kSteps * layout::kFeatures + 2 * layout::kSteps * sizeof(float);
    out.reserve(10 + ds.size() * per);
    out.insert(out.end(), {'T', 'V', 'A', 'E'});
    auto put = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    };
    const std::uint16_t version = kVersion;
    const auto count = static_cast<std::uint32_t>(ds.size());
    put(&version, 2);
    put(&count, 4);
    for (const auto& f : ds.fragments) {
        put(f.roll.data(), layout::kSteps * layout::kFeatures);
        put(f.tensile.data(), sizeof(float) * layout::kSteps);
        put(f.diameter.data(), sizeof(float) * layout::kSteps);
    }
    return out;
}

/// Decodes fragments (rolls and curves only; metadata lives in the sidecar).
inline std::vector<Fragment> decode_binary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "TVAE", 4) != 0) throw IntegrityError("not a TVAE dataset file");
    std::uint16_t version;
    std::uint32_t count;
    std::memcpy(&version, bytes.data() + 4, 2);
    std::memcpy(&count, bytes.data() + 6, 4);
    if (version != kVersion) throw IntegrityError("unsupported dataset version " + std::to_string(version));
    const std::size_t per = layout::kSteps * layout::kFeatures + 2 * layout::kSteps * sizeof(float);
    if (bytes.size() != 10 + static_cast<std::size_t>(count) * per)
        throw IntegrityError("dataset size " + std::to_string(bytes.size()) + " does not match " +
                             std::to_string(count) + " fragments");
    std::vector<Fragment> out(count);
    const std::uint8_t* p = bytes.data() + 10;
    for (auto& f : out) {
        std::memcpy(f.roll.data(), p, layout::kSteps * layout::kFeatures);
        p += layout::kSteps * layout::kFeatures;
        std::memcpy(f.tensile.data(), p, sizeof(float) * layout::kSteps);
        p += sizeof(float) * layout::kSteps;
        std::memcpy(f.diameter.data(), p, sizeof(float) * layout::kSteps);
        p += sizeof(float) * layout::kSteps;
        if (auto v = f.roll.violation(); !v.empty()) throw IntegrityError("dataset contains an invalid roll: " + v);
    }
    return out;
}

inline std::string sidecar_path(const std::string& dataset_path) { return dataset_path + ".json"; }

inline nlohmann::json sidecar_json(const FragmentDataset& ds) {
    nlohmann::json j;
    j["format"] = "TVAE";
    j["version"] = kVersion;
    j["fragment_count"] = ds.size();
    j["key_pos"] = "C major";
    auto& frags = j["fragments"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& f = ds.fragments[i];
        frags.push_back({{"id", i},
                         {"source", f.source},
                         {"bar_offset", f.bar_offset},
                         {"original_key", corpus::to_string(f.original_key)},
                         {"original_tonic", f.original_key.tonic},
                         {"original_mode", f.original_key.mode == spiral::Mode::Major ? "major" : "minor"}});
    }
    auto& skip = j["skipped"] = nlohmann::json::array();
    for (const auto& s : ds.skipped) skip.push_back({{"file", s.file}, {"reason", s.reason}});
    j["warnings"] = ds.warnings;
    return j;
}

inline void save(const FragmentDataset& ds, const std::string& path) {
    midi::write_file(path, encode_binary(ds));
    std::ofstream side(sidecar_path(path));
    if (!side) throw InvalidInput("cannot write " + sidecar_path(path));
    side << sidecar_json(ds).dump(2) << '\n';
}

/// Loads the binary file and, if present, merges metadata from the sidecar.
inline FragmentDataset load(const std::string& path) {
    FragmentDataset ds;
    ds.fragments = decode_binary(midi::read_file(path));
    std::ifstream side(sidecar_path(path));
    if (side) {
        const auto j = nlohmann::json::parse(side, nullptr, false);
        if (j.is_discarded()) throw IntegrityError("malformed dataset sidecar " + sidecar_path(path));
        if (j.contains("fragments")) {
            const auto& frags = j["fragments"];
            if (frags.size() != ds.size()) throw IntegrityError("sidecar fragment count does not match dataset");
            for (std::size_t i = 0; i < ds.size(); ++i) {
                ds.fragments[i].source = frags[i].value("source", "");
                ds.fragments[i].bar_offset = frags[i].value("bar_offset", 0);
                ds.fragments[i].original_key.tonic = frags[i].value("original_tonic", 0);
                ds.fragments[i].original_key.mode =
                    frags[i].value("original_mode", "major") == "minor" ? spiral::Mode::Minor : spiral::Mode::Major;
            }
        }
        for (const auto& s : j.value("skipped", nlohmann::json::array()))
            ds.skipped.push_back({s.value("file", ""), s.value("reason", "")});
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Pipeline

struct SongResult {
    std::vector<Fragment> fragments;
    std::vector<std::string> warnings;
    corpus::Key key;
};

/// parse -> detect key -> transpose to C/Am -> extract melody/bass -> segment -> encode -> tension.
inline SongResult process_song(std::span<const std::uint8_t> bytes, const std::string& source,
                               const corpus::ExtractOptions& opt = {}, const spiral::SpiralConfig& cfg = {}) {
    const auto score = midi::parse_midi(bytes);
    SongResult res;
    res.key = corpus::detect_key(score);
    const auto normalized = corpus::transpose_to_c(score, res.key);
    const auto tracks = corpus::extract_tracks(normalized, opt);
    auto seg = corpus::segment(tracks, normalized.meters);
    res.warnings = std::move(seg.warnings);
    for (const auto& w : seg.windows) {
        auto f = make_fragment(corpus::encode_roll(w.notes), cfg);
        f.source = source;
        f.bar_offset = w.bar_offset;
        f.original_key = res.key;
        res.fragments.push_back(std::move(f));
    }
    return res;
}

/// Processes every .mid/.midi file in `dir` in filename order. Failing files are skipped and recorded.
inline FragmentDataset build_dataset(const std::string& dir, const corpus::ExtractOptions& opt = {},
                                     const spiral::SpiralConfig& cfg = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".mid" || ext == ".midi") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    FragmentDataset ds;
    for (const auto& path : files) {
        const auto name = path.filename().string();
        try {
            auto song = process_song(midi::read_file(path.string()), name, opt, cfg);
            for (auto& w : song.warnings) ds.warnings.push_back(name + ": " + w);
            if (song.fragments.empty()) {
                ds.skipped.push_back({name, "no 4-bar fragment with both melody and bass"});
                continue;
            }
            for (auto& f : song.fragments) ds.fragments.push_back(std::move(f));
        } catch (const Error& e) {
            ds.skipped.push_back({name, e.what()});
        }
    }
    return ds;
}

}  // namespace ttv::dataset
