#pragma once

// Seeded generation with attribute-vector edits, chained multi-section composition and MIDI
// rendering of decoded rolls.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttv/corpus.hpp"
#include "ttv/dataset.hpp"
#include "ttv/eval.hpp"
#include "ttv/latent.hpp"
#include "ttv/midi.hpp"
#include "ttv/vae.hpp"

namespace ttv::generate {

inline constexpr double kTempoBpm = 120.0;
inline constexpr int kVelocity = 80;

using Edit = std::pair<std::string, double>;

struct GenerationRequest {
    std::optional<std::uint64_t> sample_seed;  // draw the seed code from the prior
    std::optional<std::string> seed_midi;      // or encode a fragment of this file
    int fragment_index = 0;
    std::vector<Edit> edits;
};

/// Sections of whole 4-bar blocks; each section's edits stack on top of the previous sections'.
struct ChainPlan {
    struct Section {
        int bars = 8;
        std::vector<Edit> edits;
        std::string label;
    };
    std::vector<Section> sections;

    int total_bars() const {
        int n = 0;
        for (const auto& s : sections) n += s.bars;
        return n;
    }
    void validate() const {
        if (sections.empty()) throw InvalidInput("chain plan has no sections");
        for (const auto& s : sections)
            if (s.bars <= 0 || s.bars % 4 != 0) throw InvalidInput("section bar counts must be positive multiples of 4");
    }
};

inline ChainPlan plan_from_json(const nlohmann::json& j) {
    ChainPlan p;
    for (const auto& s : j.at("sections")) {
        ChainPlan::Section sec;
        sec.bars = s.value("bars", 8);
        sec.label = s.value("label", "");
        for (const auto& e : s.value("edits", nlohmann::json::array()))
            sec.edits.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
        p.sections.push_back(std::move(sec));
    }
    p.validate();
    return p;
}

/// Refuses vectors that were not extracted from this checkpoint or have the wrong width.
inline void check_compatible(const latent::VectorSet& vectors, const std::string& checkpoint_id, int latent_dim) {
    std::string diff;
    if (vectors.latent_dim != latent_dim)
        diff += "latent_dim " + std::to_string(vectors.latent_dim) + " (vectors) vs " + std::to_string(latent_dim) + " (model); ";
    if (!vectors.checkpoint_id.empty() && vectors.checkpoint_id != checkpoint_id)
        diff += "checkpoint_id " + vectors.checkpoint_id + " (vectors) vs " + checkpoint_id + " (model); ";
    if (!diff.empty()) throw ShapeMismatch("vectors do not match the model: " + diff);
}

/// Scales are summed per vector first, so an edit and its negation cancel exactly.
inline vae::LatentCode apply_edits(vae::LatentCode z, const latent::VectorSet& vectors, const std::vector<Edit>& edits) {
    std::vector<Edit> merged;
    for (const auto& [name, alpha] : edits) {
        auto it = std::find_if(merged.begin(), merged.end(), [&](const Edit& e) { return e.first == name; });
        if (it == merged.end())
            merged.emplace_back(name, alpha);
        else
            it->second += alpha;
    }
    for (const auto& [name, alpha] : merged) {
        const auto& v = vectors.at(name).values;
        if (alpha != 0.0 || v.size() != z.size()) z = latent::apply_vector(z, v, alpha);
    }
    return z;
}

/// Seed code: the first (or selected) fragment's posterior mean, or a prior draw.
template <typename T>
vae::LatentCode seed_latent(const GenerationRequest& req, const vae::ModelParams<T>& params) {
    const int dim = static_cast<int>(params.mu.w.cols());
    if (req.seed_midi) {
        const auto song = dataset::process_song(midi::read_file(*req.seed_midi), *req.seed_midi);
        if (song.fragments.empty()) throw InvalidInput("seed MIDI yields no 4-bar fragment with melody and bass");
        if (req.fragment_index < 0 || static_cast<std::size_t>(req.fragment_index) >= song.fragments.size())
            throw InvalidInput("fragment index " + std::to_string(req.fragment_index) + " out of range (" +
                               std::to_string(song.fragments.size()) + " fragments)");
        return vae::encode<T>(song.fragments[static_cast<std::size_t>(req.fragment_index)].roll, params).mu;
    }
    return vae::sample_latent(1, dim, req.sample_seed.value_or(0)).row(0).transpose();
}

/// Two-track score (melody, bass) at 120 BPM in 4/4; rolls are laid end to end.
inline midi::Score render(const std::vector<PianoRoll>& blocks, const std::vector<midi::Marker>& markers = {}) {
    midi::Score s;
    s.ppq = 480;
    s.tempos.push_back({0.0, 60e6 / kTempoBpm});
    s.meters.push_back({0.0, 4, 4});
    s.markers = markers;
    midi::Track melody{"melody", {}, false}, bass{"bass", {}, false};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const double offset = static_cast<double>(i) * layout::kSteps / 4.0;
        const auto tp = corpus::decode_roll(blocks[i]);
        for (const auto& n : tp.melody) melody.notes.push_back({n.pitch, kVelocity, 0, offset + n.onset / 4.0, n.duration / 4.0});
        for (const auto& n : tp.bass) bass.notes.push_back({n.pitch, kVelocity, 1, offset + n.onset / 4.0, n.duration / 4.0});
    }
    s.tracks = {std::move(melody), std::move(bass)};
    return s;
}

struct GenerationResult {
    eval::GeneratedPair pair;
    vae::LatentCode seed;
    vae::LatentCode edited;
    std::vector<std::uint8_t> midi;  // the modified fragment
    nlohmann::json report;
};

namespace detail {
inline nlohmann::json curve_json(const latent::Curve& c) { return std::vector<double>(c.begin(), c.end()); }
}  // namespace detail

template <typename T>
GenerationResult generate(const GenerationRequest& req, const vae::ModelParams<T>& params, const latent::VectorSet& vectors) {
    GenerationResult res;
    res.seed = seed_latent(req, params);
    res.edited = apply_edits(res.seed, vectors, req.edits);
    // One code per decode so results do not depend on what else shares the batch.
    const std::array<eval::Decoded, 2> d{eval::decode_and_measure<T>(res.seed.transpose(), params).front(),
                                         eval::decode_and_measure<T>(res.edited.transpose(), params).front()};
    auto& p = res.pair;
    p.original = d[0].roll;
    p.modified = d[1].roll;
    p.predicted_tensile_original = d[0].predicted_tensile;
    p.predicted_tensile_modified = d[1].predicted_tensile;
    p.predicted_diameter_original = d[0].predicted_diameter;
    p.predicted_diameter_modified = d[1].predicted_diameter;
    p.recomputed_original = d[0].recomputed;
    p.recomputed_modified = d[1].recomputed;
    res.midi = midi::write_midi(render({p.modified}));

    nlohmann::json edits = nlohmann::json::array();
    for (const auto& [n, a] : req.edits) edits.push_back({n, a});
    const auto pa = eval::pitch_accuracy(p.original, p.modified);
    const auto rf = eval::rhythm_fscore(p.original, p.modified);
    res.report = {
        {"seed", req.seed_midi ? nlohmann::json{{"midi", *req.seed_midi}, {"fragment_index", req.fragment_index}}
                               : nlohmann::json{{"sample_seed", req.sample_seed.value_or(0)}}},
        {"edits", edits},
        {"original",
         {{"predicted", {{"tensile_strain", detail::curve_json(p.predicted_tensile_original)},
                         {"cloud_diameter", detail::curve_json(p.predicted_diameter_original)}}},
          {"recomputed", {{"tensile_strain", detail::curve_json(p.recomputed_original.tensile.values)},
                          {"cloud_diameter", detail::curve_json(p.recomputed_original.diameter.values)}}}}},
        {"modified",
         {{"predicted", {{"tensile_strain", detail::curve_json(p.predicted_tensile_modified)},
                         {"cloud_diameter", detail::curve_json(p.predicted_diameter_modified)}}},
          {"recomputed", {{"tensile_strain", detail::curve_json(p.recomputed_modified.tensile.values)},
                          {"cloud_diameter", detail::curve_json(p.recomputed_modified.diameter.values)}}}}},
        {"similarity",
         {{"melody_pitch_accuracy", pa.melody},
          {"bass_pitch_accuracy", pa.bass},
          {"melody_rhythm_f", rf.melody},
          {"bass_rhythm_f", rf.bass}}}};
    return res;
}

struct ChainResult {
    std::vector<PianoRoll> blocks;  // one per 4 bars
    std::vector<std::uint8_t> midi;
    nlohmann::json report;
};

/// Every 4-bar block decodes the shared seed plus the cumulative edits of its section.
template <typename T>
ChainResult compose_chain(const ChainPlan& plan, const vae::ModelParams<T>& params, const latent::VectorSet& vectors,
                          const vae::LatentCode& seed) {
    plan.validate();
    ChainResult res;
    std::vector<Edit> cumulative;
    std::vector<midi::Marker> markers;
    nlohmann::json sections = nlohmann::json::array();
    int bar = 0;
    for (std::size_t si = 0; si < plan.sections.size(); ++si) {
        const auto& sec = plan.sections[si];
        cumulative.insert(cumulative.end(), sec.edits.begin(), sec.edits.end());
        const auto z = apply_edits(seed, vectors, cumulative);
        const auto d = eval::decode_and_measure<T>(z.transpose(), params);
        const std::string label = sec.label.empty() ? "section " + std::to_string(si + 1) : sec.label;
        markers.push_back({bar * 4.0, label});
        for (int b = 0; b < sec.bars; b += 4) res.blocks.push_back(d[0].roll);
        nlohmann::json edits = nlohmann::json::array();
        for (const auto& [n, a] : cumulative) edits.push_back({n, a});
        sections.push_back({{"label", label},
                            {"start_bar", bar},
                            {"bars", sec.bars},
                            {"cumulative_edits", edits},
                            {"recomputed_tensile_strain", detail::curve_json(d[0].recomputed.tensile.values)},
                            {"recomputed_cloud_diameter", detail::curve_json(d[0].recomputed.diameter.values)}});
        bar += sec.bars;
    }
    res.midi = midi::write_midi(render(res.blocks, markers));
    res.report = {{"total_bars", bar}, {"blocks", res.blocks.size()}, {"sections", sections}};
    return res;
}

}  // namespace ttv::generate
