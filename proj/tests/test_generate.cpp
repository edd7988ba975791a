#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "support/synthetic.hpp"
#include "ttv/generate.hpp"

using namespace ttv;
using namespace ttv::generate;

namespace {
vae::ModelConfig small() {
    vae::ModelConfig cfg;
    cfg.hidden = 8;
    cfg.latent_dim = 4;
    cfg.head_hidden = 6;
    return cfg;
}

latent::VectorSet vectors() {
    latent::VectorSet set;
    set.latent_dim = 4;
    latent::AttributeVector a, b;
    a.name = "tensile_strain_direction";
    a.values = Eigen::Vector4d(0.3, -1.1, 0.7, 2.9);
    b.name = "cloud_diameter_direction";
    b.kind = spiral::TensionKind::CloudDiameter;
    b.values = Eigen::Vector4d(-0.2, 0.6, 1.3, -0.4);
    set.put(a);
    set.put(b);
    return set;
}

std::vector<corpus::NoteEvent> to_steps(const midi::Track& t) {
    std::vector<corpus::NoteEvent> out;
    for (const auto& n : t.notes)
        out.push_back({n.pitch, static_cast<int>(std::lround(n.onset * 4)), static_cast<int>(std::lround(n.duration * 4))});
    return out;
}
}  // namespace

TEST(ApplyEdits, CancellingEditsAreExact) {
    const auto set = vectors();
    const vae::LatentCode z = vae::sample_latent(1, 4, 3).row(0).transpose();
    EXPECT_EQ(apply_edits(z, set, {{"tensile_strain_direction", 3.0}, {"tensile_strain_direction", -3.0}}), z);
    EXPECT_EQ(apply_edits(z, set, {}), z);
    const auto one = apply_edits(z, set, {{"tensile_strain_direction", 2.0}, {"cloud_diameter_direction", -1.0}});
    const vae::LatentCode expect = z + 2.0 * set.at("tensile_strain_direction").values - set.at("cloud_diameter_direction").values;
    EXPECT_LT((one - expect).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(apply_edits(z, set, {{"missing", 1.0}}), InvalidInput);
}

TEST(Compatibility, RejectsMismatchedVectors) {
    auto set = vectors();
    set.checkpoint_id = "aaaa";
    EXPECT_NO_THROW(check_compatible(set, "aaaa", 4));
    EXPECT_THROW(check_compatible(set, "bbbb", 4), ShapeMismatch);
    EXPECT_THROW(check_compatible(set, "aaaa", 5), ShapeMismatch);
}

TEST(Generate, SeededAndReproducible) {
    const auto params = vae::ModelParams<float>::init(small(), 1);
    GenerationRequest req;
    req.sample_seed = 42;
    req.edits = {{"tensile_strain_direction", 4.0}};
    const auto a = generate::generate(req, params, vectors());
    const auto b = generate::generate(req, params, vectors());
    EXPECT_EQ(a.midi, b.midi);
    EXPECT_EQ(a.report.dump(), b.report.dump());
    EXPECT_TRUE(a.pair.original.valid());
    EXPECT_TRUE(a.pair.modified.valid());
    EXPECT_LT((a.edited - a.seed - 4.0 * vectors().at("tensile_strain_direction").values).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(a.pair.recomputed_modified.tensile.values, spiral::tension_curves(a.pair.modified).tensile.values);

    // The written MIDI holds the modified roll's notes; held pitches without an onset become note starts.
    const auto score = midi::parse_midi(a.midi);
    ASSERT_EQ(score.tracks.size(), 2u);
    EXPECT_EQ(score.tracks[0].name, "melody");
    const auto back = corpus::encode_roll(corpus::TrackPair{to_steps(score.tracks[0]), to_steps(score.tracks[1])});
    EXPECT_EQ(back, corpus::encode_roll(corpus::decode_roll(a.pair.modified)));
    EXPECT_EQ(score.tempos.at(0).us_per_quarter, 500000.0);
}

TEST(Generate, NoEditsGiveIdenticalPair) {
    const auto params = vae::ModelParams<float>::init(small(), 2);
    GenerationRequest req;
    req.sample_seed = 7;
    const auto r = generate::generate(req, params, vectors());
    EXPECT_EQ(r.pair.original, r.pair.modified);
    EXPECT_EQ(r.report["similarity"]["melody_pitch_accuracy"], 1.0);
    EXPECT_EQ(r.report["similarity"]["bass_rhythm_f"], 1.0);
}

TEST(Generate, SeedFromMidi) {
    const auto params = vae::ModelParams<float>::init(small(), 2);
    const auto dir = std::filesystem::temp_directory_path() / ("ttv_gen_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(1);
    const auto path = (dir / "seed.mid").string();
    midi::write_file(path, midi::write_midi(synth::song({synth::ramp_window(rng, true), synth::ramp_window(rng, false)})));
    GenerationRequest req;
    req.seed_midi = path;
    req.fragment_index = 1;
    const auto song = dataset::process_song(midi::read_file(path), path);
    const auto r = generate::generate(req, params, vectors());
    EXPECT_EQ(r.seed, vae::encode<float>(song.fragments[1].roll, params).mu);
    req.fragment_index = 2;
    EXPECT_THROW(generate::generate(req, params, vectors()), InvalidInput);
    std::filesystem::remove_all(dir);
}

TEST(Chain, SingleBlockMatchesGenerate) {
    const auto params = vae::ModelParams<float>::init(small(), 3);
    GenerationRequest req;
    req.sample_seed = 5;
    req.edits = {{"cloud_diameter_direction", -2.0}};
    const auto g = generate::generate(req, params, vectors());
    ChainPlan plan;
    plan.sections.push_back({4, req.edits, "only"});
    const auto c = compose_chain(plan, params, vectors(), g.seed);
    ASSERT_EQ(c.blocks.size(), 1u);
    EXPECT_EQ(c.blocks[0], g.pair.modified);
}

TEST(Chain, LengthAndCumulativeEdits) {
    const auto params = vae::ModelParams<float>::init(small(), 3);
    const vae::LatentCode seed = vae::sample_latent(1, 4, 9).row(0).transpose();
    const auto plan = plan_from_json(nlohmann::json::parse(R"({"sections": [
        {"bars": 8, "label": "A"},
        {"bars": 4, "edits": [["tensile_strain_direction", 3]]},
        {"bars": 12, "edits": [["tensile_strain_direction", -3]]}]})"));
    EXPECT_EQ(plan.total_bars(), 24);
    const auto c = compose_chain(plan, params, vectors(), seed);
    EXPECT_EQ(c.blocks.size(), 6u);
    EXPECT_EQ(c.report["total_bars"], 24);
    // The third section undoes the second, so it matches the first.
    EXPECT_EQ(c.blocks[5], c.blocks[0]);
    EXPECT_EQ(c.report["sections"][2]["start_bar"], 12);

    const auto score = midi::parse_midi(c.midi);
    ASSERT_EQ(score.markers.size(), 3u);
    EXPECT_EQ(score.markers[0].text, "A");
    EXPECT_EQ(score.markers[1].text, "section 2");
    EXPECT_DOUBLE_EQ(score.markers[2].beat, 48.0);
    for (const auto& t : score.tracks)
        for (const auto& n : t.notes) EXPECT_LE(n.onset + n.duration, 96.0 + 1e-9);

    EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"sections": [{"bars": 6}]})")), InvalidInput);
    EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"sections": []})")), InvalidInput);
}
