#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "ttv/report.hpp"

using namespace ttv;
using namespace ttv::eval;

namespace {
std::array<bool, 64> onsets(std::initializer_list<int> steps) {
    std::array<bool, 64> a{};
    for (int s : steps) a[s] = true;
    return a;
}

Curve linear(double a, double b) {
    Curve c{};
    for (int i = 0; i < 64; ++i) c[i] = a * i / 63.0 + b;
    return c;
}

vae::DecoderOutput flat_output() {
    vae::DecoderOutput o;
    o.melody_pitch = Eigen::MatrixXd::Constant(64, 74, 1.0 / 74);
    o.bass_pitch = Eigen::MatrixXd::Constant(64, 13, 1.0 / 13);
    o.melody_onset = Eigen::VectorXd::Zero(64);
    o.bass_onset = Eigen::VectorXd::Zero(64);
    o.tensile = Eigen::VectorXd::Zero(64);
    o.diameter = Eigen::VectorXd::Zero(64);
    return o;
}

vae::ModelConfig small() {
    vae::ModelConfig cfg;
    cfg.hidden = 8;
    cfg.latent_dim = 4;
    cfg.head_hidden = 6;
    return cfg;
}
}  // namespace

TEST(RhythmF, HandCases) {
    EXPECT_DOUBLE_EQ(onset_fscore(onsets({0, 8, 16, 24}), onsets({0, 8})), 2.0 / 3.0);
    EXPECT_EQ(onset_fscore(onsets({0, 8}), onsets({0, 8})), 1.0);
    EXPECT_EQ(onset_fscore(onsets({0, 8}), onsets({4, 12})), 0.0);
    EXPECT_EQ(onset_fscore(onsets({}), onsets({})), 1.0);
    EXPECT_EQ(onset_fscore(onsets({}), onsets({3})), 0.0);
    EXPECT_EQ(onset_fscore(onsets({3}), onsets({})), 0.0);
}

TEST(PitchAccuracy, Counting) {
    std::mt19937_64 rng(2);
    const auto a = synth::random_roll(rng);
    auto b = a;
    EXPECT_EQ(pitch_accuracy(a, b).melody, 1.0);
    for (int t = 0; t < 16; ++t) b.set_melody(t, a.melody_column(t) == 5 ? 6 : 5, false);
    const auto pa = pitch_accuracy(a, b);
    EXPECT_EQ(pa.melody, 0.75);
    EXPECT_EQ(pa.bass, 1.0);
    const auto r = PianoRoll::rest();
    EXPECT_EQ(pitch_accuracy(r, r).melody, 1.0);
    EXPECT_EQ(pitch_accuracy(r, r).bass, 1.0);
    EXPECT_EQ(rhythm_fscore(r, r).melody, 1.0);
}

TEST(RollFromOutput, HardeningRules) {
    auto o = flat_output();
    o.melody_pitch(0, 10) = 0.5;  // clear winner
    o.melody_onset[0] = 0.9;
    o.melody_onset[1] = 0.5;      // not strictly above threshold
    o.melody_pitch(2, layout::kMelodyRest) = 0.9;
    o.melody_onset[2] = 0.9;      // onset on a rest is dropped
    o.bass_pitch(0, 4) = 0.3;
    o.bass_onset[0] = 0.51;
    const auto r = roll_from_output(o);
    EXPECT_TRUE(r.valid());
    EXPECT_EQ(r.melody_column(0), 10);
    EXPECT_TRUE(r.melody_onset(0));
    EXPECT_EQ(r.melody_column(1), 0);  // uniform row: lowest index wins
    EXPECT_FALSE(r.melody_onset(1));
    EXPECT_EQ(r.melody_column(2), layout::kMelodyRest);
    EXPECT_FALSE(r.melody_onset(2));
    EXPECT_EQ(r.bass_class(0), 4);
    EXPECT_TRUE(r.bass_onset(0));
}

TEST(RollFromOutput, OneHotRoundTrip) {
    std::mt19937_64 rng(6);
    for (int k = 0; k < 20; ++k) {
        const auto roll = synth::random_roll(rng);
        auto o = flat_output();
        o.melody_pitch.setZero();
        o.bass_pitch.setZero();
        for (int t = 0; t < 64; ++t) {
            o.melody_pitch(t, roll.melody_column(t)) = 1.0;
            o.bass_pitch(t, roll.bass_class(t)) = 1.0;
            o.melody_onset[t] = roll.melody_onset(t) ? 1.0 : 0.0;
            o.bass_onset[t] = roll.bass_onset(t) ? 1.0 : 0.0;
        }
        EXPECT_EQ(roll_from_output(o), roll);
    }
}

TEST(Ratios, ReferenceSets) {
    const std::vector<Curve> ups(10, linear(1.0, 0.0));
    EXPECT_EQ(upward_ratio(ups, 0.5), 1.0);
    const std::vector<Curve> flat(10, linear(0.0, 0.3));
    EXPECT_EQ(upward_ratio(flat, 0.01), 0.0);
    std::vector<Curve> half;
    for (int i = 0; i < 10; ++i) half.push_back(linear(i % 2 ? 1.0 : -1.0, 0.5));
    EXPECT_EQ(upward_ratio(half, 0.5), 0.5);
    EXPECT_THROW(upward_ratio(std::vector<Curve>{}, 0.5), InvalidInput);

    const double c = 0.25;
    EXPECT_EQ(high_ratio(std::vector<Curve>(4, linear(0.0, c + 10.0)), c, 79.9), 1.0);
    EXPECT_EQ(high_ratio(std::vector<Curve>(4, linear(0.0, c + 10.0)), c, 80.1), 0.0);
    EXPECT_EQ(high_ratio(std::vector<Curve>(4, linear(0.0, c)), c, 0.0), 0.0);
}

TEST(Ratios, MatchCountOracle) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Curve> curves;
    for (int i = 0; i < 300; ++i) curves.push_back(linear(u(rng), u(rng)));
    for (auto& c : curves)
        for (auto& v : c) v += 0.3 * u(rng);
    int up = 0, high = 0;
    for (const auto& c : curves) {
        std::vector<double> x(c.begin(), c.end()), t(64);
        for (int i = 0; i < 64; ++i) t[i] = i / 63.0;
        double mx = 0, mt = 0;
        for (int i = 0; i < 64; ++i) mx += x[i] / 64, mt += t[i] / 64;
        double sxt = 0, sxx = 0, stt = 0;
        for (int i = 0; i < 64; ++i) sxt += (x[i] - mx) * (t[i] - mt), sxx += (x[i] - mx) * (x[i] - mx), stt += (t[i] - mt) * (t[i] - mt);
        up += sxt / std::sqrt(sxx * stt) > 0.2;
        double norm = 0;
        for (double v : x) norm += (v - 0.1) * (v - 0.1);
        high += mx > 0.1 && std::sqrt(norm) > 3.0;
    }
    EXPECT_EQ(upward_ratio(curves, 0.2), up / 300.0);
    EXPECT_EQ(high_ratio(curves, 0.1, 3.0), high / 300.0);
}

TEST(Spearman, AgreesWithOracle) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 5);  // plenty of ties
    for (int k = 0; k < 50; ++k) {
        std::vector<double> x(9), y(9);
        for (int i = 0; i < 9; ++i) x[i] = u(rng), y[i] = u(rng);
        EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-12);
    }
    const std::vector<double> s{-8, -4, 0, 4, 8}, r{0.1, 0.2, 0.2, 0.5, 0.9};
    EXPECT_GT(spearman(s, r), 0.9);
}

TEST(Histogram, PitchClasses) {
    PianoRoll r = PianoRoll::rest();
    for (int t = 0; t < 64; ++t) r.set_melody(t, 60 - layout::kMelodyLow, t % 4 == 0);
    const std::vector<PianoRoll> rolls{r};
    const auto h = pitch_class_histogram(rolls);
    EXPECT_EQ(h[0], 32);
    EXPECT_EQ(std::accumulate(h.begin(), h.end(), 0L), 32);
    EXPECT_EQ(pitch_class_histogram(rolls, 0, 4)[0], 64);
    EXPECT_THROW(pitch_class_histogram(rolls, 3, 3), InvalidInput);
    EXPECT_THROW(pitch_class_histogram(rolls, 0, 5), InvalidInput);
}

TEST(Histogram, TranspositionRotates) {
    std::mt19937_64 rng(4);
    std::vector<PianoRoll> a, b;
    for (int k = 0; k < 30; ++k) {
        auto w = synth::random_window(rng);
        for (auto& n : w.melody) n.pitch = std::min(n.pitch, 80);
        a.push_back(encode_roll(w));
        for (auto& n : w.melody) n.pitch += 7;
        for (auto& n : w.bass) n.pitch += 7;
        b.push_back(encode_roll(w));
    }
    const auto ha = pitch_class_histogram(a, 0, 4), hb = pitch_class_histogram(b, 0, 4);
    for (int pc = 0; pc < 12; ++pc) EXPECT_EQ(hb[(pc + 7) % 12], ha[pc]);
}

TEST(Sweep, IdentityAtZeroAndDeterminism) {
    const auto params = vae::ModelParams<float>::init(small(), 3);
    latent::AttributeVector v;
    v.name = "tensile_strain_direction";
    v.values = Eigen::VectorXd::LinSpaced(4, -1.0, 1.0);
    SweepRequest req;
    req.scales = {-4, 0, 4};
    req.n = 40;
    req.rng_seed = 11;
    req.untrained_model = true;
    const auto rep = sweep(params, v, req);
    ASSERT_EQ(rep.rows.size(), 3u);
    const auto& zero = rep.rows[1];
    EXPECT_EQ(zero.melody_pitch_accuracy, 1.0);
    EXPECT_EQ(zero.bass_pitch_accuracy, 1.0);
    EXPECT_EQ(zero.melody_rhythm_f, 1.0);
    EXPECT_EQ(zero.bass_rhythm_f, 1.0);
    for (const auto& row : rep.rows) {
        EXPECT_EQ(row.n, 40u);
        for (double x : {row.tensile_ratio, row.diameter_ratio, row.melody_pitch_accuracy, row.bass_rhythm_f}) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    }
    EXPECT_EQ(report::sweep_csv(rep), report::sweep_csv(sweep(params, v, req)));
    EXPECT_NE(report::sweep_csv(rep).find("untrained_model=1"), std::string::npos);
    EXPECT_EQ(report::sweep_json(rep)["rows"].size(), 3u);

    latent::AttributeVector wrong = v;
    wrong.values = Eigen::VectorXd::Zero(3);
    EXPECT_THROW(sweep(params, wrong, req), InvalidInput);
    req.n = 0;
    EXPECT_THROW(sweep(params, v, req), InvalidInput);
}

TEST(Sweep, DefaultScaleGrids) {
    EXPECT_EQ(default_scales(latent::Label::Direction), (std::vector<double>{-8, -6, -4, -2, 0, 2, 4, 6, 8}));
    EXPECT_EQ(default_scales(latent::Label::Level), (std::vector<double>{-6, -3, 0, 3, 6}));
}

TEST(Interaction, GridShapeAndZeroRows) {
    const auto params = vae::ModelParams<float>::init(small(), 5);
    latent::AttributeVector a, b;
    a.name = "tensile_strain_direction";
    a.values = Eigen::VectorXd::LinSpaced(4, -2.0, 2.0);
    b.name = "cloud_diameter_direction";
    b.kind = TensionKind::CloudDiameter;
    b.values = Eigen::VectorXd::LinSpaced(4, 2.0, -1.0);
    SweepRequest req;
    req.scales = {-4, 0, 4};
    req.n = 30;
    const auto rep = interaction_grid(params, a, b, req);
    for (int o = 0; o < 2; ++o) {
        EXPECT_EQ(rep.tensile_ratio[o].size(), 3u);
        EXPECT_EQ(rep.diameter_ratio[o].size(), 3u);
    }
    EXPECT_EQ(rep.tensile_ratio[0][1], rep.tensile_ratio[1][1]);
    EXPECT_EQ(rep.diameter_ratio[0][1], rep.diameter_ratio[1][1]);
    double cross = 0.0;
    for (double r : rep.diameter_ratio[0]) cross += std::abs(r - rep.diameter_ratio[0][1]);
    EXPECT_DOUBLE_EQ(rep.cross_effect_b_under_a, cross / 3.0);
    EXPECT_DOUBLE_EQ(rep.asymmetry, rep.cross_effect_b_under_a - rep.cross_effect_a_under_b);
}

TEST(PitchDistribution, ZeroScaleHasNoShift) {
    const auto params = vae::ModelParams<float>::init(small(), 5);
    latent::AttributeVector v;
    v.name = "tensile_strain_direction";
    v.values = Eigen::VectorXd::Ones(4);
    SweepRequest req;
    req.n = 20;
    const auto rep = pitch_distribution(params, v, 0.0, req);
    EXPECT_EQ(rep.original, rep.modified);
    for (double d : rep.signed_difference) EXPECT_EQ(d, 0.0);
    const auto csv = report::pitch_distribution_csv(rep);
    EXPECT_NE(csv.find("pitch_class,original,modified,signed_share_difference"), std::string::npos);
}
