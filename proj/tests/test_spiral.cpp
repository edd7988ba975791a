#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "ttv/spiral.hpp"

using namespace ttv;
using namespace ttv::spiral;

namespace {
const double h = std::sqrt(2.0 / 15.0);

void expect_point(const SpiralPoint& p, double x, double y, double z, double tol = 1e-12) {
    EXPECT_NEAR(p.x, x, tol);
    EXPECT_NEAR(p.y, y, tol);
    EXPECT_NEAR(p.z, z, tol);
}

SpiralPoint pc_point(int pc) { return pitch_position(spell(pc).fifth_index); }

// The default key weights sum to 0.999, which scales the key center's height slightly. Shift
// covariance is exact only once the weights are renormalized.
SpiralConfig normalized() {
    SpiralConfig cfg;
    const double s = cfg.key_weights[0] + cfg.key_weights[1] + cfg.key_weights[2];
    for (auto& w : cfg.key_weights) w /= s;
    return cfg;
}
}  // namespace

TEST(PitchPosition, Anchors) {
    expect_point(pitch_position(0), 0, 1, 0);
    expect_point(pitch_position(1), 1, 0, h);
    EXPECT_NEAR(pitch_position(1).z, 0.36515, 1e-5);
    expect_point(pitch_position(4), 0, 1, 4 * h);
    EXPECT_NEAR(pitch_position(4).z, 1.46059, 1e-5);
    expect_point(pitch_position(-1), -1, 0, -h);
}

TEST(PitchPosition, MatchesTrigOracle) {
    for (int k = -20; k <= 20; ++k) {
        const auto o = oracle::helix(k);
        expect_point(pitch_position(k), o.x, o.y, o.z, 1e-12);
    }
}

TEST(Spell, Table) {
    EXPECT_EQ(spell(0).fifth_index, 0);
    EXPECT_EQ(spell(7).fifth_index, 1);
    EXPECT_EQ(spell(6).fifth_index, 6);
    for (int pc = 0; pc < 12; ++pc) EXPECT_EQ(spell(pc).fifth_index, oracle::fifths(pc));
    EXPECT_THROW(spell(12), InvalidInput);
    EXPECT_THROW(spell(-1), InvalidInput);
}

TEST(Calibration, KnownDistances) {
    EXPECT_NEAR(distance(pc_point(0), pc_point(7)), std::sqrt(32.0 / 15.0), 1e-12);
    EXPECT_NEAR(distance(pc_point(0), pc_point(4)), std::sqrt(32.0 / 15.0), 1e-12);
    EXPECT_NEAR(distance(pc_point(0), pc_point(6)), std::sqrt(8.8), 1e-12);
    EXPECT_NEAR(std::sqrt(8.8), 2.96648, 1e-5);
}

TEST(CloudDiameter, Examples) {
    EXPECT_EQ(cloud_diameter(Cloud{0}), 0.0);
    EXPECT_NEAR(cloud_diameter(Cloud{0, 1}), std::sqrt(2 + 2.0 / 15.0), 1e-12);
    EXPECT_NEAR(cloud_diameter(Cloud{0, 1}), 1.46059, 1e-5);
    EXPECT_NEAR(cloud_diameter(Cloud{0, 4, 1}), std::sqrt(2 + 9 * h * h), 1e-12);
    EXPECT_NEAR(cloud_diameter(Cloud{0, 4, 1}), 1.78885, 1e-5);
    EXPECT_THROW(cloud_diameter(Cloud{}), InvalidInput);
}

TEST(CenterOfEffect, Examples) {
    expect_point(center_of_effect(Cloud{0}), 0, 1, 0);
    expect_point(center_of_effect(Cloud{0, 1}), 0.5, 0.5, h / 2);
    Cloud weighted{0, 1};
    weighted.weights = {3.0, 1.0};
    expect_point(center_of_effect(weighted), 0.25, 0.75, h / 4);
    EXPECT_THROW(center_of_effect(Cloud{}), InvalidInput);
    weighted.weights = {1.0, 0.0};
    EXPECT_THROW(center_of_effect(weighted), InvalidInput);
}

TEST(KeyCenter, DegenerateWeightsCollapseToTonic) {
    SpiralConfig cfg;
    cfg.chord_weights = {1, 0, 0};
    cfg.key_weights = {1, 0, 0};
    expect_point(key_center(0, cfg).point, 0, 1, 0);
}

TEST(KeyCenter, DefaultsMatchFormula) {
    expect_point(major_chord_center(0), 0.274, 0.726, 1.034 * h);
    const auto o = oracle::c_major_center();
    expect_point(key_center(0).point, o.x, o.y, o.z);
}

TEST(KeyCenter, ScrewMotionIsometry) {
    const auto cfg = normalized();
    for (int k = -6; k <= 6; ++k)
        EXPECT_NEAR(distance(key_center(k, cfg).point, pitch_position(k)),
                    distance(key_center(0, cfg).point, pitch_position(0)), 1e-12);
    // With the published weights the drift is one part in a thousand of the height per fifth.
    for (int k = -6; k <= 6; ++k)
        EXPECT_NEAR(key_center(k).point.z - key_center(0).point.z, 0.999 * k * h, 1e-12);
}

TEST(KeyCenter, MinorUnsupported) { EXPECT_THROW(key_center(0, {}, Mode::Minor), UnsupportedMode); }

TEST(TensileStrain, Examples) {
    const auto key = key_center(0);
    EXPECT_NEAR(tensile_strain(Cloud{0}, key), distance(pitch_position(0), key.point), 1e-15);
    EXPECT_GT(tensile_strain(Cloud{6}, key), tensile_strain(Cloud{1}, key));
    // A cloud whose center coincides with the key center.
    SpiralConfig cfg;
    cfg.chord_weights = {1, 0, 0};
    cfg.key_weights = {1, 0, 0};
    EXPECT_NEAR(tensile_strain(Cloud{0}, key_center(0, cfg), cfg), 0.0, 1e-15);
}

TEST(MovingAverage, Examples) {
    std::array<double, 64> c{};
    c.fill(2.5);
    for (double v : moving_average(c)) EXPECT_DOUBLE_EQ(v, 2.5);

    std::array<double, 64> impulse{};
    impulse[10] = 1.0;
    const auto m = moving_average(impulse, 4);
    for (int i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(m[i], (i >= 9 && i <= 12) ? 0.25 : 0.0) << i;

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3, 3);
    std::array<double, 64> r{};
    for (auto& v : r) v = u(rng);
    const auto id = moving_average(r, 1);
    for (int i = 0; i < 64; ++i) EXPECT_EQ(id[i], r[i]);
    EXPECT_THROW(moving_average(r, 0), InvalidInput);
}

TEST(MovingAverage, EdgeTruncation) {
    std::array<double, 64> v{};
    for (int i = 0; i < 64; ++i) v[i] = i;
    const auto m = moving_average(v, 4);
    EXPECT_DOUBLE_EQ(m[0], (0 + 1) / 2.0);
    EXPECT_DOUBLE_EQ(m[1], (0 + 1 + 2) / 3.0);
    EXPECT_DOUBLE_EQ(m[63], (61 + 62 + 63) / 3.0);
}

TEST(TensionCurves, AllRestIsZero) {
    const auto tc = tension_curves(PianoRoll::rest());
    for (int t = 0; t < 64; ++t) {
        EXPECT_EQ(tc.tensile.values[t], 0.0);
        EXPECT_EQ(tc.diameter.values[t], 0.0);
    }
}

TEST(TensionCurves, HeldMiddleC) {
    PianoRoll r = PianoRoll::rest();
    for (int t = 0; t < 64; ++t) r.set_melody(t, 60 - layout::kMelodyLow, t == 0);
    const auto tc = tension_curves(r);
    const double strain = distance(pitch_position(0), key_center(0).point);
    for (int t = 0; t < 64; ++t) {
        EXPECT_NEAR(tc.tensile.values[t], strain, 1e-15);
        EXPECT_EQ(tc.diameter.values[t], 0.0);
    }
}

TEST(TensionCurves, MatchesBruteForceOracle) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 150; ++i) {
        const auto roll = synth::random_roll(rng);
        const auto tc = tension_curves(roll);
        const auto o = oracle::tension(roll);
        for (int t = 0; t < 64; ++t) {
            ASSERT_NEAR(tc.tensile.values[t], o.tensile[t], 1e-12);
            ASSERT_NEAR(tc.diameter.values[t], o.diameter[t], 1e-12);
        }
    }
}

TEST(TensionCurves, RejectsMalformedRoll) {
    PianoRoll bad = PianoRoll::rest();
    bad.at(0, 3) = 1;  // second melody column alongside the rest column
    EXPECT_THROW(tension_curves(bad), InvalidRoll);
}

TEST(Properties, IsometryAndShiftCovariance) {
    const auto cfg = normalized();
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> k(-12, 12), size(1, 5), shift(-10, 10);
    for (int i = 0; i < 1000; ++i) {
        Cloud c;
        const int n = size(rng);
        for (int j = 0; j < n; ++j) c.members.push_back({k(rng)});
        const int s = shift(rng);
        Cloud shifted = c;
        for (auto& m : shifted.members) m.fifth_index += s;
        EXPECT_NEAR(cloud_diameter(shifted), cloud_diameter(c), 1e-9);
        EXPECT_NEAR(tensile_strain(shifted, key_center(s, cfg), cfg), tensile_strain(c, key_center(0, cfg), cfg), 1e-9);
        // Reordering and containment.
        Cloud reversed = c;
        std::reverse(reversed.members.begin(), reversed.members.end());
        EXPECT_NEAR(cloud_diameter(reversed), cloud_diameter(c), 1e-15);
        Cloud grown = c;
        grown.members.push_back({k(rng)});
        EXPECT_GE(cloud_diameter(grown), cloud_diameter(c));
    }
}

TEST(SpiralConfig, Validation) {
    SpiralConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.radius = 0;
    EXPECT_THROW(cfg.validate(), InvalidInput);
    cfg = {};
    cfg.key_weights = {0.5, 0.5, 0.5};
    EXPECT_THROW(cfg.validate(), InvalidInput);
}
