#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support/synthetic.hpp"
#include "ttv/train.hpp"

using namespace ttv;
using namespace ttv::train;

namespace {
vae::ModelConfig tiny() {
    vae::ModelConfig cfg;
    cfg.hidden = 12;
    cfg.latent_dim = 4;
    cfg.head_hidden = 8;
    cfg.batch_size = 8;
    cfg.max_epochs = 3;
    cfg.rng_seed = 21;
    return cfg;
}
}  // namespace

TEST(Split, CountsAndCoverage) {
    const auto s = split_indices(100, {0.8, 0.1, 0.1}, 4);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.valid.size(), 10u);
    EXPECT_EQ(s.test.size(), 10u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.valid.begin(), s.valid.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 100u);
    EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
}

TEST(Split, SeededAndSmallSets) {
    const auto a = split_indices(50, {0.8, 0.1, 0.1}, 1), b = split_indices(50, {0.8, 0.1, 0.1}, 1);
    const auto c = split_indices(50, {0.8, 0.1, 0.1}, 2);
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_NE(a.valid, c.valid);
    const auto ten = split_indices(10, {0.9, 0.05, 0.05}, 3);
    EXPECT_EQ(ten.valid.size(), 1u);
    EXPECT_EQ(ten.test.size(), 1u);
    const auto all_train = split_indices(7, {1.0, 0.0, 0.0}, 3);
    EXPECT_EQ(all_train.train.size(), 7u);
    EXPECT_TRUE(all_train.valid.empty());
}

TEST(Ledger, HeaderAndRows) {
    EXPECT_STREQ(kLedgerHeader, "epoch,split,melody_pitch,melody_rhythm,bass_pitch,bass_rhythm,tensile,diameter,kl,beta,total");
    vae::LossBreakdown l;
    l.melody_pitch = 1.5;
    l.kl = 10.0;
    l.beta = 0.5;
    l.finalize();
    const auto csv = ledger_csv({{1, "train", l}});
    EXPECT_EQ(csv, std::string(kLedgerHeader) + "\n1,train,1.5,0,0,0,0,0,10,0.5,6.5\n");
}

TEST(Adam, FirstStepMovesByLearningRate) {
    vae::ModelConfig cfg = tiny();
    auto params = vae::ModelParams<double>::init(cfg, 1);
    const auto before = params;
    auto grads = vae::ModelParams<double>::zeros(cfg);
    grads.mu.w(0, 0) = 3.0;
    grads.mu.b(0, 1) = -0.2;
    Adam<double> adam(params, 0.01);
    adam.step(params, grads);
    EXPECT_NEAR(params.mu.w(0, 0) - before.mu.w(0, 0), -0.01, 1e-9);
    EXPECT_NEAR(params.mu.b(0, 1) - before.mu.b(0, 1), 0.01, 1e-9);
    EXPECT_EQ(params.mu.w(1, 0), before.mu.w(1, 0));
    EXPECT_EQ(adam.steps(), 1);
}

TEST(Params, NormAndScale) {
    auto p = vae::ModelParams<double>::zeros(tiny());
    p.mu.w(0, 0) = 3.0;
    p.logvar.b(0, 0) = 4.0;
    EXPECT_DOUBLE_EQ(p.squared_norm(), 25.0);
    p.scale(0.5);
    EXPECT_DOUBLE_EQ(p.squared_norm(), 6.25);
}

TEST(Evaluate, TotalIncludesWeightedKl) {
    const auto ds = synth::ramp_dataset(6, 2);
    const auto params = vae::ModelParams<float>::init(tiny(), 3);
    const auto l = evaluate(params, ds.fragments, {0, 1, 2, 3, 4, 5}, 0.25);
    EXPECT_NEAR(l.total,
                l.melody_pitch + l.melody_rhythm + l.bass_pitch + l.bass_rhythm + l.tensile + l.diameter + 0.25 * l.kl,
                1e-9);
    EXPECT_EQ(l.beta, 0.25);
    // Chunk size only regroups the mean.
    const auto chunked = evaluate(params, ds.fragments, {0, 1, 2, 3, 4, 5}, 0.25, 4);
    EXPECT_NEAR(chunked.total, l.total, 1e-5);
    EXPECT_EQ(evaluate(params, ds.fragments, {}, 0.25).total, 0.0);
}

TEST(Train, DeterministicLedgerAndWeights) {
    const auto ds = synth::ramp_dataset(40, 7);
    const auto a = train::train(ds, tiny());
    const auto b = train::train(ds, tiny());
    EXPECT_EQ(ledger_csv(a.ledger), ledger_csv(b.ledger));
    const auto x = a.best.named(), y = b.best.named();
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(*x[i].second, *y[i].second) << x[i].first;

    auto other = tiny();
    other.rng_seed = 22;
    EXPECT_NE(ledger_csv(train::train(ds, other).ledger), ledger_csv(a.ledger));
}

TEST(Train, LedgerShapeAndSchedule) {
    const auto ds = synth::ramp_dataset(40, 7);
    const auto cfg = tiny();
    const auto r = train::train(ds, cfg);
    EXPECT_FALSE(r.aborted);
    EXPECT_EQ(r.epochs_run, 3);
    // train + valid per epoch, then one test row.
    ASSERT_EQ(r.ledger.size(), 7u);
    EXPECT_EQ(r.ledger[0].split, "train");
    EXPECT_EQ(r.ledger[1].split, "valid");
    EXPECT_EQ(r.ledger.back().split, "test");
    EXPECT_EQ(r.ledger.back().epoch, r.best_epoch);
    EXPECT_EQ(r.split.train.size(), 32u);
    // 32 training fragments in batches of 8, over 3 epochs.
    EXPECT_EQ(r.global_batch, 12);
    EXPECT_DOUBLE_EQ(r.final_beta, vae::beta_schedule(11, cfg));
}

TEST(Train, LossFallsOnTinyProblem) {
    const auto ds = synth::ramp_dataset(40, 7);
    auto cfg = tiny();
    cfg.max_epochs = 8;
    cfg.learning_rate = 3e-3;
    const auto r = train::train(ds, cfg);
    EXPECT_LT(r.ledger[r.ledger.size() - 3].loss.total, r.ledger[0].loss.total);
}

TEST(Train, EarlyStopping) {
    const auto ds = synth::ramp_dataset(40, 7);
    auto cfg = tiny();
    cfg.max_epochs = 60;
    cfg.early_stop_patience = 1;
    cfg.learning_rate = 0.05;  // large steps make validation loss bounce
    cfg.grad_clip = 0.0;
    const auto r = train::train(ds, cfg);
    if (!r.aborted) {
        EXPECT_LT(r.epochs_run, 60);
        EXPECT_EQ(r.epochs_run, r.best_epoch + 1);
    }
}

TEST(Train, NonFiniteLossAbortsWithLastGood) {
    auto ds = synth::ramp_dataset(40, 7);
    for (auto& f : ds.fragments) f.tensile[5] = std::nanf("");
    const auto r = train::train(ds, tiny());
    EXPECT_TRUE(r.aborted);
    EXPECT_FALSE(r.diagnostic.empty());
    EXPECT_TRUE(r.last_good.all_finite());
}

TEST(Train, RejectsBadInput) {
    EXPECT_THROW(train::train(synth::ramp_dataset(5, 1), tiny()), InvalidInput);
    auto cfg = tiny();
    cfg.batch_size = 0;
    EXPECT_THROW(train::train(synth::ramp_dataset(40, 1), cfg), InvalidInput);
}

TEST(Train, OverrideRestrictsTrainingSet) {
    const auto ds = synth::ramp_dataset(40, 7);
    TrainOptions opt;
    opt.train_override = {0, 1, 2, 3};
    int calls = 0;
    opt.on_epoch = [&](int, const std::vector<LedgerRow>&) { ++calls; };
    const auto r = train::train(ds, tiny(), opt);
    EXPECT_EQ(r.split.train.size(), 4u);
    EXPECT_EQ(r.global_batch, 3);  // one batch per epoch
    EXPECT_EQ(calls, 3);
}

TEST(Accuracy, FreshModelScoresLow) {
    // Melody accuracy is the fraction of steps whose argmax matches; a fresh model is far from 1.
    const auto ds = synth::ramp_dataset(4, 3);
    const auto params = vae::ModelParams<float>::init(tiny(), 3);
    const double acc = melody_pitch_accuracy(params, ds.fragments, {0, 1, 2, 3});
    EXPECT_GE(acc, 0.0);
    EXPECT_LT(acc, 0.5);
    EXPECT_EQ(melody_pitch_accuracy(params, ds.fragments, {}), 0.0);
}
