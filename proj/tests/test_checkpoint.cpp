#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ttv/checkpoint.hpp"

using namespace ttv;
using namespace ttv::checkpoint;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ttv_ckpt_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

vae::ModelConfig small() {
    vae::ModelConfig cfg;
    cfg.hidden = 6;
    cfg.latent_dim = 3;
    cfg.head_hidden = 5;
    return cfg;
}

template <typename T>
void expect_same(const vae::ModelParams<T>& a, const vae::ModelParams<T>& b) {
    const auto x = a.named(), y = b.named();
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(x[i].first, y[i].first);
        EXPECT_EQ(*x[i].second, *y[i].second) << x[i].first;
    }
}

void flip_byte(const fs::path& p, std::size_t at) {
    auto bytes = midi::read_file(p.string());
    bytes.at(at) ^= 0x40;
    midi::write_file(p.string(), bytes);
}
}  // namespace

TEST(Digest, KnownValues) {
    EXPECT_EQ(digest({}), "cbf29ce484222325");
    EXPECT_EQ(digest({'a'}), "af63dc4c8601ec8c");
}

TEST(Checkpoint, RoundTripFloat) {
    TempDir dir("float");
    auto cfg = small();
    cfg.beta_max = 0.3;
    const auto params = vae::ModelParams<float>::init(cfg, 9);
    const std::string id = save(dir.str(), cfg, params, {120, 0.25, 7, 5});
    const auto ck = load<float>(dir.str());
    EXPECT_EQ(ck.id, id);
    expect_same(ck.params, params);
    EXPECT_EQ(ck.config.beta_max, 0.3);
    EXPECT_EQ(ck.config.hidden, 6);
    EXPECT_EQ(ck.schedule.global_batch, 120);
    EXPECT_EQ(ck.schedule.beta, 0.25);
    EXPECT_EQ(ck.schedule.epochs_trained, 7);
    EXPECT_EQ(ck.schedule.best_epoch, 5);
    // The manifest path works as well as the directory.
    EXPECT_EQ(load<float>((dir.path / kManifestName).string()).id, id);
    EXPECT_EQ(read_config(dir.str()).latent_dim, 3);
}

TEST(Checkpoint, RoundTripDoubleAndStableId) {
    TempDir a("da"), b("db");
    const auto params = vae::ModelParams<double>::init(small(), 4);
    const auto id = save(a.str(), small(), params);
    EXPECT_EQ(save(b.str(), small(), params), id);
    expect_same(load<double>(a.str()).params, params);
    EXPECT_EQ(midi::read_file((a.path / kBlobName).string()), midi::read_file((b.path / kBlobName).string()));

    TempDir c("dc");
    EXPECT_NE(save(c.str(), small(), vae::ModelParams<double>::init(small(), 5)), id);
}

TEST(Checkpoint, CorruptBlobIsIntegrityError) {
    TempDir dir("corrupt");
    save(dir.str(), small(), vae::ModelParams<float>::init(small(), 1));
    flip_byte(dir.path / kBlobName, 17);
    EXPECT_THROW(load<float>(dir.str()), IntegrityError);
}

TEST(Checkpoint, TruncatedBlobIsIntegrityError) {
    TempDir dir("trunc");
    save(dir.str(), small(), vae::ModelParams<float>::init(small(), 1));
    auto bytes = midi::read_file((dir.path / kBlobName).string());
    bytes.resize(bytes.size() - 4);
    midi::write_file((dir.path / kBlobName).string(), bytes);
    EXPECT_THROW(load<float>(dir.str()), IntegrityError);
}

TEST(Checkpoint, BadManifest) {
    TempDir dir("manifest");
    EXPECT_THROW(load<float>(dir.str()), InvalidInput);  // nothing there
    save(dir.str(), small(), vae::ModelParams<float>::init(small(), 1));
    std::ofstream(dir.path / kManifestName) << "{ not json";
    EXPECT_THROW(load<float>(dir.str()), IntegrityError);
    std::ofstream(dir.path / kManifestName) << R"({"format": "ttv-checkpoint", "version": 99})";
    EXPECT_THROW(load<float>(dir.str()), IntegrityError);
    std::ofstream(dir.path / kManifestName) << R"({"format": "other"})";
    EXPECT_THROW(read_config(dir.str()), IntegrityError);
}

TEST(Checkpoint, DtypeMismatch) {
    TempDir dir("dtype");
    save(dir.str(), small(), vae::ModelParams<float>::init(small(), 1));
    EXPECT_THROW(load<double>(dir.str()), ShapeMismatch);
}

TEST(Checkpoint, ShapeMismatchNamesTensors) {
    TempDir dir("shape");
    save(dir.str(), small(), vae::ModelParams<float>::init(small(), 1));
    auto other = small();
    other.hidden = 7;
    try {
        load<float>(dir.str(), &other);
        FAIL() << "expected ShapeMismatch";
    } catch (const ShapeMismatch& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[6x"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[7x"), std::string::npos) << msg;
    }
    const auto same = small();
    EXPECT_NO_THROW(load<float>(dir.str(), &same));
}
