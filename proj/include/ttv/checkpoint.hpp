#pragma once

// Checkpoint = JSON manifest (config, schedule state, tensor table, blob digest) + raw blob of
// little-endian tensors, each stored row-major.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttv/error.hpp"
#include "ttv/midi.hpp"
#include "ttv/vae.hpp"

namespace ttv::checkpoint {

inline constexpr int kVersion = 1;
inline constexpr const char* kManifestName = "checkpoint.json";
inline constexpr const char* kBlobName = "checkpoint.bin";

struct ScheduleState {
    std::int64_t global_batch = 0;
    double beta = 0.0;
    int epochs_trained = 0;
    int best_epoch = 0;
};

template <typename T>
struct Checkpoint {
    vae::ModelConfig config;
    vae::ModelParams<T> params;
    ScheduleState schedule;
    std::string id;  // digest of the blob
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string digest(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

template <typename T>
constexpr const char* dtype_name() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? "float32" : "float64";
}

/// Resolves a directory or a manifest path to the manifest path.
inline std::filesystem::path manifest_path(const std::string& path) {
    std::filesystem::path p(path);
    if (std::filesystem::is_directory(p)) p /= kManifestName;
    return p;
}

template <typename T>
std::string save(const std::string& dir, const vae::ModelConfig& cfg, const vae::ModelParams<T>& params,
                 const ScheduleState& schedule = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::uint8_t> blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, m] : params.named()) {
        const std::size_t offset = blob.size();
        for (Eigen::Index r = 0; r < m->rows(); ++r)
            for (Eigen::Index c = 0; c < m->cols(); ++c) {
                const T v = (*m)(r, c);
                const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
                blob.insert(blob.end(), b, b + sizeof(T));
            }
        tensors.push_back({{"name", name},
                           {"shape", {m->rows(), m->cols()}},
                           {"dtype", dtype_name<T>()},
                           {"offset", offset},
                           {"nbytes", blob.size() - offset}});
    }
    const std::string id = digest(blob);
    nlohmann::json manifest = {{"format", "ttv-checkpoint"},
                               {"version", kVersion},
                               {"dtype", dtype_name<T>()},
                               {"byte_order", "little"},
                               {"config", cfg},
                               {"schedule",
                                {{"global_batch", schedule.global_batch},
                                 {"beta", schedule.beta},
                                 {"epochs_trained", schedule.epochs_trained},
                                 {"best_epoch", schedule.best_epoch}}},
                               {"tensors", tensors},
                               {"blob", kBlobName},
                               {"blob_size", blob.size()},
                               {"checkpoint_id", id}};
    midi::write_file((fs::path(dir) / kBlobName).string(), blob);
    std::ofstream f(fs::path(dir) / kManifestName);
    if (!f) throw InvalidInput("cannot write checkpoint manifest in " + dir);
    f << manifest.dump(2) << '\n';
    return id;
}

namespace detail {
inline nlohmann::json read_manifest(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw InvalidInput("cannot open checkpoint manifest " + p.string());
    auto j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw IntegrityError("checkpoint manifest is not valid JSON: " + p.string());
    if (j.value("format", "") != "ttv-checkpoint") throw IntegrityError("not a ttv checkpoint: " + p.string());
    if (j.value("version", -1) != kVersion)
        throw IntegrityError("checkpoint version " + std::to_string(j.value("version", -1)) + " != supported " +
                             std::to_string(kVersion));
    return j;
}
}  // namespace detail

/// Config stored in a checkpoint manifest.
inline vae::ModelConfig read_config(const std::string& path) {
    return detail::read_manifest(manifest_path(path))["config"].get<vae::ModelConfig>();
}

/// Loads a checkpoint. When `expected` is given, its shapes must match the stored tensors exactly.
template <typename T>
Checkpoint<T> load(const std::string& path, const vae::ModelConfig* expected = nullptr) {
    const auto mpath = manifest_path(path);
    const auto j = detail::read_manifest(mpath);
    if (j.value("dtype", "") != dtype_name<T>())
        throw ShapeMismatch(std::string("checkpoint dtype ") + j.value("dtype", "?") + " != requested " + dtype_name<T>());
    Checkpoint<T> ck;
    ck.config = j["config"].get<vae::ModelConfig>();
    const auto& s = j["schedule"];
    ck.schedule = {s.value("global_batch", std::int64_t{0}), s.value("beta", 0.0), s.value("epochs_trained", 0),
                   s.value("best_epoch", 0)};

    const auto blob = midi::read_file((mpath.parent_path() / j.value("blob", kBlobName)).string());
    if (blob.size() != j.value("blob_size", std::size_t{0}))
        throw IntegrityError("checkpoint blob has " + std::to_string(blob.size()) + " bytes, manifest says " +
                             std::to_string(j.value("blob_size", std::size_t{0})));
    ck.id = digest(blob);
    if (ck.id != j.value("checkpoint_id", "")) throw IntegrityError("checkpoint blob digest mismatch");

    const auto& target_cfg = expected ? *expected : ck.config;
    ck.params = vae::ModelParams<T>::zeros(target_cfg);
    auto named = ck.params.named();
    const auto& tensors = j["tensors"];
    std::string diff;
    if (tensors.size() != named.size())
        diff += "tensor count " + std::to_string(tensors.size()) + " != expected " + std::to_string(named.size()) + "; ";
    for (std::size_t i = 0; i < std::min(tensors.size(), named.size()); ++i) {
        const auto& t = tensors[i];
        const auto& [name, m] = named[i];
        const auto rows = t["shape"][0].get<Eigen::Index>(), cols = t["shape"][1].get<Eigen::Index>();
        if (t["name"] != name || rows != m->rows() || cols != m->cols())
            diff += t["name"].get<std::string>() + " [" + std::to_string(rows) + "x" + std::to_string(cols) +
                    "] vs expected " + name + " [" + std::to_string(m->rows()) + "x" + std::to_string(m->cols()) + "]; ";
    }
    if (!diff.empty()) throw ShapeMismatch("checkpoint shape mismatch: " + diff);

    for (std::size_t i = 0; i < named.size(); ++i) {
        auto& m = *named[i].second;
        const auto offset = tensors[i]["offset"].get<std::size_t>();
        const std::size_t nbytes = static_cast<std::size_t>(m.size()) * sizeof(T);
        if (offset + nbytes > blob.size()) throw IntegrityError("tensor " + named[i].first + " runs past the blob");
        const std::uint8_t* p = blob.data() + offset;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c, p += sizeof(T)) std::memcpy(&m(r, c), p, sizeof(T));
    }
    if (expected) ck.config = *expected;
    return ck;
}

}  // namespace ttv::checkpoint
