#pragma once

// Tension labels (direction, level, custom shape), class selection and attribute vectors as
// differences of class-mean posterior means.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttv/dataset.hpp"
#include "ttv/error.hpp"
#include "ttv/roll.hpp"
#include "ttv/spiral.hpp"
#include "ttv/vae.hpp"

namespace ttv::latent {

using Curve = std::array<double, layout::kSteps>;
using spiral::TensionKind;

inline Curve to_double(const dataset::Curve& c) {
    Curve out{};
    std::copy(c.begin(), c.end(), out.begin());
    return out;
}

/// Pearson correlation; 0 when either side has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    auto flat = [](std::span<const double> s) {
        return std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); });
    };
    if (a.empty() || flat(a) || flat(b)) return 0.0;  // the mean of a constant need not round back to it
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i] - ma, y = b[i] - mb;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline const Curve& ramp() {
    static const Curve r = [] {
        Curve c{};
        for (int i = 0; i < layout::kSteps; ++i) c[i] = i / double(layout::kSteps - 1);
        return c;
    }();
    return r;
}

/// Correlation with the line from (0,0) to (1,1).
inline double direction_score(std::span<const double, layout::kSteps> curve) { return pearson(curve, ramp()); }

struct LevelScore {
    int sign = -1;
    double magnitude = 0.0;
};

/// Side of the threshold (mean strictly above is +1) and the 2-norm distance from it.
inline LevelScore level_score(std::span<const double, layout::kSteps> curve, double threshold) {
    double sum = 0.0, sq = 0.0;
    for (double v : curve) {
        sum += v;
        sq += (v - threshold) * (v - threshold);
    }
    return {sum / layout::kSteps > threshold ? 1 : -1, std::sqrt(sq)};
}

struct ShapeTemplate {
    std::string name;
    Curve values{};

    void validate() const {
        const double m = std::accumulate(values.begin(), values.end(), 0.0) / layout::kSteps;
        if (std::all_of(values.begin(), values.end(), [m](double v) { return v == m; }))
            throw InvalidInput("shape template '" + name + "' is constant");
    }
};

/// Symmetric rise-and-fall template peaking at `peak`.
inline ShapeTemplate triangle(int peak = 32) {
    ShapeTemplate t{"triangle", {}};
    for (int i = 0; i < layout::kSteps; ++i)
        t.values[i] = i <= peak ? double(i) / peak : double(layout::kSteps - 1 - i) / (layout::kSteps - 1 - peak);
    return t;
}

inline ShapeTemplate template_by_name(const std::string& name) {
    if (name == "triangle") return triangle();
    if (name == "valley") {
        auto t = triangle();
        for (auto& v : t.values) v = 1.0 - v;
        t.name = "valley";
        return t;
    }
    if (name == "ramp") return {"ramp", ramp()};
    throw InvalidInput("unknown shape template '" + name + "' (triangle, valley, ramp)");
}

inline double shape_score(std::span<const double, layout::kSteps> curve, const ShapeTemplate& tpl) {
    tpl.validate();
    return pearson(curve, tpl.values);
}

// ---------------------------------------------------------------------------
// Class selection

enum class Label { Direction, Level, Shape };

inline const char* to_string(Label l) {
    switch (l) {
        case Label::Direction: return "direction";
        case Label::Level: return "level";
        default: return "shape";
    }
}

struct Selection {
    std::vector<std::size_t> class_a;  // up / high / matching shape
    std::vector<std::size_t> class_b;  // down / low / anti-shape
    double threshold_a = 0.0;          // weakest selection statistic admitted into A
    double threshold_b = 0.0;
    double level_center = 0.0;         // level labels only
    std::string warning;
};

struct SelectRequest {
    Label label = Label::Direction;
    std::size_t target_n = 1000;
    double level_center = 0.0;           // threshold c for level labels
    std::optional<ShapeTemplate> shape;  // for Label::Shape
};

/// Chooses about target_n fragments per class among `ids`, highest statistic first, ties by id.
inline Selection select_classes(std::span<const Curve> curves, std::span<const std::size_t> ids, const SelectRequest& req) {
    Selection sel;
    sel.level_center = req.level_center;
    std::size_t per_class = req.target_n;
    if (ids.size() < 2 * req.target_n) {
        per_class = ids.size() / 2;
        sel.warning = "only " + std::to_string(ids.size()) + " fragments for target " + std::to_string(req.target_n) +
                      " per class; using " + std::to_string(per_class);
    }
    struct Scored {
        double score;
        std::size_t id;
    };
    auto top = [](std::vector<Scored> v, std::size_t n, bool descending) {
        std::sort(v.begin(), v.end(), [descending](const Scored& a, const Scored& b) {
            if (a.score != b.score) return descending ? a.score > b.score : a.score < b.score;
            return a.id < b.id;
        });
        v.resize(std::min(n, v.size()));
        return v;
    };
    std::vector<Scored> a, b;
    if (req.label == Label::Level) {
        std::vector<Scored> above, below;
        for (auto id : ids) {
            const auto ls = level_score(curves[id], req.level_center);
            (ls.sign > 0 ? above : below).push_back({ls.magnitude, id});
        }
        a = top(above, per_class, true);
        b = top(below, per_class, true);
        if (a.size() < per_class || b.size() < per_class) {
            if (!sel.warning.empty()) sel.warning += "; ";
            sel.warning += "level classes limited by population (" + std::to_string(a.size()) + " high, " +
                           std::to_string(b.size()) + " low)";
        }
    } else {
        if (req.label == Label::Shape && !req.shape) throw InvalidInput("shape selection needs a template");
        std::vector<Scored> all;
        for (auto id : ids)
            all.push_back({req.label == Label::Shape ? shape_score(curves[id], *req.shape) : direction_score(curves[id]), id});
        a = top(all, per_class, true);
        b = top(all, per_class, false);
    }
    for (const auto& s : a) sel.class_a.push_back(s.id);
    for (const auto& s : b) sel.class_b.push_back(s.id);
    if (!a.empty()) sel.threshold_a = a.back().score;
    if (!b.empty()) sel.threshold_b = b.back().score;
    std::sort(sel.class_a.begin(), sel.class_a.end());
    std::sort(sel.class_b.begin(), sel.class_b.end());
    return sel;
}

/// Mean of one tension kind over every step of every listed fragment.
inline double corpus_mean(std::span<const Curve> curves, std::span<const std::size_t> ids) {
    if (ids.empty()) return 0.0;
    double s = 0.0;
    for (auto id : ids)
        for (double v : curves[id]) s += v;
    return s / static_cast<double>(ids.size() * layout::kSteps);
}

// ---------------------------------------------------------------------------
// Attribute vectors

struct AttributeVector {
    std::string name;
    Eigen::VectorXd values;
    std::size_t size_a = 0;
    std::size_t size_b = 0;
    TensionKind kind = TensionKind::TensileStrain;
    Label label = Label::Direction;
    nlohmann::json thresholds = nlohmann::json::object();
};

/// Class-mean difference given every fragment's posterior mean (one row per fragment id).
inline Eigen::VectorXd mean_difference(const Eigen::MatrixXd& mu, std::span<const std::size_t> a,
                                       std::span<const std::size_t> b) {
    if (a.empty() || b.empty()) throw InvalidInput("attribute vector needs two non-empty classes");
    auto mean = [&](std::span<const std::size_t> ids) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(mu.cols());
        for (auto id : ids) {
            if (id >= static_cast<std::size_t>(mu.rows())) throw MissingId("fragment id " + std::to_string(id) + " is not in the dataset");
            m += mu.row(static_cast<Eigen::Index>(id)).transpose();
        }
        return Eigen::VectorXd(m / static_cast<double>(ids.size()));
    };
    return mean(a) - mean(b);
}

/// Posterior means of every fragment in the dataset, one row each.
template <typename T>
Eigen::MatrixXd posterior_means(const vae::ModelParams<T>& params, const std::vector<dataset::Fragment>& frags) {
    std::vector<const PianoRoll*> rolls;
    for (const auto& f : frags) rolls.push_back(&f.roll);
    const auto post = vae::encode_batch<T>(rolls, params);
    Eigen::MatrixXd mu(static_cast<Eigen::Index>(frags.size()), params.mu.w.cols());
    for (std::size_t i = 0; i < post.size(); ++i) mu.row(static_cast<Eigen::Index>(i)) = post[i].mu.transpose();
    return mu;
}

/// mean mu(A) - mean mu(B) over the model's posterior means.
template <typename T>
Eigen::VectorXd attribute_vector(const vae::ModelParams<T>& params, std::span<const std::size_t> a,
                                 std::span<const std::size_t> b, const std::vector<dataset::Fragment>& frags) {
    for (const auto* ids : {&a, &b})
        for (auto id : *ids)
            if (id >= frags.size()) throw MissingId("fragment id " + std::to_string(id) + " is not in the dataset");
    std::vector<std::size_t> uni(a.begin(), a.end());
    uni.insert(uni.end(), b.begin(), b.end());
    std::sort(uni.begin(), uni.end());
    uni.erase(std::unique(uni.begin(), uni.end()), uni.end());
    std::vector<const PianoRoll*> rolls;
    for (auto id : uni) rolls.push_back(&frags[id].roll);
    const auto post = vae::encode_batch<T>(rolls, params);
    Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(frags.size()), params.mu.w.cols());
    for (std::size_t i = 0; i < uni.size(); ++i) mu.row(static_cast<Eigen::Index>(uni[i])) = post[i].mu.transpose();
    return mean_difference(mu, a, b);
}

inline vae::LatentCode apply_vector(const vae::LatentCode& z, const Eigen::VectorXd& v, double alpha) {
    if (z.size() != v.size())
        throw InvalidInput("latent code has " + std::to_string(z.size()) + " dims, vector has " + std::to_string(v.size()));
    return z + alpha * v;
}

/// Row-wise z + alpha * v for a matrix of codes.
inline Eigen::MatrixXd apply_vector(const Eigen::MatrixXd& z, const Eigen::VectorXd& v, double alpha) {
    if (z.cols() != v.size())
        throw InvalidInput("latent codes have " + std::to_string(z.cols()) + " dims, vector has " + std::to_string(v.size()));
    return z.rowwise() + (alpha * v).transpose();
}

inline std::string vector_name(TensionKind kind, Label label, const std::string& shape = {}) {
    const std::string k = spiral::to_string(kind);
    if (label == Label::Shape) return k + "_" + shape;
    return k + (label == Label::Direction ? "_direction" : "_level");
}

// ---------------------------------------------------------------------------
// Vectors file

struct VectorSet {
    std::string checkpoint_id;
    int latent_dim = 0;
    std::vector<AttributeVector> vectors;

    const AttributeVector* find(const std::string& name) const {
        for (const auto& v : vectors)
            if (v.name == name) return &v;
        return nullptr;
    }
    const AttributeVector& at(const std::string& name) const {
        if (const auto* v = find(name)) return *v;
        throw InvalidInput("vector '" + name + "' is not in the vectors file");
    }
    void put(AttributeVector v) {
        for (auto& e : vectors)
            if (e.name == v.name) {
                e = std::move(v);
                return;
            }
        vectors.push_back(std::move(v));
    }
};

inline nlohmann::json to_json(const VectorSet& set) {
    nlohmann::json j;
    j["checkpoint_id"] = set.checkpoint_id;
    j["latent_dim"] = set.latent_dim;
    auto& arr = j["vectors"] = nlohmann::json::array();
    for (const auto& v : set.vectors) {
        arr.push_back({{"name", v.name},
                       {"latent_dim", v.values.size()},
                       {"values", std::vector<double>(v.values.data(), v.values.data() + v.values.size())},
                       {"class_sizes", {v.size_a, v.size_b}},
                       {"effective_thresholds", v.thresholds},
                       {"tension_kind", spiral::to_string(v.kind)},
                       {"label", to_string(v.label)},
                       {"checkpoint_id", set.checkpoint_id}});
    }
    return j;
}

inline VectorSet from_json(const nlohmann::json& j) {
    VectorSet set;
    set.checkpoint_id = j.value("checkpoint_id", "");
    set.latent_dim = j.value("latent_dim", 0);
    for (const auto& e : j.at("vectors")) {
        AttributeVector v;
        v.name = e.at("name").get<std::string>();
        const auto vals = e.at("values").get<std::vector<double>>();
        v.values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        if (v.values.size() != set.latent_dim)
            throw ShapeMismatch("vector '" + v.name + "' has " + std::to_string(v.values.size()) + " dims, file says " +
                                std::to_string(set.latent_dim));
        v.size_a = e.at("class_sizes")[0].get<std::size_t>();
        v.size_b = e.at("class_sizes")[1].get<std::size_t>();
        v.thresholds = e.value("effective_thresholds", nlohmann::json::object());
        v.kind = e.value("tension_kind", "tensile_strain") == "cloud_diameter" ? TensionKind::CloudDiameter
                                                                              : TensionKind::TensileStrain;
        const auto label = e.value("label", "direction");
        v.label = label == "level" ? Label::Level : label == "shape" ? Label::Shape : Label::Direction;
        set.vectors.push_back(std::move(v));
    }
    return set;
}

inline void save(const VectorSet& set, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InvalidInput("cannot write " + path);
    f << to_json(set).dump(2) << '\n';
}

inline VectorSet load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open vectors file " + path);
    const auto j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw IntegrityError("vectors file is not valid JSON: " + path);
    return from_json(j);
}

// ---------------------------------------------------------------------------
// End-to-end extraction

struct ExtractRequest {
    TensionKind kind = TensionKind::TensileStrain;
    Label label = Label::Direction;
    std::size_t target_n = 1000;
    std::optional<ShapeTemplate> shape;
    std::optional<double> level_center;  // defaults to the corpus mean over `ids`
};

/// Selects classes among `ids` and builds the vector from precomputed posterior means.
inline AttributeVector extract_vector(const std::vector<dataset::Fragment>& frags, std::span<const std::size_t> ids,
                                      const Eigen::MatrixXd& mu, const ExtractRequest& req, std::string* warning = nullptr) {
    std::vector<Curve> curves;
    curves.reserve(frags.size());
    for (const auto& f : frags)
        curves.push_back(to_double(req.kind == TensionKind::TensileStrain ? f.tensile : f.diameter));
    SelectRequest sr;
    sr.label = req.label;
    sr.target_n = req.target_n;
    sr.shape = req.shape;
    sr.level_center = req.level_center ? *req.level_center : corpus_mean(curves, ids);
    const auto sel = select_classes(curves, ids, sr);
    if (warning) *warning = sel.warning;
    AttributeVector v;
    v.kind = req.kind;
    v.label = req.label;
    v.name = vector_name(req.kind, req.label, req.shape ? req.shape->name : "");
    v.values = mean_difference(mu, sel.class_a, sel.class_b);
    v.size_a = sel.class_a.size();
    v.size_b = sel.class_b.size();
    switch (req.label) {
        case Label::Direction: v.thresholds = {{"up", sel.threshold_a}, {"down", sel.threshold_b}}; break;
        case Label::Level:
            v.thresholds = {{"corpus_mean", sel.level_center}, {"high", sel.threshold_a}, {"low", sel.threshold_b}};
            break;
        case Label::Shape:
            v.thresholds = {{"match", sel.threshold_a}, {"anti", sel.threshold_b}, {"template", req.shape->name}};
            break;
    }
    return v;
}

}  // namespace ttv::latent
