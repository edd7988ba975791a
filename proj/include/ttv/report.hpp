#pragma once

// CSV, JSON and SVG renderings of the experiment reports.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttv/eval.hpp"

namespace ttv::report {

namespace detail {
inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}
}  // namespace detail

inline constexpr const char* kPitchClassNames[12] = {"C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"};

inline std::string sweep_csv(const eval::SweepReport& r) {
    const bool level = r.label == latent::Label::Level;
    const std::string stat = level ? "high_ratio" : "upward_ratio";
    std::ostringstream os;
    os << "# vector=" << r.vector_name << (r.untrained_model ? " untrained_model=1" : "") << '\n';
    os << "scale,tensile_" << stat << ",diameter_" << stat << ",predicted_tensile_" << stat << ",predicted_diameter_"
       << stat << ",melody_pitch_accuracy,bass_pitch_accuracy,melody_rhythm_f,bass_rhythm_f,n\n";
    for (const auto& row : r.rows)
        os << detail::num(row.scale) << ',' << detail::num(row.tensile_ratio) << ',' << detail::num(row.diameter_ratio)
           << ',' << detail::num(row.predicted_tensile_ratio) << ',' << detail::num(row.predicted_diameter_ratio) << ','
           << detail::num(row.melody_pitch_accuracy) << ',' << detail::num(row.bass_pitch_accuracy) << ','
           << detail::num(row.melody_rhythm_f) << ',' << detail::num(row.bass_rhythm_f) << ',' << row.n << '\n';
    return os.str();
}

inline nlohmann::json sweep_json(const eval::SweepReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"scale", row.scale},
                        {"tensile_ratio", row.tensile_ratio},
                        {"diameter_ratio", row.diameter_ratio},
                        {"predicted_tensile_ratio", row.predicted_tensile_ratio},
                        {"predicted_diameter_ratio", row.predicted_diameter_ratio},
                        {"melody_pitch_accuracy", row.melody_pitch_accuracy},
                        {"bass_pitch_accuracy", row.bass_pitch_accuracy},
                        {"melody_rhythm_f", row.melody_rhythm_f},
                        {"bass_rhythm_f", row.bass_rhythm_f},
                        {"n", row.n}});
    return {{"experiment", r.label == latent::Label::Level ? "level" : "direction"},
            {"vector", r.vector_name},
            {"tension_kind", spiral::to_string(r.kind)},
            {"statistic", r.label == latent::Label::Level ? "high_ratio" : "upward_ratio"},
            {"spearman_scale_vs_own_ratio", r.spearman_own_kind},
            {"untrained_model", r.untrained_model},
            {"rows", rows}};
}

inline std::string interaction_csv(const eval::InteractionReport& r) {
    std::ostringstream os;
    os << "# A=" << r.vector_a << " B=" << r.vector_b << (r.untrained_model ? " untrained_model=1" : "") << '\n';
    os << "applied,scale,tensile_ratio,diameter_ratio\n";
    const std::string names[2] = {r.vector_a, r.vector_b};
    for (int o = 0; o < 2; ++o)
        for (std::size_t i = 0; i < r.scales.size(); ++i)
            os << names[o] << ',' << detail::num(r.scales[i]) << ',' << detail::num(r.tensile_ratio[o][i]) << ','
               << detail::num(r.diameter_ratio[o][i]) << '\n';
    return os.str();
}

inline nlohmann::json interaction_json(const eval::InteractionReport& r) {
    return {{"experiment", "interaction"},
            {"vector_a", r.vector_a},
            {"vector_b", r.vector_b},
            {"scales", r.scales},
            {"applied_a", {{"tensile_ratio", r.tensile_ratio[0]}, {"diameter_ratio", r.diameter_ratio[0]}}},
            {"applied_b", {{"tensile_ratio", r.tensile_ratio[1]}, {"diameter_ratio", r.diameter_ratio[1]}}},
            {"cross_effect_b_under_a", r.cross_effect_b_under_a},
            {"cross_effect_a_under_b", r.cross_effect_a_under_b},
            {"asymmetry", r.asymmetry},
            {"untrained_model", r.untrained_model}};
}

inline std::string pitch_distribution_csv(const eval::PitchDistributionReport& r) {
    std::ostringstream os;
    os << "# vector=" << r.vector_name << " scale=" << detail::num(r.scale) << " bars=" << r.bar_lo << '-' << r.bar_hi - 1
       << (r.untrained_model ? " untrained_model=1" : "") << '\n';
    os << "pitch_class,original,modified,signed_share_difference\n";
    for (int i = 0; i < 12; ++i)
        os << kPitchClassNames[i] << ',' << r.original[i] << ',' << r.modified[i] << ','
           << detail::num(r.signed_difference[i]) << '\n';
    return os.str();
}

inline nlohmann::json pitch_distribution_json(const eval::PitchDistributionReport& r) {
    return {{"experiment", "pitch-dist"},
            {"vector", r.vector_name},
            {"scale", r.scale},
            {"bars", {r.bar_lo, r.bar_hi}},
            {"original", r.original},
            {"modified", r.modified},
            {"signed_share_difference", r.signed_difference},
            {"untrained_model", r.untrained_model}};
}

struct Series {
    std::string name;
    std::vector<double> y;
};

/// Minimal SVG line chart of ratios against scale, y fixed to [0, 1].
inline std::string line_chart_svg(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series) {
    constexpr double W = 480, H = 320, L = 50, R = 150, T = 30, B = 40;
    const double x0 = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
    const double x1 = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
    const double span = x1 > x0 ? x1 - x0 : 1.0;
    auto px = [&](double v) { return L + (v - x0) / span * (W - L - R); };
    auto py = [&](double v) { return H - B - std::clamp(v, 0.0, 1.0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<text x=\"" << L << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (double t : {0.0, 0.5, 1.0})
        os << "<text x=\"" << L - 28 << "\" y=\"" << py(t) + 4 << "\">" << detail::num(t) << "</text>\n";
    for (double v : x) os << "<text x=\"" << px(v) - 6 << "\" y=\"" << H - B + 16 << "\">" << detail::num(v) << "</text>\n";
    os << "<text x=\"" << (L + W - R) / 2 - 15 << "\" y=\"" << H - 6 << "\">scale</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* c = colors[s % 6];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < std::min(x.size(), series[s].y.size()); ++i)
            os << detail::num(px(x[i])) << ',' << detail::num(py(series[s].y[i])) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - R + 8 << "\" y=\"" << T + 14 * (s + 1) << "\" fill=\"" << c << "\">" << series[s].name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline std::string sweep_svg(const eval::SweepReport& r) {
    std::vector<double> x, ts, cd;
    for (const auto& row : r.rows) {
        x.push_back(row.scale);
        ts.push_back(row.tensile_ratio);
        cd.push_back(row.diameter_ratio);
    }
    return line_chart_svg(r.vector_name, x, {{"tensile_strain", ts}, {"cloud_diameter", cd}});
}

inline std::string interaction_svg(const eval::InteractionReport& r) {
    return line_chart_svg(r.vector_a + " / " + r.vector_b, r.scales,
                          {{"A: tensile", r.tensile_ratio[0]},
                           {"A: diameter", r.diameter_ratio[0]},
                           {"B: tensile", r.tensile_ratio[1]},
                           {"B: diameter", r.diameter_ratio[1]}});
}

}  // namespace ttv::report
