#pragma once

// Reference computations written independently of the library, used to cross-check it.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "ttv/roll.hpp"

namespace oracle {

struct Vec3 {
    double x, y, z;
};

inline double dist(const Vec3& a, const Vec3& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

/// Line-of-fifths index of each pitch class under the flat-leaning spelling.
inline int fifths(int pc) {
    switch (pc) {
        case 0: return 0;    // C
        case 1: return -5;   // Db
        case 2: return 2;    // D
        case 3: return -3;   // Eb
        case 4: return 4;    // E
        case 5: return -1;   // F
        case 6: return 6;    // F#
        case 7: return 1;    // G
        case 8: return -4;   // Ab
        case 9: return 3;    // A
        case 10: return -2;  // Bb
        default: return 5;   // B
    }
}

inline Vec3 helix(int k) {
    const double a = k * std::numbers::pi / 2.0;
    return {std::sin(a), std::cos(a), k * std::sqrt(2.0 / 15.0)};
}

inline Vec3 weighted(double w1, const Vec3& a, double w2, const Vec3& b, double w3, const Vec3& c) {
    return {w1 * a.x + w2 * b.x + w3 * c.x, w1 * a.y + w2 * b.y + w3 * c.y, w1 * a.z + w2 * b.z + w3 * c.z};
}

inline Vec3 c_major_center() {
    auto chord = [](int k) { return weighted(0.536, helix(k), 0.274, helix(k + 1), 0.190, helix(k + 4)); };
    return weighted(0.516, chord(0), 0.315, chord(1), 0.168, chord(-1));
}

/// Pitch classes sounding at a step, read straight from the feature columns.
inline std::vector<int> sounding(const ttv::PianoRoll& r, int t) {
    std::vector<int> pcs;
    for (int c = 0; c <= 72; ++c)
        if (r.at(t, c)) pcs.push_back((c + 24) % 12);
    for (int c = 75; c <= 86; ++c)
        if (r.at(t, c)) pcs.push_back(c - 75);
    return pcs;
}

struct Curves {
    std::array<double, 64> tensile{}, diameter{};
};

/// Every pair enumerated for the diameter; the window sum written out term by term.
inline Curves tension(const ttv::PianoRoll& r) {
    std::array<double, 64> raw_t{}, raw_d{};
    const Vec3 key = c_major_center();
    for (int t = 0; t < 64; ++t) {
        const auto pcs = sounding(r, t);
        if (pcs.empty()) continue;
        Vec3 ce{0, 0, 0};
        for (int pc : pcs) {
            const auto p = helix(fifths(pc));
            ce.x += p.x / pcs.size();
            ce.y += p.y / pcs.size();
            ce.z += p.z / pcs.size();
        }
        raw_t[t] = dist(ce, key);
        double d = 0.0;
        for (std::size_t i = 0; i < pcs.size(); ++i)
            for (std::size_t j = 0; j < pcs.size(); ++j)
                d = std::max(d, dist(helix(fifths(pcs[i])), helix(fifths(pcs[j]))));
        raw_d[t] = d;
    }
    Curves out;
    for (int i = 0; i < 64; ++i) {
        double st = 0.0, sd = 0.0;
        int n = 0;
        for (int j : {i - 2, i - 1, i, i + 1}) {
            if (j < 0 || j > 63) continue;
            st += raw_t[j];
            sd += raw_d[j];
            ++n;
        }
        out.tensile[i] = st / n;
        out.diameter[i] = sd / n;
    }
    return out;
}

/// Key by brute-force scoring of all 24 rotations of the Krumhansl-Kessler profiles.
inline std::pair<int, bool> ks_key(const std::array<double, 12>& hist) {
    static const double major[12] = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
    static const double minor[12] = {6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17};
    auto corr = [&](const double* prof, int tonic) {
        double mx = 0, my = 0;
        for (int i = 0; i < 12; ++i) {
            mx += hist[i] / 12.0;
            my += prof[i] / 12.0;
        }
        double sxy = 0, sxx = 0, syy = 0;
        for (int i = 0; i < 12; ++i) {
            const double x = hist[(i + tonic) % 12] - mx, y = prof[i] - my;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        return sxy / std::sqrt(sxx * syy);
    };
    int best = 0;
    bool is_major = true;
    double best_r = -2;
    for (int m = 0; m < 2; ++m)
        for (int tonic = 0; tonic < 12; ++tonic) {
            const double r = corr(m == 0 ? major : minor, tonic);
            if (r > best_r) {
                best_r = r;
                best = tonic;
                is_major = m == 0;
            }
        }
    return {best, is_major};
}

/// Spearman correlation through an explicit rank table (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w : v) {
                less += w < v[i];
                equal += w == v[i];
            }
            r[i] = less + (equal + 1) / 2.0;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx == 0 || syy == 0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
