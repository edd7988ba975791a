// Prints the tension curves of a four-bar cadence, C - F - G7 - C, as a text chart.

#include <cstdio>
#include <string>

#include "ttv/corpus.hpp"
#include "ttv/spiral.hpp"

using namespace ttv;

int main() {
    corpus::TrackPair w;
    const int bass[4] = {0, 5, 7, 0};
    const int melody[4][4] = {{64, 67, 72, 67}, {65, 69, 72, 69}, {65, 67, 71, 74}, {72, 67, 64, 60}};
    for (int bar = 0; bar < 4; ++bar) {
        for (int q = 0; q < 4; ++q) w.melody.push_back({melody[bar][q], bar * 16 + q * 4, 4});
        w.bass.push_back({layout::kBassOctaveRoot + bass[bar], bar * 16, 16});
    }
    const auto roll = corpus::encode_roll(w);
    const auto tc = spiral::tension_curves(roll);

    std::printf("step  tensile  diameter\n");
    for (int t = 0; t < layout::kSteps; t += 2) {
        const double ts = tc.tensile.values[t], cd = tc.diameter.values[t];
        std::printf("%4d  %7.3f  %8.3f  %s\n", t, ts, cd, std::string(static_cast<std::size_t>(ts * 40), '#').c_str());
    }
    return 0;
}
