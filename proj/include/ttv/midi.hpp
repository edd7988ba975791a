#pragma once

// Standard MIDI File (format 0/1, PPQN) reader and writer. Times are in quarter-note beats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ttv/error.hpp"

namespace ttv::midi {

inline constexpr int kDrumChannel = 9;

struct Note {
    int pitch = 60;
    int velocity = 80;
    int channel = 0;
    double onset = 0.0;     // beats
    double duration = 1.0;  // beats
    friend bool operator==(const Note&, const Note&) = default;
};

struct Track {
    std::string name;
    std::vector<Note> notes;
    bool drum = false;
};

struct TimeSignature {
    double beat = 0.0;
    int numerator = 4;
    int denominator = 4;
    double bar_beats() const { return numerator * 4.0 / denominator; }
};

struct Tempo {
    double beat = 0.0;
    double us_per_quarter = 500000.0;
};

struct Marker {
    double beat = 0.0;
    std::string text;
};

struct Score {
    int ppq = 480;
    std::vector<Track> tracks;
    std::vector<TimeSignature> meters;  // sorted by beat; empty means 4/4 throughout
    std::vector<Tempo> tempos;
    std::vector<Marker> markers;
};

namespace detail {

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= bytes_.size(); }
    void seek(std::size_t p) { pos_ = p; }

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint8_t peek() {
        need(1);
        return bytes_[pos_];
    }
    std::uint16_t u16() {
        need(2);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] << 8 | bytes_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | bytes_[pos_ + i];
        pos_ += 4;
        return v;
    }
    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const auto b = u8();
            v = v << 7 | (b & 0x7f);
            if (!(b & 0x80)) return v;
        }
        throw ParseError("variable-length quantity longer than 4 bytes", pos_);
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw ParseError("unexpected end of data", pos_);
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

struct RawNote {
    int pitch, velocity, channel;
    std::uint64_t on, off;
};

}  // namespace detail

inline Score parse_midi(std::span<const std::uint8_t> bytes) {
    detail::Reader in(bytes);
    if (bytes.size() < 14 || in.str(4) != "MThd") throw ParseError("missing MThd header", 0);
    const auto header_len = in.u32();
    if (header_len < 6) throw ParseError("MThd chunk too short", 4);
    const int format = in.u16();
    const int ntracks = in.u16();
    const std::uint16_t division = in.u16();
    in.skip(header_len - 6);
    if (format > 1) throw UnsupportedFormat("MIDI format " + std::to_string(format) + " is not supported");
    if (division & 0x8000) throw UnsupportedFormat("SMPTE time division is not supported");
    if (division == 0) throw ParseError("zero ticks per quarter note", 12);

    Score score;
    score.ppq = division;
    const double ppq = division;

    for (int ti = 0; ti < ntracks; ++ti) {
        const std::size_t chunk_start = in.pos();
        const std::string id = in.str(4);
        const std::uint32_t len = in.u32();
        if (id != "MTrk") {
            in.skip(len);  // unknown chunk types are ignored
            --ti;
            if (in.done()) break;
            continue;
        }
        const std::size_t end = in.pos() + len;
        if (end > bytes.size()) throw ParseError("track chunk runs past end of file", chunk_start);

        std::string name;
        std::vector<detail::RawNote> raw;
        std::map<std::pair<int, int>, std::vector<std::size_t>> open;  // (channel, pitch) -> raw indices, FIFO
        std::uint64_t tick = 0;
        std::uint8_t status = 0;
        while (in.pos() < end) {
            tick += in.vlq();
            std::uint8_t b = in.peek();
            if (b & 0x80) {
                in.u8();
                status = b;
            } else if (status == 0 || status >= 0xf0) {
                throw ParseError("data byte without running status", in.pos());
            }
            if (status == 0xff) {
                const auto type = in.u8();
                const auto n = in.vlq();
                const std::size_t data_pos = in.pos();
                if (type == 0x2f) {
                    in.skip(n);
                    status = 0;
                    break;
                } else if (type == 0x03 && name.empty()) {
                    name = in.str(n);
                } else if (type == 0x51 && n == 3) {
                    const std::uint32_t us = in.u8() << 16 | in.u8() << 8 | in.u8();
                    score.tempos.push_back({tick / ppq, static_cast<double>(us)});
                } else if (type == 0x58 && n >= 2) {
                    const int num = in.u8();
                    const int den_pow = in.u8();
                    in.skip(n - 2);
                    if (den_pow > 6) throw ParseError("time signature denominator out of range", data_pos);
                    score.meters.push_back({tick / ppq, num, 1 << den_pow});
                } else if (type == 0x06) {
                    score.markers.push_back({tick / ppq, in.str(n)});
                } else {
                    in.skip(n);
                }
                status = 0;
                continue;
            }
            if (status == 0xf0 || status == 0xf7) {
                in.skip(in.vlq());
                status = 0;
                continue;
            }
            const int kind = status & 0xf0;
            const int channel = status & 0x0f;
            const int d1 = in.u8();
            const int d2 = (kind == 0xc0 || kind == 0xd0) ? 0 : in.u8();
            if ((d1 | d2) & 0x80) throw ParseError("data byte has its high bit set", in.pos() - 1);
            if (kind == 0x90 && d2 > 0) {
                open[{channel, d1}].push_back(raw.size());
                raw.push_back({d1, d2, channel, tick, tick});
            } else if (kind == 0x80 || (kind == 0x90 && d2 == 0)) {
                auto it = open.find({channel, d1});
                if (it != open.end() && !it->second.empty()) {
                    raw[it->second.front()].off = tick;
                    it->second.erase(it->second.begin());
                }
            }
        }
        if (in.pos() > end) throw ParseError("track events overrun chunk length", end);
        for (auto& [key, idx] : open)
            for (auto i : idx) raw[i].off = tick;
        in.seek(end);

        // One output track per MIDI channel used in this chunk.
        std::map<int, Track> by_channel;
        for (const auto& r : raw) {
            if (r.off <= r.on) continue;
            auto& tr = by_channel[r.channel];
            tr.notes.push_back({r.pitch, r.velocity, r.channel, r.on / ppq, (r.off - r.on) / ppq});
        }
        for (auto& [ch, tr] : by_channel) {
            tr.name = by_channel.size() > 1 ? name + ":" + std::to_string(ch + 1) : name;
            tr.drum = ch == kDrumChannel;
            std::stable_sort(tr.notes.begin(), tr.notes.end(),
                             [](const Note& a, const Note& b) { return std::tie(a.onset, a.pitch) < std::tie(b.onset, b.pitch); });
            score.tracks.push_back(std::move(tr));
        }
    }
    auto by_beat = [](const auto& a, const auto& b) { return a.beat < b.beat; };
    std::stable_sort(score.meters.begin(), score.meters.end(), by_beat);
    std::stable_sort(score.tempos.begin(), score.tempos.end(), by_beat);
    std::stable_sort(score.markers.begin(), score.markers.end(), by_beat);
    return score;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Score read_midi(const std::string& path) { return parse_midi(read_file(path)); }

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(v >> 8);
    out.push_back(v & 0xff);
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back((v >> s) & 0xff);
}
inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = v & 0x7f;
    while (v >>= 7) buf[n++] = (v & 0x7f) | 0x80;
    while (n) out.push_back(buf[--n]);
}

struct Event {
    std::uint64_t tick;
    int order;  // meta < note-off < note-on at equal ticks
    std::vector<std::uint8_t> bytes;
};

}  // namespace detail

/// Serializes a format-1 file. Tempo, meter and marker events go into the first track chunk.
inline std::vector<std::uint8_t> write_midi(const Score& score) {
    using namespace detail;
    std::vector<std::uint8_t> out;
    const auto tracks = score.tracks.empty() ? std::vector<Track>{Track{}} : score.tracks;
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    put_u32(out, 6);
    put_u16(out, 1);
    put_u16(out, static_cast<std::uint16_t>(tracks.size()));
    put_u16(out, static_cast<std::uint16_t>(score.ppq));

    auto to_tick = [&](double beats) { return static_cast<std::uint64_t>(std::llround(beats * score.ppq)); };
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        const auto& tr = tracks[ti];
        std::vector<Event> events;
        if (!tr.name.empty()) {
            std::vector<std::uint8_t> b{0xff, 0x03};
            put_vlq(b, static_cast<std::uint32_t>(tr.name.size()));
            b.insert(b.end(), tr.name.begin(), tr.name.end());
            events.push_back({0, 0, b});
        }
        if (ti == 0) {
            for (const auto& t : score.tempos) {
                const auto us = static_cast<std::uint32_t>(std::llround(t.us_per_quarter));
                events.push_back({to_tick(t.beat), 0,
                                  {0xff, 0x51, 0x03, std::uint8_t(us >> 16), std::uint8_t(us >> 8), std::uint8_t(us)}});
            }
            for (const auto& m : score.meters) {
                int pow = 0;
                while ((1 << pow) < m.denominator) ++pow;
                events.push_back({to_tick(m.beat), 0,
                                  {0xff, 0x58, 0x04, std::uint8_t(m.numerator), std::uint8_t(pow), 24, 8}});
            }
            for (const auto& m : score.markers) {
                std::vector<std::uint8_t> b{0xff, 0x06};
                put_vlq(b, static_cast<std::uint32_t>(m.text.size()));
                b.insert(b.end(), m.text.begin(), m.text.end());
                events.push_back({to_tick(m.beat), 0, b});
            }
        }
        for (const auto& n : tr.notes) {
            const auto ch = static_cast<std::uint8_t>(tr.drum ? kDrumChannel : n.channel);
            const auto on = to_tick(n.onset);
            const auto off = std::max(on + 1, to_tick(n.onset + n.duration));
            events.push_back({on, 2, {std::uint8_t(0x90 | ch), std::uint8_t(n.pitch), std::uint8_t(n.velocity)}});
            events.push_back({off, 1, {std::uint8_t(0x80 | ch), std::uint8_t(n.pitch), 0}});
        }
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return std::tie(a.tick, a.order) < std::tie(b.tick, b.order); });

        std::vector<std::uint8_t> body;
        std::uint64_t last = 0;
        for (const auto& e : events) {
            put_vlq(body, static_cast<std::uint32_t>(e.tick - last));
            last = e.tick;
            body.insert(body.end(), e.bytes.begin(), e.bytes.end());
        }
        body.insert(body.end(), {0x00, 0xff, 0x2f, 0x00});
        out.insert(out.end(), {'M', 'T', 'r', 'k'});
        put_u32(out, static_cast<std::uint32_t>(body.size()));
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ttv::midi
