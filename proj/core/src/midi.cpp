#include "ocmusic/midi.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <map>
#include <utility>

#include "ocmusic/errors.hpp"

namespace ocmusic {

double MidiScore::end_time() const {
    double end = 0.0;
    for (const auto& n : notes) end = std::max(end, n.onset + n.duration);
    return end;
}

double MidiScore::bpm_at(double time) const {
    double bpm = 120.0;
    for (const auto& tp : tempo_map) {
        if (tp.time > time) break;
        bpm = tp.bpm;
    }
    return bpm;
}

namespace {

constexpr double kMinNoteDuration = 1e-6;

struct TrackReader {
    const std::uint8_t* p;
    const std::uint8_t* end;

    std::uint8_t u8() {
        if (p >= end) throw DecodeError("midi: truncated track");
        return *p++;
    }
    void skip(std::size_t n) {
        if (static_cast<std::size_t>(end - p) < n) throw DecodeError("midi: truncated track");
        p += n;
    }
    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t b = u8();
            v = v << 7 | (b & 0x7f);
            if (!(b & 0x80)) return v;
        }
        throw DecodeError("midi: variable-length quantity too long");
    }
    bool done() const { return p >= end; }
};

struct NoteEvent {
    std::int64_t tick;
    int order;  // stable tiebreak for equal ticks
    bool on;
    int channel, pitch, velocity;
};

struct TempoEvent {
    std::int64_t tick;
    double us_per_quarter;
};

struct TimeSigEvent {
    std::int64_t tick;
    int numerator, denominator;
};

// Piecewise tick->seconds conversion over the merged tempo events.
class TickClock {
public:
    TickClock(std::vector<TempoEvent> tempi, int ppq) : ppq_(ppq) {
        std::sort(tempi.begin(), tempi.end(),
                  [](const TempoEvent& a, const TempoEvent& b) { return a.tick < b.tick; });
        if (tempi.empty() || tempi.front().tick > 0)
            tempi.insert(tempi.begin(), {0, 500000.0});  // 120 bpm default
        double sec = 0.0;
        for (std::size_t i = 0; i < tempi.size(); ++i) {
            if (i > 0) {
                sec += static_cast<double>(tempi[i].tick - tempi[i - 1].tick) *
                       tempi[i - 1].us_per_quarter / (1e6 * ppq_);
            }
            segments_.push_back({tempi[i].tick, sec, tempi[i].us_per_quarter});
        }
    }

    double seconds(std::int64_t tick) const {
        const Segment* seg = &segments_.front();
        for (const auto& s : segments_) {
            if (s.tick > tick) break;
            seg = &s;
        }
        return seg->seconds + static_cast<double>(tick - seg->tick) * seg->us_per_quarter / (1e6 * ppq_);
    }

    std::vector<TempoPoint> tempo_points() const {
        std::vector<TempoPoint> out;
        for (const auto& s : segments_) out.push_back({s.seconds, 6e7 / s.us_per_quarter});
        return out;
    }

private:
    struct Segment {
        std::int64_t tick;
        double seconds;
        double us_per_quarter;
    };
    std::vector<Segment> segments_;
    int ppq_;
};

}  // namespace

MidiScore parse_midi(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0)
        throw DecodeError("midi: missing MThd header");
    auto be32 = [&](std::size_t at) -> std::uint32_t {
        return static_cast<std::uint32_t>(bytes[at]) << 24 | bytes[at + 1] << 16 |
               bytes[at + 2] << 8 | bytes[at + 3];
    };
    auto be16 = [&](std::size_t at) -> std::uint16_t {
        return static_cast<std::uint16_t>(bytes[at] << 8 | bytes[at + 1]);
    };
    if (be32(4) != 6) throw DecodeError("midi: bad MThd length");
    const int format = be16(8);
    const int ntrks = be16(10);
    const std::uint16_t division = be16(12);
    if (format != 0 && format != 1)
        throw UnsupportedFormatError("midi: only SMF format 0/1 supported, got " + std::to_string(format));
    if (division & 0x8000) throw UnsupportedFormatError("midi: SMPTE division not supported");
    const int ppq = division;
    if (ppq == 0) throw DecodeError("midi: zero ticks per quarter");

    std::vector<NoteEvent> note_events;
    std::vector<TempoEvent> tempo_events;
    std::vector<TimeSigEvent> timesig_events;
    std::int64_t last_tick = 0;
    int order = 0;

    std::size_t pos = 14;
    for (int t = 0; t < ntrks; ++t) {
        if (pos + 8 > bytes.size()) throw DecodeError("midi: truncated track header");
        if (std::memcmp(bytes.data() + pos, "MTrk", 4) != 0) throw DecodeError("midi: missing MTrk tag");
        const std::uint32_t len = be32(pos + 4);
        if (pos + 8 + len > bytes.size()) throw DecodeError("midi: truncated track chunk");
        TrackReader r{bytes.data() + pos + 8, bytes.data() + pos + 8 + len};
        pos += 8 + len;

        std::int64_t tick = 0;
        int running = -1;
        while (!r.done()) {
            tick += r.vlq();
            last_tick = std::max(last_tick, tick);
            std::uint8_t b = r.u8();
            int status;
            int first_data;
            if (b & 0x80) {
                status = b;
                first_data = -1;
                if (status < 0xf0) running = status;
            } else {
                if (running < 0) throw DecodeError("midi: data byte without running status");
                status = running;
                first_data = b;
            }
            auto data1 = [&]() { return first_data >= 0 ? std::exchange(first_data, -1) : r.u8(); };

            const int hi = status & 0xf0;
            const int channel = status & 0x0f;
            switch (hi) {
                case 0x80: {
                    int pitch = data1() & 0x7f;
                    r.u8();  // release velocity
                    note_events.push_back({tick, order++, false, channel, pitch, 0});
                    break;
                }
                case 0x90: {
                    int pitch = data1() & 0x7f;
                    int vel = r.u8() & 0x7f;
                    note_events.push_back({tick, order++, vel > 0, channel, pitch, vel});
                    break;
                }
                case 0xa0:
                case 0xb0:
                case 0xe0:
                    data1();
                    r.u8();
                    break;
                case 0xc0:
                case 0xd0:
                    data1();
                    break;
                case 0xf0: {
                    if (status == 0xff) {
                        std::uint8_t type = r.u8();
                        std::uint32_t mlen = r.vlq();
                        if (type == 0x51 && mlen == 3) {
                            double uspq = r.u8() << 16 | r.u8() << 8 | r.u8();
                            if (uspq <= 0) throw DecodeError("midi: zero tempo");
                            tempo_events.push_back({tick, uspq});
                        } else if (type == 0x58 && mlen >= 2) {
                            int num = r.u8();
                            int den = 1 << r.u8();
                            r.skip(mlen - 2);
                            if (num > 0) timesig_events.push_back({tick, num, den});
                        } else {
                            r.skip(mlen);
                        }
                        running = -1;
                    } else if (status == 0xf0 || status == 0xf7) {
                        r.skip(r.vlq());
                        running = -1;
                    } else {
                        throw DecodeError("midi: unexpected system status byte");
                    }
                    break;
                }
                default:
                    throw DecodeError("midi: bad status byte");
            }
        }
    }

    TickClock clock(tempo_events, ppq);
    MidiScore score;
    score.tempo_map = clock.tempo_points();
    std::sort(timesig_events.begin(), timesig_events.end(),
              [](const TimeSigEvent& a, const TimeSigEvent& b) { return a.tick < b.tick; });
    for (const auto& ts : timesig_events)
        score.time_signatures.push_back({clock.seconds(ts.tick), ts.numerator, ts.denominator});

    // FIFO pairing per (channel, pitch); note-off closes the oldest open note.
    std::stable_sort(note_events.begin(), note_events.end(), [](const NoteEvent& a, const NoteEvent& b) {
        return a.tick != b.tick ? a.tick < b.tick : a.order < b.order;
    });
    struct Open {
        std::int64_t tick;
        int velocity;
    };
    std::map<std::pair<int, int>, std::deque<Open>> open;
    for (const auto& ev : note_events) {
        auto key = std::make_pair(ev.channel, ev.pitch);
        if (ev.on) {
            open[key].push_back({ev.tick, ev.velocity});
        } else {
            auto it = open.find(key);
            if (it == open.end() || it->second.empty()) continue;  // stray note-off
            Open o = it->second.front();
            it->second.pop_front();
            double onset = clock.seconds(o.tick);
            double dur = std::max(clock.seconds(ev.tick) - onset, kMinNoteDuration);
            score.notes.push_back({onset, dur, ev.pitch, o.velocity, ev.channel});
        }
    }
    const double eof_time = clock.seconds(last_tick);
    for (auto& [key, queue] : open) {
        for (const auto& o : queue) {
            double onset = clock.seconds(o.tick);
            double dur = std::max(eof_time - onset, kMinNoteDuration);
            score.notes.push_back({onset, dur, key.second, o.velocity, key.first});
            score.warnings.push_back("unmatched note-on (pitch " + std::to_string(key.second) +
                                     ") closed at end of file");
        }
    }
    std::stable_sort(score.notes.begin(), score.notes.end(),
                     [](const MidiNote& a, const MidiNote& b) { return a.onset < b.onset; });
    return score;
}

}  // namespace ocmusic
