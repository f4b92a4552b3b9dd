#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ocmusic {

struct MidiNote {
    double onset = 0.0;     // seconds
    double duration = 0.0;  // seconds, > 0
    int pitch = 0;          // 0..127
    int velocity = 0;       // 0..127
    int channel = 0;        // 0..15
};

struct TempoPoint {
    double time = 0.0;  // seconds
    double bpm = 120.0;
};

struct TimeSignature {
    double time = 0.0;  // seconds
    int numerator = 4;
    int denominator = 4;
};

/// Timed note events with tempo and time-signature maps, all in seconds.
/// Notes are sorted by onset; the tempo map is never empty (120 bpm default).
struct MidiScore {
    std::vector<MidiNote> notes;
    std::vector<TempoPoint> tempo_map;
    std::vector<TimeSignature> time_signatures;
    std::vector<std::string> warnings;

    double end_time() const;
    double bpm_at(double time) const;
};

/// Parse a Standard MIDI File (format 0 or 1). Note-on/note-off pairs are
/// matched FIFO per (channel, pitch); a note-on with velocity 0 counts as a
/// note-off. Unmatched note-ons are closed at the last event time and
/// reported in `warnings`.
MidiScore parse_midi(std::span<const std::uint8_t> bytes);

}  // namespace ocmusic
