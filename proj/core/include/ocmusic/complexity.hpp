#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ocmusic/audio.hpp"
#include "ocmusic/dsp.hpp"
#include "ocmusic/midi.hpp"

namespace ocmusic {

struct Histogram {
    std::map<std::string, double> bins;

    double total() const;
};

/// MFCC frame ranges aligned to notes (or onset segments when no symbolic
/// data exists), each with a positive weight.
struct NoteSegment {
    int first_frame = 0;
    int last_frame = 0;  // inclusive
    double weight = 1.0;
};

using NoteSegmentation = std::vector<NoteSegment>;

/// -sum p log2 p over non-empty bins, in bits.
double shannon_entropy(const Histogram& h);

/// Mean L1 frame-to-frame difference of max-normalized magnitudes.
double spectral_complexity(const Spectrogram& spec);

/// Weighted mean over segments of the per-segment MFCC variance (variance
/// averaged across coefficient dimensions).
double timbre_variability(const MfccSequence& mfcc, const NoteSegmentation& seg);

/// 1 - compressed/original size under the project's fixed LZSS compressor,
/// clamped to [0, 1). Payloads shorter than 64 bytes are rejected.
double kolmogorov_redundancy(std::span<const std::uint8_t> payload);

/// Quantized 8-bit mel-energy stream, the canonical redundancy payload.
std::vector<std::uint8_t> mel_payload(const MelSpectrogram& mel);

/// Mean over lags 1..max_lag of sum_t x(t)x(t+i) / sum_t x(t)^2. The inner
/// sum is left unnormalized by overlap, so longer lags weigh in smaller.
double autocorrelation_value(const AudioBuffer& audio, int max_lag);

/// Duration-weighted pitch-class histogram with bins "0".."11".
Histogram pitch_class_histogram(const MidiScore& score);

}  // namespace ocmusic
