#pragma once

#include <functional>
#include <vector>

#include "ocmusic/audio.hpp"
#include "ocmusic/midi.hpp"

namespace ocmusic {

/// Any audio -> score mapping; the distillation pipeline takes one of these
/// so transcription stays injectable.
using Transcriber = std::function<MidiScore(const AudioBuffer&)>;

/// Half-wave-rectified spectral-flux onset frames (frame indices into an
/// STFT at the given frame/hop).
std::vector<int> onset_frames(const AudioBuffer& audio, int frame_size = 1024, int hop_size = 256);

/// Minimal monophonic transcriber: spectral-flux onsets, median
/// autocorrelation f0 per inter-onset segment, velocity from RMS.
MidiScore naive_transcribe(const AudioBuffer& audio);

}  // namespace ocmusic
