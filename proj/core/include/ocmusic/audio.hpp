#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ocmusic {

/// Decoded mono PCM. Stereo sources are downmixed by channel mean at decode
/// time; samples always live in [-1, 1].
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 0;
    int source_channels = 1;

    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Decode a RIFF/WAVE file. Supports PCM 16-bit and IEEE float 32-bit,
/// 1 or 2 channels. Anything else raises UnsupportedFormatError.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);

/// Encode mono PCM-16. round(x * 32768) clamped to int16, so decode(encode(x))
/// is within 1 LSB of x.
std::vector<std::uint8_t> encode_wav_pcm16(const AudioBuffer& audio);

/// Encode mono IEEE float-32.
std::vector<std::uint8_t> encode_wav_float32(const AudioBuffer& audio);

}  // namespace ocmusic
