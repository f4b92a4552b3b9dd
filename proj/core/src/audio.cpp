#include "ocmusic/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }

    std::uint32_t u32le() {
        require(4);
        std::uint32_t v = bytes_[pos_] | bytes_[pos_ + 1] << 8 | bytes_[pos_ + 2] << 16 |
                          static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24;
        pos_ += 4;
        return v;
    }
    std::uint16_t u16le() {
        require(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | bytes_[pos_ + 1] << 8);
        pos_ += 2;
        return v;
    }
    void fourcc(char out[4]) {
        require(4);
        std::memcpy(out, bytes_.data() + pos_, 4);
        pos_ += 4;
    }
    std::span<const std::uint8_t> raw(std::size_t n) {
        require(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void require(std::size_t n) const {
        if (!has(n)) throw DecodeError("wav: truncated file");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

double sample_from_pcm16(const std::uint8_t* p) {
    std::int16_t v = static_cast<std::int16_t>(p[0] | p[1] << 8);
    return static_cast<double>(v) / 32768.0;
}

double sample_from_float32(const std::uint8_t* p) {
    std::uint32_t bits = p[0] | p[1] << 8 | p[2] << 16 | static_cast<std::uint32_t>(p[3]) << 24;
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) throw DecodeError("wav: non-finite float sample");
    return std::clamp(static_cast<double>(f), -1.0, 1.0);
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8 & 0xff);
    out.push_back(v >> 16 & 0xff);
    out.push_back(v >> 24 & 0xff);
}

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8 & 0xff);
}

std::vector<std::uint8_t> encode_header(const AudioBuffer& audio, std::uint16_t format,
                                        std::uint16_t bits, std::uint32_t data_size) {
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    const std::uint16_t channels = 1;
    const std::uint32_t byte_rate = static_cast<std::uint32_t>(audio.sample_rate) * channels * bits / 8;
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32le(out, 36 + data_size);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    put_u32le(out, 16);
    put_u16le(out, format);
    put_u16le(out, channels);
    put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate));
    put_u32le(out, byte_rate);
    put_u16le(out, static_cast<std::uint16_t>(channels * bits / 8));
    put_u16le(out, bits);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32le(out, data_size);
    return out;
}

}  // namespace

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    char id[4];
    r.fourcc(id);
    if (std::memcmp(id, "RIFF", 4) != 0) throw DecodeError("wav: missing RIFF tag");
    r.u32le();  // riff size; trust chunk walk instead
    r.fourcc(id);
    if (std::memcmp(id, "WAVE", 4) != 0) throw DecodeError("wav: missing WAVE tag");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    while (r.has(8)) {
        r.fourcc(id);
        std::uint32_t size = r.u32le();
        if (!r.has(size)) throw DecodeError("wav: truncated chunk");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw DecodeError("wav: fmt chunk too small");
            std::size_t body = r.pos();
            format = r.u16le();
            channels = r.u16le();
            sample_rate = r.u32le();
            r.u32le();  // byte rate
            r.u16le();  // block align
            bits = r.u16le();
            r.seek(body + size);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = r.raw(size);
            have_data = true;
        } else {
            r.raw(size);  // skip LIST, fact, ...
        }
        if (size % 2 == 1 && r.has(1)) r.raw(1);  // chunks are word-aligned
    }
    if (!have_fmt) throw DecodeError("wav: no fmt chunk");
    if (!have_data) throw DecodeError("wav: no data chunk");
    if (sample_rate == 0) throw DecodeError("wav: zero sample rate");
    if (channels < 1 || channels > 2)
        throw UnsupportedFormatError("wav: only mono/stereo supported, got " + std::to_string(channels));
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatIeeeFloat && bits == 32;
    if (!pcm16 && !f32)
        throw UnsupportedFormatError("wav: only PCM-16 and float-32 supported (format=" +
                                     std::to_string(format) + ", bits=" + std::to_string(bits) + ")");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data.size() / frame_bytes;

    AudioBuffer out;
    out.sample_rate = static_cast<int>(sample_rate);
    out.source_channels = channels;
    out.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const std::uint8_t* p = data.data() + i * frame_bytes + c * bytes_per_sample;
            acc += pcm16 ? sample_from_pcm16(p) : sample_from_float32(p);
        }
        out.samples[i] = acc / channels;
    }
    return out;
}

std::vector<std::uint8_t> encode_wav_pcm16(const AudioBuffer& audio) {
    const auto data_size = static_cast<std::uint32_t>(audio.samples.size() * 2);
    auto out = encode_header(audio, kFormatPcm, 16, data_size);
    for (double x : audio.samples) {
        double scaled = std::round(x * 32768.0);
        auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16le(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

std::vector<std::uint8_t> encode_wav_float32(const AudioBuffer& audio) {
    const auto data_size = static_cast<std::uint32_t>(audio.samples.size() * 4);
    auto out = encode_header(audio, kFormatIeeeFloat, 32, data_size);
    for (double x : audio.samples) {
        float f = static_cast<float>(x);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32le(out, bits);
    }
    return out;
}

}  // namespace ocmusic
