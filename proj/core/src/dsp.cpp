#include "ocmusic/dsp.hpp"

#include <cmath>
#include <numbers>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

constexpr double kLogFloor = 1e-10;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    return w;
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse) {
    const std::size_t n = data.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft: size must be a power of two");
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                auto u = data[i + k];
                auto v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : data) x /= static_cast<double>(n);
}

Spectrogram stft(const AudioBuffer& audio, int frame_size, int hop_size) {
    if (!is_pow2(frame_size)) throw ConfigError("stft: frame_size must be a power of two");
    if (hop_size <= 0 || hop_size > frame_size) throw ConfigError("stft: need 0 < hop <= frame");
    const auto len = static_cast<int>(audio.samples.size());
    if (len < frame_size)
        throw UndefinedFeatureError("stft: audio shorter than one frame");

    const int frames = 1 + (len - frame_size) / hop_size;
    const int bins = frame_size / 2 + 1;
    const auto window = hann_window(frame_size);

    Spectrogram out;
    out.magnitudes.resize(bins, frames);
    out.frame_size = frame_size;
    out.hop_size = hop_size;
    out.sample_rate = audio.sample_rate;
    out.freqs.resize(bins);
    for (int k = 0; k < bins; ++k)
        out.freqs[k] = static_cast<double>(k) * audio.sample_rate / frame_size;

    std::vector<std::complex<double>> buf(frame_size);
    for (int t = 0; t < frames; ++t) {
        const int offset = t * hop_size;
        for (int i = 0; i < frame_size; ++i)
            buf[i] = audio.samples[offset + i] * window[i];
        fft_inplace(buf, false);
        for (int k = 0; k < bins; ++k)
            out.magnitudes(k, t) = std::abs(buf[k]);
    }
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelSpectrogram mel_spectrogram(const Spectrogram& spec, int n_mels) {
    if (n_mels < 4) throw ConfigError("mel: need at least 4 bands");
    if (n_mels > spec.bins()) throw ConfigError("mel: more bands than spectrogram bins");
    if (spec.sample_rate <= 0) throw ConfigError("mel: spectrogram carries no sample rate");

    const int bins = spec.bins();
    const double mel_max = hz_to_mel(spec.sample_rate / 2.0);
    std::vector<double> centers(n_mels + 2);
    for (int m = 0; m < n_mels + 2; ++m)
        centers[m] = mel_to_hz(mel_max * m / (n_mels + 1));

    Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = spec.freqs[k];
            if (f <= lo || f >= hi) continue;
            bank(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        }
    }

    MelSpectrogram out;
    out.sample_rate = spec.sample_rate;
    out.energies = bank * spec.magnitudes.array().square().matrix();
    return out;
}

ChromaSequence chroma(const Spectrogram& spec) {
    if (spec.sample_rate < 8000) throw ConfigError("chroma: sample rate below 8 kHz");
    const int frames = spec.frames();
    ChromaSequence out;
    out.vectors = Eigen::MatrixXd::Zero(12, frames);
    for (int k = 0; k < spec.bins(); ++k) {
        const double f = spec.freqs[k];
        if (f < 55.0 || f > 4000.0) continue;
        const int midi = static_cast<int>(std::lround(12.0 * std::log2(f / 440.0) + 69.0));
        const int pc = ((midi % 12) + 12) % 12;
        for (int t = 0; t < frames; ++t) {
            const double mag = spec.magnitudes(k, t);
            out.vectors(pc, t) += mag * mag;
        }
    }
    for (int t = 0; t < frames; ++t) {
        const double peak = out.vectors.col(t).maxCoeff();
        if (peak > 0.0) out.vectors.col(t) /= peak;
    }
    return out;
}

MfccSequence mfcc(const MelSpectrogram& mel, int n_coeffs) {
    const int m = static_cast<int>(mel.energies.rows());
    if (n_coeffs > m) throw ConfigError("mfcc: more coefficients than mel bands");
    const int frames = static_cast<int>(mel.energies.cols());

    Eigen::MatrixXd dct(n_coeffs, m);
    for (int k = 0; k < n_coeffs; ++k)
        for (int i = 0; i < m; ++i)
            dct(k, i) = std::cos(std::numbers::pi * k * (i + 0.5) / m);

    MfccSequence out;
    out.coeffs.resize(n_coeffs, frames);
    Eigen::MatrixXd log_mel = (mel.energies.array() + kLogFloor).log().matrix();
    out.coeffs = dct * log_mel;
    return out;
}

AudioBuffer bandpass(const AudioBuffer& audio, double lo_hz, double hi_hz, int frame_size) {
    if (!is_pow2(frame_size)) throw ConfigError("bandpass: frame_size must be a power of two");
    const int hop = frame_size / 2;  // Hann at 50% overlap sums to a constant
    const auto len = static_cast<int>(audio.samples.size());
    const auto window = hann_window(frame_size);

    AudioBuffer out;
    out.sample_rate = audio.sample_rate;
    out.source_channels = audio.source_channels;
    out.samples.assign(audio.samples.size(), 0.0);
    if (len == 0) return out;

    std::vector<double> weight(audio.samples.size(), 0.0);
    std::vector<std::complex<double>> buf(frame_size);
    const double bin_hz = static_cast<double>(audio.sample_rate) / frame_size;

    for (int offset = 0; offset < len; offset += hop) {
        for (int i = 0; i < frame_size; ++i) {
            const int idx = offset + i;
            buf[i] = idx < len ? audio.samples[idx] * window[i] : 0.0;
        }
        fft_inplace(buf, false);
        for (int k = 0; k <= frame_size / 2; ++k) {
            const double f = k * bin_hz;
            if (f >= lo_hz && f < hi_hz) continue;
            buf[k] = 0.0;
            if (k > 0 && k < frame_size / 2) buf[frame_size - k] = 0.0;
        }
        fft_inplace(buf, true);
        for (int i = 0; i < frame_size; ++i) {
            const int idx = offset + i;
            if (idx >= len) break;
            out.samples[idx] += buf[i].real() * window[i];
            weight[idx] += window[i] * window[i];
        }
    }
    for (int i = 0; i < len; ++i)
        if (weight[i] > 1e-12) out.samples[i] /= weight[i];
    for (auto& s : out.samples) s = std::clamp(s, -1.0, 1.0);
    return out;
}

}  // namespace ocmusic
