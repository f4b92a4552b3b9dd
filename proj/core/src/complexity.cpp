#include "ocmusic/complexity.hpp"

#include <algorithm>
#include <cmath>

#include "ocmusic/errors.hpp"
#include "ocmusic/lzss.hpp"

namespace ocmusic {

double Histogram::total() const {
    double t = 0.0;
    for (const auto& [label, count] : bins) t += count;
    return t;
}

double shannon_entropy(const Histogram& h) {
    const double total = h.total();
    if (h.bins.empty() || total <= 0.0)
        throw UndefinedFeatureError("entropy: empty histogram");
    double acc = 0.0;
    for (const auto& [label, count] : h.bins) {
        if (count <= 0.0) continue;
        const double p = count / total;
        acc -= p * std::log2(p);
    }
    return acc;
}

double spectral_complexity(const Spectrogram& spec) {
    const int frames = spec.frames();
    if (frames < 2) throw UndefinedFeatureError("spectral complexity: fewer than 2 frames");
    const double peak = spec.magnitudes.maxCoeff();
    if (peak <= 0.0) return 0.0;  // silence: no flux
    double acc = 0.0;
    for (int t = 1; t < frames; ++t)
        acc += (spec.magnitudes.col(t) - spec.magnitudes.col(t - 1)).cwiseAbs().sum() / peak;
    return acc / (frames - 1);
}

double timbre_variability(const MfccSequence& mfcc, const NoteSegmentation& seg) {
    if (seg.empty()) throw UndefinedFeatureError("timbre variability: empty segmentation");
    const int frames = static_cast<int>(mfcc.coeffs.cols());
    const int dims = static_cast<int>(mfcc.coeffs.rows());
    double weighted = 0.0, weight_sum = 0.0;
    for (const auto& s : seg) {
        if (s.first_frame < 0 || s.last_frame >= frames || s.last_frame < s.first_frame)
            throw ConfigError("timbre variability: segment outside MFCC frames");
        if (s.weight <= 0.0) throw ConfigError("timbre variability: non-positive weight");
        const int len = s.last_frame - s.first_frame + 1;
        const auto block = mfcc.coeffs.middleCols(s.first_frame, len);
        double var = 0.0;
        for (int d = 0; d < dims; ++d) {
            const double mean = block.row(d).mean();
            var += (block.row(d).array() - mean).square().sum() / len;
        }
        weighted += var / dims * s.weight;
        weight_sum += s.weight;
    }
    return weighted / weight_sum;
}

double kolmogorov_redundancy(std::span<const std::uint8_t> payload) {
    if (payload.size() < 64)
        throw UndefinedFeatureError("kolmogorov redundancy: payload shorter than 64 bytes");
    const double compressed = static_cast<double>(lzss_compressed_size(payload));
    const double original = static_cast<double>(payload.size());
    return std::clamp(1.0 - compressed / original, 0.0, std::nextafter(1.0, 0.0));
}

std::vector<std::uint8_t> mel_payload(const MelSpectrogram& mel) {
    const double peak = mel.energies.maxCoeff();
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(mel.energies.size()));
    for (Eigen::Index t = 0; t < mel.energies.cols(); ++t)
        for (Eigen::Index m = 0; m < mel.energies.rows(); ++m) {
            const double v = peak > 0.0 ? mel.energies(m, t) / peak : 0.0;
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
    return out;
}

double autocorrelation_value(const AudioBuffer& audio, int max_lag) {
    const auto len = static_cast<int>(audio.samples.size());
    if (max_lag < 1 || len <= max_lag)
        throw ConfigError("autocorrelation: need audio longer than max_lag >= 1");
    double energy = 0.0;
    for (double x : audio.samples) energy += x * x;
    if (energy <= 0.0) throw UndefinedFeatureError("autocorrelation: zero-energy signal");

    double acc = 0.0;
    for (int lag = 1; lag <= max_lag; ++lag) {
        double dot = 0.0;
        for (int t = 0; t + lag < len; ++t) dot += audio.samples[t] * audio.samples[t + lag];
        acc += dot / energy;
    }
    return acc / max_lag;
}

Histogram pitch_class_histogram(const MidiScore& score) {
    if (score.notes.empty()) throw UndefinedFeatureError("pitch-class histogram: empty score");
    Histogram h;
    for (const auto& n : score.notes)
        h.bins[std::to_string(n.pitch % 12)] += n.duration;
    return h;
}

}  // namespace ocmusic
