#include "ocmusic/transcribe.hpp"

#include <algorithm>
#include <cmath>

#include "ocmusic/dsp.hpp"
#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

constexpr double kMinF0 = 50.0;
constexpr double kMaxF0 = 1000.0;
constexpr double kMinNoteSeconds = 0.03;

// Unnormalized autocorrelation peak over the plausible f0 lag range. The
// shrinking overlap at longer lags biases toward the true (shortest) period,
// which is what we want against octave errors.
double estimate_f0(std::span<const double> window, int sample_rate) {
    const int n = static_cast<int>(window.size());
    const int min_lag = std::max(2, static_cast<int>(sample_rate / kMaxF0));
    const int max_lag = std::min(n - 1, static_cast<int>(sample_rate / kMinF0));
    if (max_lag <= min_lag) return 0.0;

    double r0 = 0.0;
    for (double x : window) r0 += x * x;
    if (r0 <= 1e-12) return 0.0;

    int best_lag = 0;
    double best = 0.0;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
        double r = 0.0;
        for (int t = 0; t + lag < n; ++t) r += window[t] * window[t + lag];
        if (r > best) {
            best = r;
            best_lag = lag;
        }
    }
    if (best_lag == 0 || best < 0.3 * r0) return 0.0;  // not periodic enough
    return static_cast<double>(sample_rate) / best_lag;
}

double segment_rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace

std::vector<int> onset_frames(const AudioBuffer& audio, int frame_size, int hop_size) {
    if (static_cast<int>(audio.samples.size()) < frame_size) return {};
    const auto spec = stft(audio, frame_size, hop_size);
    const int frames = spec.frames();

    std::vector<double> flux(frames, 0.0);
    flux[0] = spec.magnitudes.col(0).sum();
    for (int t = 1; t < frames; ++t)
        flux[t] = (spec.magnitudes.col(t) - spec.magnitudes.col(t - 1)).cwiseMax(0.0).sum();

    double mean = 0.0;
    for (double f : flux) mean += f;
    mean /= frames;
    double var = 0.0;
    for (double f : flux) var += (f - mean) * (f - mean);
    const double threshold = mean + std::sqrt(var / frames);

    std::vector<int> onsets;
    const int min_separation = std::max(1, static_cast<int>(0.05 * audio.sample_rate / hop_size));
    for (int t = 0; t < frames; ++t) {
        if (flux[t] <= threshold) continue;
        if (t > 0 && flux[t] < flux[t - 1]) continue;
        if (t + 1 < frames && flux[t] < flux[t + 1]) continue;
        if (!onsets.empty() && t - onsets.back() < min_separation) continue;
        onsets.push_back(t);
    }
    return onsets;
}

MidiScore naive_transcribe(const AudioBuffer& audio) {
    constexpr int kFrame = 1024, kHop = 256;
    MidiScore score;
    score.tempo_map.push_back({0.0, 120.0});

    const auto onsets = onset_frames(audio, kFrame, kHop);
    if (onsets.empty()) {
        score.warnings.push_back("no onsets detected");
        return score;
    }

    const int len = static_cast<int>(audio.samples.size());
    for (std::size_t i = 0; i < onsets.size(); ++i) {
        const int start = onsets[i] * kHop;
        const int stop = i + 1 < onsets.size() ? onsets[i + 1] * kHop : len;
        if (stop - start < kFrame) continue;

        // median f0 over the segment's analysis frames
        std::vector<double> f0s;
        for (int pos = start; pos + kFrame <= stop; pos += kHop) {
            const double f0 = estimate_f0({audio.samples.data() + pos, kFrame}, audio.sample_rate);
            if (f0 > 0.0) f0s.push_back(f0);
        }
        if (f0s.empty()) continue;
        std::nth_element(f0s.begin(), f0s.begin() + f0s.size() / 2, f0s.end());
        const double f0 = f0s[f0s.size() / 2];
        const int pitch = std::clamp(
            static_cast<int>(std::lround(69.0 + 12.0 * std::log2(f0 / 440.0))), 0, 127);

        // trim the tail once energy falls well below the segment's peak
        double peak_rms = 0.0;
        std::vector<double> frame_rms;
        for (int pos = start; pos + kFrame <= stop; pos += kHop) {
            frame_rms.push_back(segment_rms({audio.samples.data() + pos, kFrame}));
            peak_rms = std::max(peak_rms, frame_rms.back());
        }
        int end = stop;
        for (std::size_t f = 0; f < frame_rms.size(); ++f) {
            if (frame_rms[f] < 0.1 * peak_rms) {
                end = start + static_cast<int>(f) * kHop;
                break;
            }
        }

        const double onset_s = static_cast<double>(start) / audio.sample_rate;
        const double dur_s = static_cast<double>(end - start) / audio.sample_rate;
        if (dur_s < kMinNoteSeconds) continue;
        const double rms = segment_rms({audio.samples.data() + start, static_cast<std::size_t>(end - start)});
        const int velocity = std::clamp(static_cast<int>(std::lround(126.0 * std::min(1.0, rms * 2.0))) + 1, 1, 127);
        score.notes.push_back({onset_s, dur_s, pitch, velocity, 0});
    }
    if (score.notes.empty()) score.warnings.push_back("no pitched segments found");
    return score;
}

}  // namespace ocmusic
