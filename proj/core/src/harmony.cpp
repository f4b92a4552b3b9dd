#include "ocmusic/harmony.hpp"

#include <algorithm>
#include <cmath>

#include "ocmusic/dsp.hpp"
#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

constexpr double kEps = 1e-10;

double rms(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

int largest_pow2_leq(int n) {
    int p = 1;
    while (p * 2 <= n) p *= 2;
    return p;
}

// Piecewise mapping between seconds and quarter-note positions.
class QuarterClock {
public:
    explicit QuarterClock(const std::vector<TempoPoint>& tempo_map) {
        double q = 0.0;
        if (tempo_map.empty()) segments_.push_back({0.0, 0.0, 2.0});
        for (std::size_t i = 0; i < tempo_map.size(); ++i) {
            if (i > 0) q += (tempo_map[i].time - tempo_map[i - 1].time) * tempo_map[i - 1].bpm / 60.0;
            segments_.push_back({tempo_map[i].time, q, tempo_map[i].bpm / 60.0});
        }
        if (segments_.front().time > 0.0) segments_.insert(segments_.begin(), {0.0, 0.0, 2.0});
    }

    double time_at_quarter(double q) const {
        const Segment* seg = &segments_.front();
        for (const auto& s : segments_) {
            if (s.quarter > q) break;
            seg = &s;
        }
        return seg->time + (q - seg->quarter) / seg->rate;
    }

private:
    struct Segment {
        double time;
        double quarter;
        double rate;  // quarters per second
    };
    std::vector<Segment> segments_;
};

std::set<int> transpose(const std::set<int>& pcs, int by) {
    std::set<int> out;
    for (int pc : pcs) out.insert(((pc + by) % 12 + 12) % 12);
    return out;
}

double jaccard_distance(const std::set<int>& a, const std::set<int>& b) {
    if (a.empty() && b.empty()) return 0.0;
    int inter = 0;
    for (int pc : a) inter += b.count(pc);
    const int uni = static_cast<int>(a.size() + b.size()) - inter;
    return 1.0 - static_cast<double>(inter) / uni;
}

int chord_root(const std::set<int>& pcs) {
    int best = *pcs.begin(), best_score = -1;
    for (int r : pcs) {
        int score = 0;
        if (pcs.count((r + 7) % 12)) score += 2;
        if (pcs.count((r + 4) % 12) || pcs.count((r + 3) % 12)) score += 1;
        if (score > best_score) {
            best_score = score;
            best = r;
        }
    }
    return best;
}

int circle_of_fifths_distance(int pc_a, int pc_b) {
    const int steps = ((pc_a - pc_b) * 7 % 12 + 12) % 12;
    return std::min(steps, 12 - steps);
}

std::set<int> key_triad(const KeyEstimate& key) {
    const int third = key.major ? 4 : 3;
    return transpose({0, third, 7}, key.tonic);
}

bool is_functional_triad(const std::set<int>& pcs, const KeyEstimate& key) {
    const int third = key.major ? 4 : 3;
    const std::set<int> tonic = transpose({0, third, 7}, key.tonic);
    const std::set<int> subdominant = transpose({5, key.major ? 9 : 8, 0}, key.tonic);
    const std::set<int> dominant = transpose({7, 11, 2}, key.tonic);
    return pcs == tonic || pcs == subdominant || pcs == dominant;
}

bool dissonant_pair(int a, int b) {
    const int d = ((a - b) % 12 + 12) % 12;
    return d == 1 || d == 2 || d == 6 || d == 10 || d == 11;
}

}  // namespace

StemSet StemSet::from_stems(std::vector<AudioBuffer> stems) {
    if (stems.empty()) throw UndefinedFeatureError("stem set: no stems");
    std::size_t len = 0;
    for (const auto& s : stems) len = std::max(len, s.samples.size());
    StemSet out;
    out.mix.sample_rate = stems.front().sample_rate;
    out.mix.samples.assign(len, 0.0);
    for (auto& s : stems) {
        s.samples.resize(len, 0.0);
        for (std::size_t i = 0; i < len; ++i) out.mix.samples[i] += s.samples[i];
    }
    for (auto& v : out.mix.samples) v = std::clamp(v, -1.0, 1.0);
    out.stems = std::move(stems);
    return out;
}

StemSet StemSet::pseudo_from_mix(const AudioBuffer& mix, double split_hz) {
    const int frame = std::min(2048, largest_pow2_leq(static_cast<int>(mix.samples.size())));
    StemSet out;
    out.stems.push_back(bandpass(mix, 0.0, split_hz, frame));
    out.stems.push_back(bandpass(mix, split_hz, 1e12, frame));
    out.mix = mix;
    out.pseudo = true;
    return out;
}

std::vector<double> default_band_edges() {
    return {0.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 1e12};
}

std::vector<std::vector<double>> band_energies(const StemSet& stems, const std::vector<double>& edges) {
    if (edges.size() < 3) throw ConfigError("timbre balance: need at least 2 bands");
    std::vector<std::vector<double>> energies;
    for (const auto& stem : stems.stems) {
        std::vector<double> row(edges.size() - 1, 0.0);
        const int len = static_cast<int>(stem.samples.size());
        if (len >= 64) {
            const int frame = std::min(2048, largest_pow2_leq(len));
            const auto spec = stft(stem, frame, frame / 2);
            for (int k = 0; k < spec.bins(); ++k) {
                const double f = spec.freqs[k];
                auto it = std::upper_bound(edges.begin(), edges.end(), f);
                if (it == edges.begin() || it == edges.end()) continue;
                const auto band = static_cast<std::size_t>(it - edges.begin() - 1);
                row[band] += spec.magnitudes.row(k).array().square().sum();
            }
        }
        energies.push_back(std::move(row));
    }
    return energies;
}

double timbre_balance_from_energies(const std::vector<std::vector<double>>& energies) {
    if (energies.size() < 2) throw UndefinedFeatureError("timbre balance: needs at least 2 stems");
    const std::size_t bands = energies.front().size();
    if (bands < 2) throw ConfigError("timbre balance: need at least 2 bands");
    double balance = 1.0;
    for (std::size_t b = 0; b < bands; ++b) {
        double lo = energies[0][b], hi = energies[0][b];
        for (const auto& row : energies) {
            lo = std::min(lo, row[b]);
            hi = std::max(hi, row[b]);
        }
        balance = std::min(balance, (lo + kEps) / (hi + kEps));
    }
    return balance;
}

double timbre_balance(const StemSet& stems, const std::vector<double>& edges) {
    return timbre_balance_from_energies(band_energies(stems, edges));
}

Complementarity timbre_complementarity(const StemSet& stems) {
    if (stems.stems.empty()) throw UndefinedFeatureError("timbre complementarity: no stems");
    std::size_t len = stems.mix.samples.size();
    for (const auto& s : stems.stems) len = std::min(len, s.samples.size());
    const double mix_rms = rms(stems.mix.samples);
    if (len == 0 || mix_rms <= 0.0) return {0.0, true};

    const double n = static_cast<double>(stems.stems.size());
    double acc = 0.0;
    for (const auto& stem : stems.stems) {
        const double stem_rms = rms(stem.samples);
        if (stem_rms <= 0.0) continue;
        double dot = 0.0;
        for (std::size_t t = 0; t < len; ++t) dot += stem.samples[t] * stems.mix.samples[t];
        acc += dot / (stem_rms * n * mix_rms);
    }
    return {acc / static_cast<double>(len), false};
}

double timbre_harmony(double balance, double complementarity, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("timbre harmony: alpha outside [0, 1]");
    return alpha * balance + (1.0 - alpha) * complementarity;
}

std::array<double, 12> default_interval_weights() {
    // index i holds the weight for interval class i+1
    return {0.10, 0.30, 0.60, 0.70, 0.80, 0.20, 0.90, 0.60, 0.50, 0.30, 0.10, 1.00};
}

namespace {

int interval_class(int semitones) {
    return (std::abs(semitones) + 11) % 12 + 1;  // 0 and 12 both land on class 12
}

}  // namespace

std::array<double, 12> interval_distribution(const MidiScore& score) {
    if (score.notes.size() < 2) throw UndefinedFeatureError("interval harmony: fewer than 2 notes");
    std::array<double, 12> counts{};
    double total = 0.0;

    const auto& notes = score.notes;
    for (std::size_t i = 0; i < notes.size(); ++i) {
        for (std::size_t j = i + 1; j < notes.size(); ++j) {
            const bool overlap = notes[i].onset < notes[j].onset + notes[j].duration &&
                                 notes[j].onset < notes[i].onset + notes[i].duration;
            if (!overlap) continue;
            counts[interval_class(notes[i].pitch - notes[j].pitch) - 1] += 1.0;
            total += 1.0;
        }
    }

    // successive motion: highest pitch of each onset group against the next
    constexpr double kOnsetEps = 1e-9;
    std::vector<int> group_top;
    for (std::size_t i = 0; i < notes.size();) {
        int top = notes[i].pitch;
        std::size_t j = i + 1;
        while (j < notes.size() && notes[j].onset - notes[i].onset < kOnsetEps) {
            top = std::max(top, notes[j].pitch);
            ++j;
        }
        group_top.push_back(top);
        i = j;
    }
    for (std::size_t g = 1; g < group_top.size(); ++g) {
        counts[interval_class(group_top[g] - group_top[g - 1]) - 1] += 1.0;
        total += 1.0;
    }

    if (total == 0.0) throw UndefinedFeatureError("interval harmony: no note pairs");
    for (auto& c : counts) c /= total;
    return counts;
}

double interval_harmony(const MidiScore& score, const std::array<double, 12>& weights, double bias) {
    const auto pir = interval_distribution(score);
    double acc = bias;
    for (int i = 0; i < 12; ++i) acc += weights[i] * pir[i];
    return acc;
}

ChordSequence extract_chords(const MidiScore& score, double window_beats) {
    ChordSequence out;
    if (score.notes.empty()) return out;
    if (window_beats <= 0.0) throw ConfigError("extract_chords: window must be positive");

    // duration-weighted pitch-class histogram for the key estimate
    std::array<double, 12> pc_weight{};
    for (const auto& n : score.notes) pc_weight[n.pitch % 12] += n.duration;
    int tonic = 0;
    for (int pc = 1; pc < 12; ++pc)
        if (pc_weight[pc] > pc_weight[tonic]) tonic = pc;
    out.key.tonic = tonic;
    out.key.major = pc_weight[(tonic + 4) % 12] >= pc_weight[(tonic + 3) % 12];

    const QuarterClock clock(score.tempo_map);
    const double end = score.end_time();
    for (int w = 0;; ++w) {
        const double t0 = clock.time_at_quarter(w * window_beats);
        const double t1 = clock.time_at_quarter((w + 1) * window_beats);
        if (t0 >= end - 1e-9) break;
        Chord chord;
        chord.start = t0;
        chord.end = t1;
        int top = -1;
        for (const auto& n : score.notes) {
            if (n.onset < t1 && n.onset + n.duration > t0 + 1e-6) {
                chord.pitch_classes.insert(n.pitch % 12);
                top = std::max(top, n.pitch);
            }
        }
        if (chord.pitch_classes.empty()) continue;  // silent window
        chord.top_pitch = top;
        out.chords.push_back(std::move(chord));
    }
    return out;
}

std::array<double, 6> progression_terms(const ChordSequence& seq, std::size_t i) {
    if (i == 0 || i >= seq.chords.size())
        throw ConfigError("progression terms: index must address a chord transition");
    const Chord& cur = seq.chords[i];
    const Chord& prev = seq.chords[i - 1];

    const double d1 = jaccard_distance(cur.pitch_classes, prev.pitch_classes);
    const double d2 = jaccard_distance(cur.pitch_classes, key_triad(seq.key));
    const double d3 =
        circle_of_fifths_distance(chord_root(cur.pitch_classes), seq.key.tonic) / 6.0;

    double dissonant = 0.0, pairs = 0.0;
    for (auto a = cur.pitch_classes.begin(); a != cur.pitch_classes.end(); ++a)
        for (auto b = std::next(a); b != cur.pitch_classes.end(); ++b) {
            dissonant += dissonant_pair(*a, *b) ? 1.0 : 0.0;
            pairs += 1.0;
        }
    const double c = pairs > 0.0 ? dissonant / pairs : 0.0;

    const double m = std::min(std::abs(cur.top_pitch - prev.top_pitch) / 12.0, 1.0);
    const double h = is_functional_triad(cur.pitch_classes, seq.key) ? 0.0 : 1.0;
    return {d1, d2, d3, c, m, h};
}

double chord_progression_harmony(const ChordSequence& chords, const ProgressionWeights& lambda) {
    if (chords.chords.size() < 2)
        throw UndefinedFeatureError("chord progression harmony: fewer than 2 chords");
    double acc = 0.0;
    for (std::size_t i = 1; i < chords.chords.size(); ++i) {
        const auto t = progression_terms(chords, i);
        acc += lambda.chord_change * t[0] + lambda.key_distance * t[1] +
               lambda.fifths_distance * t[2] + lambda.dissonance * t[3] + lambda.melodic * t[4] +
               lambda.hierarchy * t[5];
    }
    return acc / static_cast<double>(chords.chords.size() - 1);
}

MetricalGrid metrical_grid(const MidiScore& score) {
    MetricalGrid grid;
    std::vector<TimeSignature> sigs = score.time_signatures;
    if (sigs.empty()) {
        sigs.push_back({0.0, 4, 4});
        grid.default_meter = true;
    }
    if (sigs.front().time > 0.0) sigs.insert(sigs.begin(), {0.0, 4, 4});

    const QuarterClock clock(score.tempo_map);
    const double end = score.end_time();

    auto beat_weight = [](int beat_in_bar, int numerator) {
        if (beat_in_bar == 0) return numerator;
        if (numerator >= 4 && numerator % 2 == 0 && beat_in_bar == numerator / 2) return 2;
        return 1;
    };

    // Walk quarter positions per time-signature region; beats restart at each change.
    double quarter = 0.0;
    for (std::size_t s = 0; s < sigs.size(); ++s) {
        const double region_end = s + 1 < sigs.size() ? sigs[s + 1].time : end;
        const double beat_quarters = 4.0 / sigs[s].denominator;
        int beat_in_bar = 0;
        while (true) {
            const double t = clock.time_at_quarter(quarter);
            if (t >= std::min(region_end, end) - 1e-9) break;
            grid.beat_times.push_back(t);
            grid.weights.push_back(beat_weight(beat_in_bar, sigs[s].numerator));
            beat_in_bar = (beat_in_bar + 1) % sigs[s].numerator;
            quarter += beat_quarters;
        }
    }
    return grid;
}

double dynamic_harmony(const MidiScore& score, const MetricalGrid& grid, double tolerance) {
    std::vector<double> dynamics, weights;
    for (std::size_t b = 0; b < grid.beat_times.size(); ++b) {
        double sum = 0.0;
        int count = 0;
        for (const auto& n : score.notes) {
            if (std::abs(n.onset - grid.beat_times[b]) <= tolerance) {
                sum += n.velocity;
                ++count;
            }
        }
        if (count == 0) continue;
        dynamics.push_back(sum / count);
        weights.push_back(grid.weights[b]);
    }
    if (dynamics.empty())
        throw UndefinedFeatureError("dynamic harmony: no notes aligned to any beat");

    double dot = 0.0, dd = 0.0, mm = 0.0;
    for (std::size_t i = 0; i < dynamics.size(); ++i) {
        dot += dynamics[i] * weights[i];
        dd += dynamics[i] * dynamics[i];
        mm += weights[i] * weights[i];
    }
    if (dd <= 0.0 || mm <= 0.0) throw UndefinedFeatureError("dynamic harmony: zero-energy vectors");
    return dot / (std::sqrt(dd) * std::sqrt(mm));
}

}  // namespace ocmusic
