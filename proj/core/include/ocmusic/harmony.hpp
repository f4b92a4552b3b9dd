#pragma once

#include <array>
#include <optional>
#include <set>
#include <vector>

#include "ocmusic/audio.hpp"
#include "ocmusic/midi.hpp"

namespace ocmusic {

/// Per-instrument waveforms plus their mix. Stems are zero-padded to a
/// common length on construction.
struct StemSet {
    std::vector<AudioBuffer> stems;
    AudioBuffer mix;
    bool pseudo = false;  // stems synthesized by band-splitting the mix

    static StemSet from_stems(std::vector<AudioBuffer> stems);
    /// Band-passed copies of the mix standing in for real stems (degraded).
    static StemSet pseudo_from_mix(const AudioBuffer& mix, double split_hz = 1000.0);
};

struct Chord {
    std::set<int> pitch_classes;  // 0..11
    double start = 0.0;
    double end = 0.0;
    int top_pitch = 0;  // highest sounding MIDI pitch, melodic surrogate
};

struct KeyEstimate {
    int tonic = 0;  // pitch class
    bool major = true;
};

struct ChordSequence {
    std::vector<Chord> chords;
    KeyEstimate key;
};

/// GTTM-style beat hierarchy: downbeat strongest, mid-bar beat next (when the
/// meter has one), remaining beats weakest.
struct MetricalGrid {
    std::vector<double> beat_times;
    std::vector<int> weights;
    bool default_meter = false;  // no time signature in the source, assumed 4/4
};

struct Complementarity {
    double value = 0.0;
    bool silent = false;  // mix had no energy
};

/// Default frequency-band edges (Hz) for timbre balance.
std::vector<double> default_band_edges();

/// Per-stem energy within [edges[b], edges[b+1]) for every band b.
/// Rows index stems, columns index bands.
std::vector<std::vector<double>> band_energies(const StemSet& stems, const std::vector<double>& edges);

/// B = min over bands of (min-stem energy + eps) / (max-stem energy + eps).
/// 1 when every stem carries the same energy profile, ~0 for disjoint bands.
double timbre_balance_from_energies(const std::vector<std::vector<double>>& energies);
double timbre_balance(const StemSet& stems, const std::vector<double>& edges);

/// Mean inner product of RMS-normalized stems (each divided by the stem
/// count) against the RMS-normalized mix; lands in [-1, 1].
Complementarity timbre_complementarity(const StemSet& stems);

/// alpha * balance + (1 - alpha) * complementarity.
double timbre_harmony(double balance, double complementarity, double alpha);

/// Default interval-class weights, consonance-ordered, in [0, 1].
/// Class 12 holds unisons and octaves.
std::array<double, 12> default_interval_weights();

/// Weighted interval-class distribution over simultaneous and successive
/// note pairs: sum_i alpha_i * pir_i + bias, with sum_i pir_i = 1.
double interval_harmony(const MidiScore& score, const std::array<double, 12>& weights, double bias);

/// Interval-class histogram (classes 1..12 at indices 0..11) used by
/// interval_harmony; exposed for inspection.
std::array<double, 12> interval_distribution(const MidiScore& score);

/// Sounding pitch-class sets per window (in beats); silent windows omitted.
/// The key is the duration-weighted modal pitch class, mode by third.
ChordSequence extract_chords(const MidiScore& score, double window_beats = 2.0);

struct ProgressionWeights {
    double chord_change = 1.0;     // lambda1: distance between consecutive chords
    double key_distance = 1.0;     // lambda2: distance of chord to the key triad
    double fifths_distance = 1.0;  // lambda3: circle-of-fifths root distance to tonic
    double dissonance = 1.0;       // lambda4: fraction of dissonant pitch-class pairs
    double melodic = 1.0;          // lambda5: top-voice step size
    double hierarchy = 1.0;        // lambda6: 0 on tonic/dominant/subdominant, else 1
};

/// Mean progression tension across consecutive chords.
double chord_progression_harmony(const ChordSequence& chords, const ProgressionWeights& lambda);

/// Individual tension terms for chord i (>= 1), exposed for tests.
std::array<double, 6> progression_terms(const ChordSequence& chords, std::size_t i);

MetricalGrid metrical_grid(const MidiScore& score);

/// Cosine similarity between mean note velocity per beat and the grid
/// weights; beats with no note within `tolerance` seconds are skipped.
double dynamic_harmony(const MidiScore& score, const MetricalGrid& grid, double tolerance = 0.05);

}  // namespace ocmusic
