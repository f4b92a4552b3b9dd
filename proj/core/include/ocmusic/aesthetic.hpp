#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ocmusic/audio.hpp"
#include "ocmusic/harmony.hpp"
#include "ocmusic/manifest.hpp"
#include "ocmusic/midi.hpp"
#include "ocmusic/transcribe.hpp"

namespace ocmusic {

enum class BasicFeature : int {
    kTimbreHarmony = 0,
    kIntervalHarmony,
    kChordProgressionHarmony,
    kDynamicHarmony,
    kSelfSimilarityFitness,
    kShannonEntropy,
    kSpectralComplexity,
    kTimbreVariability,
    kKolmogorovRedundancy,
    kAutocorrelationValue,
};

inline constexpr int kBasicFeatureCount = 10;

std::span<const std::string_view> basic_feature_names();

/// The ten per-track scalar features plus availability flags. Features whose
/// inputs are missing are flagged, never silently zeroed.
struct BasicFeatureVector {
    std::array<double, kBasicFeatureCount> values{};
    std::array<bool, kBasicFeatureCount> available{};
    bool degraded_stems = false;  // timbre features came from band-split pseudo-stems

    double& at(BasicFeature f) { return values[static_cast<int>(f)]; }
    double at(BasicFeature f) const { return values[static_cast<int>(f)]; }
    bool has(BasicFeature f) const { return available[static_cast<int>(f)]; }
    void set(BasicFeature f, double v) {
        values[static_cast<int>(f)] = v;
        available[static_cast<int>(f)] = true;
    }
};

/// Sigmoid outputs of the four heads, each in (0, 1).
struct AestheticFeatures {
    double harmony = 0.5;
    double symmetry = 0.5;
    double chaos = 0.5;
    double redundancy = 0.5;

    double operator[](int head) const;
};

inline constexpr int kHeadCount = 4;
std::span<const std::string_view> head_names();
/// Basic-feature indices feeding each head: harmony gets the four harmony
/// features, symmetry the fitness scalar, chaos the three chaos features,
/// redundancy the two redundancy features.
std::span<const int> head_feature_indices(int head);

struct LRHeadParams {
    std::vector<double> weights;  // one per feature in the head's group
    double bias = 0.0;
};

/// Quotient parameters: measure = (w1 H + w2 S + theta1) / (w3 C + w4 R + theta2),
/// with ordinal class thresholds tau1 < tau2 on the measure.
struct OCParams {
    double w1 = 1.0, w2 = 1.0, w3 = 1.0, w4 = 1.0;
    double theta1 = 0.0, theta2 = 1.0;
    double tau1 = 0.0, tau2 = 1.0;
};

inline constexpr double kDenominatorGuard = 1e-3;

/// Z-score statistics from the training split. Zero-variance features are
/// deactivated and normalize to 0.
struct FeatureNormalizer {
    std::array<double, kBasicFeatureCount> mean{};
    std::array<double, kBasicFeatureCount> stddev{};
    std::array<bool, kBasicFeatureCount> active{};

    double normalize(int index, double value) const;
};

struct FeatureConfig {
    int frame_size = 2048;
    int hop_size = 512;
    int n_mels = 40;
    int n_mfcc = 13;
    double timbre_alpha = 0.5;
    double chord_window_beats = 2.0;
    std::array<double, 12> interval_weights = default_interval_weights();
    double interval_bias = 0.0;
    ProgressionWeights progression{1 / 6.0, 1 / 6.0, 1 / 6.0, 1 / 6.0, 1 / 6.0, 1 / 6.0};
    double autocorr_seconds = 2.0;
};

/// Compute all ten features; anything whose preconditions fail is flagged
/// unavailable instead of raising.
BasicFeatureVector extract_basic_features(const AudioBuffer& audio, const MidiScore* midi,
                                          const StemSet* stems, const FeatureConfig& config = {});

/// Per head, sigmoid(w . z + b) over the head's normalized feature group.
/// Unavailable features are imputed at the training mean (z = 0).
AestheticFeatures aesthetic_features(const BasicFeatureVector& basic,
                                     const std::array<LRHeadParams, kHeadCount>& heads,
                                     const FeatureNormalizer& norm);

/// The order/complexity quotient. Raises NumericError when the denominator
/// magnitude falls under kDenominatorGuard.
double birkhoff_score(const AestheticFeatures& aes, const OCParams& params);

/// negative below tau1, medium in [tau1, tau2), positive above.
Label classify(double measure, const OCParams& params);

struct AestheticTrainConfig {
    double lr = 5e-5;
    int iterations = 1000;  // epochs of per-sample Adam updates
    std::uint64_t seed = 42;
    double test_fraction = 0.3;
    bool finetune_heads = false;  // stage 2 keeps heads frozen unless set
    /// Terms of the quotient to keep (ablation switches).
    bool use_harmony = true, use_symmetry = true, use_chaos = true, use_redundancy = true;
};

struct ClassificationMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    int test_count = 0;
};

struct AestheticModel {
    FeatureNormalizer normalizer;
    std::array<LRHeadParams, kHeadCount> heads;
    OCParams oc;
    std::uint64_t seed = 0;
    AestheticTrainConfig config;
};

struct AestheticTrainReport {
    ClassificationMetrics metrics;
    double initial_stage2_loss = 0.0;
    double final_stage2_loss = 0.0;
    int denominator_projections = 0;
    /// Held-out MSE of the measure against class targets {0, 0.5, 1}, raw
    /// and in natural-log scale.
    double measure_mse = 0.0;
    double log_measure_mse = 0.0;
};

using LabeledFeatures = std::vector<std::pair<BasicFeatureVector, Label>>;

/// Two-stage training: binary positive-vs-negative logistic heads first,
/// then ordinal 3-class cross-entropy over (measure, tau1, tau2) with the
/// heads frozen. Deterministic under the config seed.
std::pair<AestheticModel, AestheticTrainReport> train_aesthetic(const LabeledFeatures& data,
                                                                const AestheticTrainConfig& config);

/// Retrain with the named heads' terms removed from the quotient.
/// Dropping {H, S} or {C, R} together is a configuration error.
std::pair<AestheticModel, AestheticTrainReport> ablate(const LabeledFeatures& data,
                                                       const AestheticTrainConfig& config,
                                                       const std::set<std::string>& drop);

/// Stage-2 per-sample loss and analytic gradient, exposed so tests can
/// finite-difference them. Parameter order: w1 w2 w3 w4 theta1 theta2 tau1 tau2.
double stage2_loss(const AestheticFeatures& aes, Label label, const OCParams& params,
                   const AestheticTrainConfig& config, std::array<double, 8>* grad);

struct DistillConfig {
    double lr = 1e-2;
    int steps = 100;
    double lambda_rating = 1.0;
    FeatureConfig features;
};

struct AlignedTrack {
    AudioBuffer audio;
    MidiScore midi;
    Label label = Label::kMedium;
};

struct DistillReport {
    std::vector<double> loss_curve;  // steps + 1 entries, index 0 = initial
    std::array<double, kHeadCount> feature_mse_before{};
    std::array<double, kHeadCount> feature_mse_after{};
    double total_mse_before = 0.0;
    double total_mse_after = 0.0;
    int skipped_tracks = 0;
};

/// Appendix-style pseudo-feature distillation: transcribe audio, recompute
/// features from the pseudo score, and fit fresh head parameters so the
/// pseudo aesthetic features and rating match the aligned ground truth.
std::pair<std::array<LRHeadParams, kHeadCount>, DistillReport> distill_pseudo(
    const std::vector<AlignedTrack>& aligned, const AestheticModel& model,
    const Transcriber& transcriber, const DistillConfig& config);

}  // namespace ocmusic
