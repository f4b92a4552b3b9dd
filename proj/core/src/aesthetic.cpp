#include "ocmusic/aesthetic.hpp"

#include <algorithm>
#include <cmath>

#include "ocmusic/complexity.hpp"
#include "ocmusic/dsp.hpp"
#include "ocmusic/errors.hpp"
#include "ocmusic/optim.hpp"
#include "ocmusic/symmetry.hpp"

namespace ocmusic {

namespace {

constexpr std::array<std::string_view, kBasicFeatureCount> kFeatureNames = {
    "timbre_harmony",   "interval_harmony",  "chord_progression_harmony",
    "dynamic_harmony",  "self_similarity_fitness", "shannon_entropy",
    "spectral_complexity", "timbre_variability", "kolmogorov_redundancy",
    "autocorrelation_value"};

constexpr std::array<std::string_view, kHeadCount> kHeadNames = {"harmony", "symmetry", "chaos",
                                                                 "redundancy"};

constexpr std::array<int, 4> kHarmonyGroup = {0, 1, 2, 3};
constexpr std::array<int, 1> kSymmetryGroup = {4};
constexpr std::array<int, 3> kChaosGroup = {5, 6, 7};
constexpr std::array<int, 2> kRedundancyGroup = {8, 9};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int largest_pow2_leq(int n) {
    int p = 1;
    while (p * 2 <= n) p *= 2;
    return p;
}

}  // namespace

std::span<const std::string_view> basic_feature_names() { return kFeatureNames; }
std::span<const std::string_view> head_names() { return kHeadNames; }

std::span<const int> head_feature_indices(int head) {
    switch (head) {
        case 0: return kHarmonyGroup;
        case 1: return kSymmetryGroup;
        case 2: return kChaosGroup;
        case 3: return kRedundancyGroup;
        default: throw ConfigError("head index must be 0..3");
    }
}

double AestheticFeatures::operator[](int head) const {
    switch (head) {
        case 0: return harmony;
        case 1: return symmetry;
        case 2: return chaos;
        case 3: return redundancy;
        default: throw ConfigError("head index must be 0..3");
    }
}

double FeatureNormalizer::normalize(int index, double value) const {
    if (!active[index]) return 0.0;
    return (value - mean[index]) / stddev[index];
}

BasicFeatureVector extract_basic_features(const AudioBuffer& audio, const MidiScore* midi,
                                          const StemSet* stems, const FeatureConfig& config) {
    BasicFeatureVector out;
    const int len = static_cast<int>(audio.samples.size());
    const int frame = std::min(config.frame_size, largest_pow2_leq(std::max(len, 1)));
    const int hop = std::max(1, frame * config.hop_size / std::max(config.frame_size, 1));

    // each feature degrades to "unavailable" when its preconditions fail
    auto guard = [&](BasicFeature f, auto&& fn) {
        try {
            out.set(f, fn());
        } catch (const UndefinedFeatureError&) {
        } catch (const ConfigError&) {
        }
    };

    std::optional<Spectrogram> spec;
    if (len >= frame && frame >= 64) spec = stft(audio, frame, hop);

    guard(BasicFeature::kTimbreHarmony, [&] {
        StemSet pseudo;
        const StemSet* used = stems;
        if (!used) {
            if (len < 64) throw UndefinedFeatureError("audio too short for pseudo-stems");
            pseudo = StemSet::pseudo_from_mix(audio);
            used = &pseudo;
            out.degraded_stems = true;
        }
        const double balance = timbre_balance(*used, default_band_edges());
        const auto comp = timbre_complementarity(*used);
        return timbre_harmony(balance, comp.value, config.timbre_alpha);
    });

    if (midi) {
        guard(BasicFeature::kIntervalHarmony,
              [&] { return interval_harmony(*midi, config.interval_weights, config.interval_bias); });
        guard(BasicFeature::kChordProgressionHarmony, [&] {
            const auto chords = extract_chords(*midi, config.chord_window_beats);
            return chord_progression_harmony(chords, config.progression);
        });
        guard(BasicFeature::kDynamicHarmony,
              [&] { return dynamic_harmony(*midi, metrical_grid(*midi)); });
        guard(BasicFeature::kShannonEntropy,
              [&] { return shannon_entropy(pitch_class_histogram(*midi)); });
    }

    if (spec) {
        guard(BasicFeature::kSelfSimilarityFitness,
              [&] { return symmetry_feature(build_ssm(chroma(*spec))); });
        guard(BasicFeature::kSpectralComplexity, [&] { return spectral_complexity(*spec); });

        const int n_mels = std::min(config.n_mels, spec->bins());
        if (n_mels >= 4) {
            const auto mel = mel_spectrogram(*spec, n_mels);
            guard(BasicFeature::kTimbreVariability, [&] {
                const auto coeffs = mfcc(mel, std::min(config.n_mfcc, n_mels));
                const int frames = static_cast<int>(coeffs.coeffs.cols());
                NoteSegmentation seg;
                if (midi && !midi->notes.empty()) {
                    for (const auto& n : midi->notes) {
                        const int first = std::clamp(
                            static_cast<int>(n.onset * audio.sample_rate / hop), 0, frames - 1);
                        const int last = std::clamp(
                            static_cast<int>((n.onset + n.duration) * audio.sample_rate / hop),
                            first, frames - 1);
                        seg.push_back({first, last, static_cast<double>(last - first + 1)});
                    }
                } else {
                    auto onsets = onset_frames(audio, frame, hop);
                    onsets.erase(std::remove_if(onsets.begin(), onsets.end(),
                                                [&](int f) { return f >= frames; }),
                                 onsets.end());
                    if (onsets.empty() || onsets.front() != 0) onsets.insert(onsets.begin(), 0);
                    for (std::size_t i = 0; i < onsets.size(); ++i) {
                        const int first = onsets[i];
                        const int last = i + 1 < onsets.size() ? onsets[i + 1] - 1 : frames - 1;
                        if (last >= first)
                            seg.push_back({first, last, static_cast<double>(last - first + 1)});
                    }
                }
                return timbre_variability(coeffs, seg);
            });
            guard(BasicFeature::kKolmogorovRedundancy, [&] {
                const auto payload = mel_payload(mel);
                return kolmogorov_redundancy(payload);
            });
        }
    }

    guard(BasicFeature::kAutocorrelationValue, [&] {
        const int max_lag =
            std::min(static_cast<int>(config.autocorr_seconds * audio.sample_rate), len / 2);
        if (max_lag < 1) throw UndefinedFeatureError("audio too short for autocorrelation");
        return autocorrelation_value(audio, max_lag);
    });

    return out;
}

namespace {

double head_output(int head, const BasicFeatureVector& basic, const LRHeadParams& params,
                   const FeatureNormalizer& norm) {
    const auto group = head_feature_indices(head);
    if (params.weights.size() != group.size())
        throw ConfigError("head weight count does not match its feature group");
    double z = params.bias;
    for (std::size_t j = 0; j < group.size(); ++j) {
        const int idx = group[j];
        const double value = basic.available[idx] ? norm.normalize(idx, basic.values[idx]) : 0.0;
        z += params.weights[j] * value;
    }
    return sigmoid(z);
}

}  // namespace

AestheticFeatures aesthetic_features(const BasicFeatureVector& basic,
                                     const std::array<LRHeadParams, kHeadCount>& heads,
                                     const FeatureNormalizer& norm) {
    AestheticFeatures out;
    out.harmony = head_output(0, basic, heads[0], norm);
    out.symmetry = head_output(1, basic, heads[1], norm);
    out.chaos = head_output(2, basic, heads[2], norm);
    out.redundancy = head_output(3, basic, heads[3], norm);
    return out;
}

namespace {

double numerator(const AestheticFeatures& aes, const OCParams& p, const AestheticTrainConfig& c) {
    return (c.use_harmony ? p.w1 * aes.harmony : 0.0) + (c.use_symmetry ? p.w2 * aes.symmetry : 0.0) +
           p.theta1;
}

double denominator(const AestheticFeatures& aes, const OCParams& p, const AestheticTrainConfig& c) {
    return (c.use_chaos ? p.w3 * aes.chaos : 0.0) + (c.use_redundancy ? p.w4 * aes.redundancy : 0.0) +
           p.theta2;
}

double measure_with(const AestheticFeatures& aes, const OCParams& p,
                    const AestheticTrainConfig& c) {
    double den = denominator(aes, p, c);
    if (std::abs(den) < kDenominatorGuard)
        den = den < 0.0 ? -kDenominatorGuard : kDenominatorGuard;
    return numerator(aes, p, c) / den;
}

}  // namespace

double birkhoff_score(const AestheticFeatures& aes, const OCParams& params) {
    const AestheticTrainConfig all;
    const double den = denominator(aes, params, all);
    if (std::abs(den) < kDenominatorGuard)
        throw NumericError("birkhoff measure: denominator magnitude under " +
                           std::to_string(kDenominatorGuard));
    return numerator(aes, params, all) / den;
}

Label classify(double measure, const OCParams& params) {
    if (!std::isfinite(measure)) throw NumericError("classify: non-finite measure");
    if (measure < params.tau1) return Label::kNegative;
    if (measure < params.tau2) return Label::kMedium;
    return Label::kPositive;
}

double stage2_loss(const AestheticFeatures& aes, Label label, const OCParams& params,
                   const AestheticTrainConfig& config, std::array<double, 8>* grad) {
    double den = denominator(aes, params, config);
    const bool clamped = std::abs(den) < kDenominatorGuard;
    if (clamped) den = den < 0.0 ? -kDenominatorGuard : kDenominatorGuard;
    const double num = numerator(aes, params, config);
    const double m = num / den;

    const double s1 = sigmoid(params.tau1 - m);
    const double s2 = sigmoid(params.tau2 - m);
    constexpr double kFloor = 1e-12;

    double loss, dl_dm, dl_dtau1 = 0.0, dl_dtau2 = 0.0;
    switch (label) {
        case Label::kNegative: {
            loss = -std::log(std::max(s1, kFloor));
            dl_dtau1 = -(1.0 - s1);
            dl_dm = 1.0 - s1;
            break;
        }
        case Label::kPositive: {
            loss = -std::log(std::max(1.0 - s2, kFloor));
            dl_dtau2 = s2;
            dl_dm = -s2;
            break;
        }
        case Label::kMedium:
        default: {
            const double p = std::max(s2 - s1, kFloor);
            loss = -std::log(p);
            dl_dtau2 = -s2 * (1.0 - s2) / p;
            dl_dtau1 = s1 * (1.0 - s1) / p;
            dl_dm = (s2 * (1.0 - s2) - s1 * (1.0 - s1)) / p;
            break;
        }
    }

    if (grad) {
        const double inv_den = 1.0 / den;
        // numerator parameters
        (*grad)[0] = config.use_harmony ? dl_dm * aes.harmony * inv_den : 0.0;
        (*grad)[1] = config.use_symmetry ? dl_dm * aes.symmetry * inv_den : 0.0;
        (*grad)[4] = dl_dm * inv_den;
        // denominator parameters: zero once the guard clamps them
        const double dm_dden = clamped ? 0.0 : -m * inv_den;
        (*grad)[2] = config.use_chaos ? dl_dm * aes.chaos * dm_dden : 0.0;
        (*grad)[3] = config.use_redundancy ? dl_dm * aes.redundancy * dm_dden : 0.0;
        (*grad)[5] = dl_dm * dm_dden;
        (*grad)[6] = dl_dtau1;
        (*grad)[7] = dl_dtau2;
    }
    return loss;
}

namespace {

struct SplitIndices {
    std::vector<std::size_t> train, test;
};

SplitIndices stratified_split(const LabeledFeatures& data, double test_fraction, Rng& rng) {
    std::map<Label, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) by_label[data[i].second].push_back(i);

    SplitIndices split;
    for (auto& [label, indices] : by_label) {
        rng.shuffle(indices);
        auto n_train = static_cast<std::size_t>(
            std::lround(static_cast<double>(indices.size()) * (1.0 - test_fraction)));
        n_train = std::clamp<std::size_t>(n_train, 1, indices.size());
        if (n_train == indices.size() && indices.size() > 1) --n_train;
        for (std::size_t k = 0; k < indices.size(); ++k)
            (k < n_train ? split.train : split.test).push_back(indices[k]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

FeatureNormalizer fit_normalizer(const LabeledFeatures& data, const std::vector<std::size_t>& train) {
    FeatureNormalizer norm;
    for (int f = 0; f < kBasicFeatureCount; ++f) {
        double sum = 0.0, count = 0.0;
        for (auto i : train) {
            if (!data[i].first.available[f]) continue;
            sum += data[i].first.values[f];
            count += 1.0;
        }
        if (count < 1.0) {
            norm.active[f] = false;
            norm.stddev[f] = 1.0;
            continue;
        }
        norm.mean[f] = sum / count;
        double sq = 0.0;
        for (auto i : train) {
            if (!data[i].first.available[f]) continue;
            const double d = data[i].first.values[f] - norm.mean[f];
            sq += d * d;
        }
        const double stddev = std::sqrt(sq / count);
        if (stddev < 1e-12) {
            norm.active[f] = false;  // zero variance carries no signal
            norm.stddev[f] = 1.0;
        } else {
            norm.active[f] = true;
            norm.stddev[f] = stddev;
        }
    }
    return norm;
}

std::vector<double> group_z(const BasicFeatureVector& basic, const FeatureNormalizer& norm,
                            int head) {
    const auto group = head_feature_indices(head);
    std::vector<double> z(group.size());
    for (std::size_t j = 0; j < group.size(); ++j) {
        const int idx = group[j];
        z[j] = basic.available[idx] ? norm.normalize(idx, basic.values[idx]) : 0.0;
    }
    return z;
}

// Binary logistic head trained positive-vs-negative with per-sample Adam
// updates; `iterations` epochs over a seeded shuffle.
LRHeadParams train_head(int head, const LabeledFeatures& data,
                        const std::vector<std::size_t>& train, const FeatureNormalizer& norm,
                        const AestheticTrainConfig& config, Rng& rng) {
    Label lo = Label::kPositive, hi = Label::kNegative;
    for (auto i : train) {
        lo = std::min(lo, data[i].second);
        hi = std::max(hi, data[i].second);
    }
    std::vector<std::size_t> binary;
    for (auto i : train)
        if (data[i].second == lo || data[i].second == hi) binary.push_back(i);

    const auto group = head_feature_indices(head);
    LRHeadParams params;
    params.weights.assign(group.size(), 0.0);

    std::vector<double> flat(group.size() + 1, 0.0);
    std::vector<double> grad(group.size() + 1, 0.0);
    AdamOptimizer adam({.lr = config.lr});
    for (int epoch = 0; epoch < config.iterations; ++epoch) {
        rng.shuffle(binary);
        for (auto i : binary) {
            const auto z = group_z(data[i].first, norm, head);
            double logit = flat.back();
            for (std::size_t j = 0; j < z.size(); ++j) logit += flat[j] * z[j];
            const double p = sigmoid(logit);
            const double y = data[i].second == hi ? 1.0 : 0.0;
            const double g = p - y;
            for (std::size_t j = 0; j < z.size(); ++j) grad[j] = g * z[j];
            grad.back() = g;
            adam.step(flat, grad);
        }
    }
    params.weights.assign(flat.begin(), flat.end() - 1);
    params.bias = flat.back();
    return params;
}

ClassificationMetrics evaluate_classifier(const LabeledFeatures& data,
                                          const std::vector<std::size_t>& test,
                                          const AestheticModel& model,
                                          const AestheticTrainConfig& config, double* mse_out) {
    ClassificationMetrics metrics;
    metrics.test_count = static_cast<int>(test.size());
    std::map<Label, std::array<int, 3>> counts;  // tp, fp, fn
    int correct = 0;
    double mse = 0.0;
    for (auto i : test) {
        const auto aes = aesthetic_features(data[i].first, model.heads, model.normalizer);
        const double m = measure_with(aes, model.oc, config);
        const Label predicted = classify(m, model.oc);
        const Label truth = data[i].second;
        if (predicted == truth) {
            ++correct;
            counts[truth][0]++;
        } else {
            counts[predicted][1]++;
            counts[truth][2]++;
        }
        const double target = truth == Label::kNegative ? 0.0
                              : truth == Label::kMedium ? 0.5
                                                        : 1.0;
        mse += (m - target) * (m - target);
    }
    if (!test.empty()) {
        metrics.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
        double f1_sum = 0.0;
        for (Label label : {Label::kNegative, Label::kMedium, Label::kPositive}) {
            const auto& c = counts[label];
            const double precision = c[0] + c[1] > 0 ? static_cast<double>(c[0]) / (c[0] + c[1]) : 0.0;
            const double recall = c[0] + c[2] > 0 ? static_cast<double>(c[0]) / (c[0] + c[2]) : 0.0;
            f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        }
        metrics.macro_f1 = f1_sum / 3.0;
        if (mse_out) *mse_out = mse / static_cast<double>(test.size());
    }
    return metrics;
}

}  // namespace

std::pair<AestheticModel, AestheticTrainReport> train_aesthetic(const LabeledFeatures& data,
                                                                const AestheticTrainConfig& config) {
    if (!config.use_harmony && !config.use_symmetry)
        throw ConfigError("training: every numerator term dropped");
    if (!config.use_chaos && !config.use_redundancy)
        throw ConfigError("training: every denominator term dropped");
    std::set<Label> classes;
    for (const auto& [features, label] : data) classes.insert(label);
    if (classes.size() < 2) throw ConfigError("training: needs at least 2 classes");

    Rng rng(config.seed);
    const auto split = stratified_split(data, config.test_fraction, rng);

    AestheticModel model;
    model.seed = config.seed;
    model.config = config;
    model.normalizer = fit_normalizer(data, split.train);
    for (int head = 0; head < kHeadCount; ++head)
        model.heads[head] = train_head(head, data, split.train, model.normalizer, config, rng);

    // stage 2: ordinal thresholds and quotient parameters, heads frozen
    // (finetune_heads backpropagates into them as well)
    std::vector<AestheticFeatures> train_aes;
    std::vector<Label> train_labels;
    for (auto i : split.train) {
        train_aes.push_back(aesthetic_features(data[i].first, model.heads, model.normalizer));
        train_labels.push_back(data[i].second);
    }

    std::vector<double> measures;
    for (const auto& aes : train_aes) measures.push_back(measure_with(aes, model.oc, config));
    std::sort(measures.begin(), measures.end());
    model.oc.tau1 = measures[measures.size() / 3];
    model.oc.tau2 = measures[2 * measures.size() / 3];
    if (model.oc.tau2 <= model.oc.tau1) model.oc.tau2 = model.oc.tau1 + 1e-3;

    const std::size_t head_param_count = [&] {
        std::size_t n = 0;
        for (int head = 0; head < kHeadCount; ++head)
            n += model.heads[head].weights.size() + 1;
        return n;
    }();
    const std::size_t total = config.finetune_heads ? 8 + head_param_count : 8;

    auto pack = [&](std::vector<double>& flat) {
        flat[0] = model.oc.w1;
        flat[1] = model.oc.w2;
        flat[2] = model.oc.w3;
        flat[3] = model.oc.w4;
        flat[4] = model.oc.theta1;
        flat[5] = model.oc.theta2;
        flat[6] = model.oc.tau1;
        flat[7] = model.oc.tau2;
        if (config.finetune_heads) {
            std::size_t at = 8;
            for (int head = 0; head < kHeadCount; ++head) {
                for (double w : model.heads[head].weights) flat[at++] = w;
                flat[at++] = model.heads[head].bias;
            }
        }
    };
    auto unpack = [&](const std::vector<double>& flat) {
        model.oc.w1 = flat[0];
        model.oc.w2 = flat[1];
        model.oc.w3 = flat[2];
        model.oc.w4 = flat[3];
        model.oc.theta1 = flat[4];
        model.oc.theta2 = flat[5];
        model.oc.tau1 = flat[6];
        model.oc.tau2 = flat[7];
        if (config.finetune_heads) {
            std::size_t at = 8;
            for (int head = 0; head < kHeadCount; ++head) {
                for (double& w : model.heads[head].weights) w = flat[at++];
                model.heads[head].bias = flat[at++];
            }
        }
    };

    AestheticTrainReport report;
    std::vector<double> flat(total, 0.0), grad(total, 0.0);
    pack(flat);
    AdamOptimizer adam({.lr = config.lr});
    std::vector<std::size_t> order(split.train.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

    auto epoch_loss = [&]() {
        double acc = 0.0;
        for (std::size_t k = 0; k < train_aes.size(); ++k)
            acc += stage2_loss(train_aes[k], train_labels[k], model.oc, config, nullptr);
        return acc / static_cast<double>(train_aes.size());
    };
    report.initial_stage2_loss = epoch_loss();

    for (int epoch = 0; epoch < config.iterations; ++epoch) {
        rng.shuffle(order);
        for (auto k : order) {
            if (config.finetune_heads)
                train_aes[k] =
                    aesthetic_features(data[split.train[k]].first, model.heads, model.normalizer);
            std::array<double, 8> g{};
            stage2_loss(train_aes[k], train_labels[k], model.oc, config, &g);
            std::fill(grad.begin(), grad.end(), 0.0);
            std::copy(g.begin(), g.end(), grad.begin());
            if (config.finetune_heads) {
                const auto& aes = train_aes[k];
                double den = denominator(aes, model.oc, config);
                if (std::abs(den) < kDenominatorGuard)
                    den = den < 0.0 ? -kDenominatorGuard : kDenominatorGuard;
                const double dl_dm = g[4] * den;  // g[4] is dl_dm / den
                const double m = measure_with(aes, model.oc, config);
                const std::array<double, 4> dm_daes = {
                    config.use_harmony ? model.oc.w1 / den : 0.0,
                    config.use_symmetry ? model.oc.w2 / den : 0.0,
                    config.use_chaos ? -model.oc.w3 * m / den : 0.0,
                    config.use_redundancy ? -model.oc.w4 * m / den : 0.0};
                std::size_t at = 8;
                for (int head = 0; head < kHeadCount; ++head) {
                    const double p = aes[head];
                    const double dp = dl_dm * dm_daes[head] * p * (1.0 - p);
                    const auto z = group_z(data[split.train[k]].first, model.normalizer, head);
                    for (double zj : z) grad[at++] = dp * zj;
                    grad[at++] = dp;
                }
            }
            adam.step(flat, grad);
            if (flat[7] <= flat[6] + 1e-6) flat[7] = flat[6] + 1e-6;  // keep tau1 < tau2
            unpack(flat);
        }
        // denominator guard: shift theta2 so every training point stays clear
        double min_den = std::numeric_limits<double>::infinity();
        for (const auto& aes : train_aes)
            min_den = std::min(min_den, denominator(aes, model.oc, config));
        if (min_den < kDenominatorGuard) {
            model.oc.theta2 += kDenominatorGuard - min_den;
            pack(flat);
            ++report.denominator_projections;
        }
    }
    report.final_stage2_loss = epoch_loss();

    double mse = 0.0;
    report.metrics = evaluate_classifier(data, split.test, model, config, &mse);
    report.measure_mse = mse;
    report.log_measure_mse = mse > 0.0 ? std::log(mse) : -std::numeric_limits<double>::infinity();
    return {model, report};
}

std::pair<AestheticModel, AestheticTrainReport> ablate(const LabeledFeatures& data,
                                                       const AestheticTrainConfig& config,
                                                       const std::set<std::string>& drop) {
    AestheticTrainConfig ablated = config;
    for (const auto& name : drop) {
        if (name == "harmony" || name == "H")
            ablated.use_harmony = false;
        else if (name == "symmetry" || name == "S")
            ablated.use_symmetry = false;
        else if (name == "chaos" || name == "C")
            ablated.use_chaos = false;
        else if (name == "redundancy" || name == "R")
            ablated.use_redundancy = false;
        else
            throw ConfigError("ablate: unknown head '" + name + "'");
    }
    return train_aesthetic(data, ablated);
}

std::pair<std::array<LRHeadParams, kHeadCount>, DistillReport> distill_pseudo(
    const std::vector<AlignedTrack>& aligned, const AestheticModel& model,
    const Transcriber& transcriber, const DistillConfig& config) {
    struct TrackState {
        AestheticFeatures gt_aes;
        double gt_measure;
        BasicFeatureVector pseudo_basic;
    };
    std::vector<TrackState> tracks;
    DistillReport report;

    const AestheticTrainConfig& terms = model.config;
    for (const auto& track : aligned) {
        MidiScore pseudo;
        try {
            pseudo = transcriber(track.audio);
        } catch (const std::exception&) {
            ++report.skipped_tracks;
            continue;
        }
        TrackState state;
        const auto gt_basic =
            extract_basic_features(track.audio, &track.midi, nullptr, config.features);
        state.gt_aes = aesthetic_features(gt_basic, model.heads, model.normalizer);
        state.gt_measure = measure_with(state.gt_aes, model.oc, terms);
        state.pseudo_basic = extract_basic_features(track.audio, &pseudo, nullptr, config.features);
        tracks.push_back(std::move(state));
    }
    if (tracks.empty()) throw ConfigError("distill: no transcribable tracks");

    auto heads = model.heads;  // pseudo-pipeline parameters start at the trained heads
    std::vector<double> flat, grad;
    for (const auto& head : heads) {
        flat.insert(flat.end(), head.weights.begin(), head.weights.end());
        flat.push_back(head.bias);
    }
    grad.assign(flat.size(), 0.0);

    auto unpack = [&]() {
        std::size_t at = 0;
        for (auto& head : heads) {
            for (double& w : head.weights) w = flat[at++];
            head.bias = flat[at++];
        }
    };

    auto feature_mse = [&](std::array<double, kHeadCount>& per_head) {
        per_head.fill(0.0);
        double total = 0.0;
        for (const auto& track : tracks) {
            const auto aes = aesthetic_features(track.pseudo_basic, heads, model.normalizer);
            for (int h = 0; h < kHeadCount; ++h) {
                const double e = aes[h] - track.gt_aes[h];
                per_head[h] += e * e;
                total += e * e;
            }
        }
        for (auto& v : per_head) v /= static_cast<double>(tracks.size());
        return total / static_cast<double>(tracks.size());
    };

    auto batch_loss = [&](std::vector<double>* grad_out) {
        if (grad_out) std::fill(grad_out->begin(), grad_out->end(), 0.0);
        double loss = 0.0;
        for (const auto& track : tracks) {
            const auto aes = aesthetic_features(track.pseudo_basic, heads, model.normalizer);
            double den = denominator(aes, model.oc, terms);
            if (std::abs(den) < kDenominatorGuard)
                den = den < 0.0 ? -kDenominatorGuard : kDenominatorGuard;
            const double m = numerator(aes, model.oc, terms) / den;
            const double rating_err = m - track.gt_measure;
            const std::array<double, 4> dm_daes = {
                terms.use_harmony ? model.oc.w1 / den : 0.0,
                terms.use_symmetry ? model.oc.w2 / den : 0.0,
                terms.use_chaos ? -model.oc.w3 * m / den : 0.0,
                terms.use_redundancy ? -model.oc.w4 * m / den : 0.0};
            std::size_t at = 0;
            for (int h = 0; h < kHeadCount; ++h) {
                const double e = aes[h] - track.gt_aes[h];
                loss += e * e;
                const std::size_t head_size = heads[h].weights.size() + 1;
                if (grad_out) {
                    const double dl_dp =
                        2.0 * e + 2.0 * config.lambda_rating * rating_err * dm_daes[h];
                    const double dp = dl_dp * aes[h] * (1.0 - aes[h]);
                    const auto z = group_z(track.pseudo_basic, model.normalizer, h);
                    for (std::size_t j = 0; j < z.size(); ++j) (*grad_out)[at + j] += dp * z[j];
                    (*grad_out)[at + head_size - 1] += dp;
                }
                at += head_size;
            }
            loss += config.lambda_rating * rating_err * rating_err;
        }
        if (grad_out)
            for (auto& g : *grad_out) g /= static_cast<double>(tracks.size());
        return loss / static_cast<double>(tracks.size());
    };

    report.total_mse_before = feature_mse(report.feature_mse_before);
    AdamOptimizer adam({.lr = config.lr});
    report.loss_curve.push_back(batch_loss(nullptr));
    for (int step = 0; step < config.steps; ++step) {
        batch_loss(&grad);
        adam.step(flat, grad);
        unpack();
        report.loss_curve.push_back(batch_loss(nullptr));
    }
    report.total_mse_after = feature_mse(report.feature_mse_after);
    return {heads, report};
}

}  // namespace ocmusic
