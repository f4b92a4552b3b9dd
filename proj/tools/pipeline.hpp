#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ocmusic/aesthetic.hpp"
#include "ocmusic/manifest.hpp"
#include "ocmusic/model_io.hpp"

namespace ocmusic::cli {

/// Format a double compactly but deterministically.
std::string fmt(double v);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

struct LoadedTrack {
    AudioBuffer audio;
    std::optional<MidiScore> midi;
    std::optional<StemSet> stems;
};

LoadedTrack load_track(const TrackEntry& entry);

/// Extract the ten features for one manifest entry, honoring the
/// OCMUSIC_CACHE directory when set.
BasicFeatureVector track_features(const TrackEntry& entry, const FeatureConfig& config);

/// Extract features for every track, optionally across threads; result order
/// matches the manifest. Failed tracks carry an error message instead.
struct TrackFeatureResult {
    std::string id;
    BasicFeatureVector features;
    std::string error;  // empty on success
};
std::vector<TrackFeatureResult> manifest_features(const DatasetManifest& manifest,
                                                  const FeatureConfig& config, int threads);

/// Per-item inputs for the recommender: z-scored basic features and the four
/// aesthetic head outputs under a trained model.
struct ItemVectors {
    Eigen::VectorXd music;  // 10-dim, unavailable features at 0
    Eigen::VectorXd aesthetic;
};
ItemVectors item_vectors(const BasicFeatureVector& basic, const AestheticModel& model);

/// Assemble SessionData for every manifest session from a vocabulary plus
/// per-item feature tables.
std::vector<SessionData> manifest_sessions(const DatasetManifest& manifest,
                                           const Vocabulary& vocab,
                                           const Eigen::MatrixXd& item_music,
                                           const Eigen::MatrixXd& item_aes);

}  // namespace ocmusic::cli
