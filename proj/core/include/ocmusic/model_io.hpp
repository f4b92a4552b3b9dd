#pragma once

#include <iosfwd>
#include <string>

#include "ocmusic/aesthetic.hpp"
#include "ocmusic/recommender.hpp"

namespace ocmusic {

/// Versioned text formats. Numbers are written with max_digits10 precision so
/// a load/save round trip is bit-exact. Loading a file whose version line
/// differs raises UnsupportedFormatError naming both versions.
inline constexpr std::string_view kAestheticModelVersion = "ocmusic-aesthetic-model v1";
inline constexpr std::string_view kRecommenderModelVersion = "ocmusic-recommender-model v1";

void save_aesthetic_model(std::ostream& out, const AestheticModel& model);
AestheticModel load_aesthetic_model(std::istream& in);

/// Trained recommender bundled with its vocabulary and the per-item feature
/// table used to rebuild sessions from manifests.
struct RecommenderModel {
    RecTrainConfig config;
    Vocabulary vocab;
    RecommenderParams params;
    Eigen::MatrixXd item_music;  // V x music_dim, reserved rows zero
    Eigen::MatrixXd item_aes;    // V x 4
};

void save_recommender_model(std::ostream& out, const RecommenderModel& model);
RecommenderModel load_recommender_model(std::istream& in);

void save_aesthetic_model_file(const std::string& path, const AestheticModel& model);
AestheticModel load_aesthetic_model_file(const std::string& path);
void save_recommender_model_file(const std::string& path, const RecommenderModel& model);
RecommenderModel load_recommender_model_file(const std::string& path);

}  // namespace ocmusic
