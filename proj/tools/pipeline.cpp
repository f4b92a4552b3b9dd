#include "pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "ocmusic/errors.hpp"

namespace ocmusic::cli {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DecodeError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw DecodeError("failed writing '" + path + "'");
}

LoadedTrack load_track(const TrackEntry& entry) {
    LoadedTrack track;
    track.audio = decode_wav(read_file(entry.audio_path));
    if (entry.midi_path) track.midi = parse_midi(read_file(*entry.midi_path));
    if (!entry.stem_paths.empty()) {
        std::vector<AudioBuffer> stems;
        for (const auto& path : entry.stem_paths) stems.push_back(decode_wav(read_file(path)));
        track.stems = StemSet::from_stems(std::move(stems));
    }
    return track;
}

namespace {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
    for (std::uint8_t b : bytes) {
        hash ^= b;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::optional<std::string> cache_dir() {
    const char* dir = std::getenv("OCMUSIC_CACHE");
    if (!dir || !*dir) return std::nullopt;
    return std::string(dir);
}

std::string cache_key(const TrackEntry& entry, const FeatureConfig& config) {
    std::uint64_t hash = 14695981039346656037ull;
    const std::string salt = "ocmusic-features-v1 " + std::to_string(config.frame_size) + " " +
                             std::to_string(config.hop_size) + " " + std::to_string(config.n_mels);
    hash = fnv1a({reinterpret_cast<const std::uint8_t*>(salt.data()), salt.size()}, hash);
    hash = fnv1a(read_file(entry.audio_path), hash);
    if (entry.midi_path) hash = fnv1a(read_file(*entry.midi_path), hash);
    for (const auto& stem : entry.stem_paths) hash = fnv1a(read_file(stem), hash);
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::optional<BasicFeatureVector> cache_load(const std::string& dir, const std::string& key) {
    std::ifstream in(std::filesystem::path(dir) / (key + ".feat"));
    if (!in) return std::nullopt;
    BasicFeatureVector out;
    for (int f = 0; f < kBasicFeatureCount; ++f) {
        bool available;
        if (!(in >> out.values[f] >> available)) return std::nullopt;
        out.available[f] = available;
    }
    bool degraded;
    if (!(in >> degraded)) return std::nullopt;
    out.degraded_stems = degraded;
    return out;
}

void cache_store(const std::string& dir, const std::string& key, const BasicFeatureVector& v) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ostringstream out;
    out.precision(17);
    for (int f = 0; f < kBasicFeatureCount; ++f)
        out << v.values[f] << " " << v.available[f] << "\n";
    out << v.degraded_stems << "\n";
    std::ofstream file(std::filesystem::path(dir) / (key + ".feat"));
    file << out.str();
}

}  // namespace

BasicFeatureVector track_features(const TrackEntry& entry, const FeatureConfig& config) {
    const auto dir = cache_dir();
    std::string key;
    if (dir) {
        key = cache_key(entry, config);
        if (auto cached = cache_load(*dir, key)) return *cached;
    }
    const auto track = load_track(entry);
    const auto features =
        extract_basic_features(track.audio, track.midi ? &*track.midi : nullptr,
                               track.stems ? &*track.stems : nullptr, config);
    if (dir) cache_store(*dir, key, features);
    return features;
}

std::vector<TrackFeatureResult> manifest_features(const DatasetManifest& manifest,
                                                  const FeatureConfig& config, int threads) {
    std::vector<TrackFeatureResult> results(manifest.tracks.size());
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < manifest.tracks.size(); i += stride) {
            results[i].id = manifest.tracks[i].id;
            try {
                results[i].features = track_features(manifest.tracks[i], config);
            } catch (const std::exception& e) {
                results[i].error = e.what();
            }
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& t : pool) t.join();
    }
    return results;
}

ItemVectors item_vectors(const BasicFeatureVector& basic, const AestheticModel& model) {
    ItemVectors out;
    out.music.resize(kBasicFeatureCount);
    for (int f = 0; f < kBasicFeatureCount; ++f)
        out.music(f) = basic.available[f] ? model.normalizer.normalize(f, basic.values[f]) : 0.0;
    const auto aes = aesthetic_features(basic, model.heads, model.normalizer);
    out.aesthetic.resize(4);
    for (int h = 0; h < 4; ++h) out.aesthetic(h) = aes[h];
    return out;
}

std::vector<SessionData> manifest_sessions(const DatasetManifest& manifest,
                                           const Vocabulary& vocab,
                                           const Eigen::MatrixXd& item_music,
                                           const Eigen::MatrixXd& item_aes) {
    std::vector<SessionData> sessions;
    for (const auto& entry : manifest.sessions) {
        SessionData session;
        for (const auto& id : entry.track_ids) {
            const int idx = vocab.require(id);
            session.items.push_back(idx);
            session.music.push_back(item_music.row(idx).transpose());
            session.aesthetic.push_back(item_aes.row(idx).transpose());
        }
        sessions.push_back(std::move(session));
    }
    return sessions;
}

}  // namespace ocmusic::cli
