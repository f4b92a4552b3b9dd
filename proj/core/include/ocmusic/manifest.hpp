#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ocmusic {

enum class Label { kNegative, kMedium, kPositive };

std::string to_string(Label label);
std::optional<Label> label_from_string(std::string_view s);

struct TrackEntry {
    std::string id;
    std::string audio_path;
    std::optional<std::string> midi_path;
    std::vector<std::string> stem_paths;
    Label label = Label::kMedium;
};

struct SessionEntry {
    std::string user_id;
    std::vector<std::string> track_ids;  // listening order
};

/// Parsed dataset manifest. Paths are carried verbatim and opened lazily by
/// whoever consumes them.
struct DatasetManifest {
    std::vector<TrackEntry> tracks;
    std::vector<SessionEntry> sessions;

    std::map<Label, int> class_counts() const;
    const TrackEntry* find_track(std::string_view id) const;
};

/// Parse the line-oriented manifest format:
///   track <id> audio=<path> [midi=<path>] [stems=<p1,p2,..>] label=<negative|medium|positive>
///   session <user-id> <track-id,track-id,...>
/// `#` starts a comment. Duplicate ids, unknown labels, and sessions shorter
/// than 2 raise ValidationError carrying the offending line number.
DatasetManifest load_manifest(std::string_view text);

}  // namespace ocmusic
