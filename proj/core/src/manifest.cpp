#include "ocmusic/manifest.hpp"

#include <set>
#include <sstream>

#include "ocmusic/errors.hpp"

namespace ocmusic {

std::string to_string(Label label) {
    switch (label) {
        case Label::kNegative: return "negative";
        case Label::kMedium: return "medium";
        case Label::kPositive: return "positive";
    }
    return "?";
}

std::optional<Label> label_from_string(std::string_view s) {
    if (s == "negative") return Label::kNegative;
    if (s == "medium") return Label::kMedium;
    if (s == "positive") return Label::kPositive;
    return std::nullopt;
}

std::map<Label, int> DatasetManifest::class_counts() const {
    std::map<Label, int> counts;
    for (const auto& t : tracks) counts[t.label]++;
    return counts;
}

const TrackEntry* DatasetManifest::find_track(std::string_view id) const {
    for (const auto& t : tracks)
        if (t.id == id) return &t;
    return nullptr;
}

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(sep, start);
        if (end == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view line) {
    std::vector<std::string> tokens;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

}  // namespace

DatasetManifest load_manifest(std::string_view text) {
    DatasetManifest manifest;
    std::set<std::string> seen_ids;

    int line_no = 0;
    for (const auto& raw_line : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw_line;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto tokens = tokenize(line);
        if (tokens.empty()) continue;

        if (tokens[0] == "track") {
            if (tokens.size() < 2) throw ValidationError(line_no, "track record missing id");
            TrackEntry track;
            track.id = tokens[1];
            if (!seen_ids.insert(track.id).second)
                throw ValidationError(line_no, "duplicate track id '" + track.id + "'");
            bool have_audio = false, have_label = false;
            for (std::size_t i = 2; i < tokens.size(); ++i) {
                const std::string& tok = tokens[i];
                auto eq = tok.find('=');
                if (eq == std::string::npos)
                    throw ValidationError(line_no, "expected key=value, got '" + tok + "'");
                std::string key = tok.substr(0, eq);
                std::string value = tok.substr(eq + 1);
                if (value.empty()) throw ValidationError(line_no, "empty value for '" + key + "'");
                if (key == "audio") {
                    track.audio_path = value;
                    have_audio = true;
                } else if (key == "midi") {
                    track.midi_path = value;
                } else if (key == "stems") {
                    track.stem_paths = split(value, ',');
                } else if (key == "label") {
                    auto label = label_from_string(value);
                    if (!label) throw ValidationError(line_no, "unknown label '" + value + "'");
                    track.label = *label;
                    have_label = true;
                } else {
                    throw ValidationError(line_no, "unknown key '" + key + "'");
                }
            }
            if (!have_audio) throw ValidationError(line_no, "track record missing audio=");
            if (!have_label) throw ValidationError(line_no, "track record missing label=");
            manifest.tracks.push_back(std::move(track));
        } else if (tokens[0] == "session") {
            if (tokens.size() != 3)
                throw ValidationError(line_no, "session record needs <user-id> <id,id,...>");
            SessionEntry session;
            session.user_id = tokens[1];
            session.track_ids = split(tokens[2], ',');
            if (session.track_ids.size() < 2)
                throw ValidationError(line_no, "session shorter than 2 tracks");
            for (const auto& id : session.track_ids)
                if (id.empty()) throw ValidationError(line_no, "empty track id in session");
            manifest.sessions.push_back(std::move(session));
        } else {
            throw ValidationError(line_no, "unknown record type '" + tokens[0] + "'");
        }
    }
    return manifest;
}

}  // namespace ocmusic
