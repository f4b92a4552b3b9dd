// ocmusic command-line front end: feature extraction, aesthetic scoring and
// training, pseudo-feature distillation, and the sequential recommender.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ocmusic/errors.hpp"
#include "pipeline.hpp"

namespace {

using namespace ocmusic;
using cli::fmt;

DatasetManifest read_manifest(const std::string& path) {
    const auto bytes = cli::read_file(path);
    return load_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string feature_line(const cli::TrackFeatureResult& result, bool json) {
    if (json) {
        nlohmann::json obj;
        obj["id"] = result.id;
        if (!result.error.empty()) {
            obj["error"] = result.error;
        } else {
            nlohmann::json values;
            for (int f = 0; f < kBasicFeatureCount; ++f) {
                const auto name = std::string(basic_feature_names()[f]);
                if (result.features.available[f])
                    values[name] = result.features.values[f];
                else
                    values[name] = nullptr;
            }
            obj["features"] = values;
            obj["degraded_stems"] = result.features.degraded_stems;
        }
        return obj.dump();
    }
    std::ostringstream line;
    line << result.id;
    if (!result.error.empty()) {
        line << " error=\"" << result.error << "\"";
        return line.str();
    }
    for (int f = 0; f < kBasicFeatureCount; ++f) {
        line << " " << basic_feature_names()[f] << "=";
        line << (result.features.available[f] ? fmt(result.features.values[f]) : "na");
    }
    if (result.features.degraded_stems) line << " degraded_stems=1";
    return line.str();
}

LabeledFeatures labeled_features(const DatasetManifest& manifest, const FeatureConfig& config,
                                 int threads) {
    const auto results = cli::manifest_features(manifest, config, threads);
    LabeledFeatures data;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].error.empty())
            throw DecodeError("track '" + results[i].id + "': " + results[i].error);
        data.emplace_back(results[i].features, manifest.tracks[i].label);
    }
    return data;
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty() || out_path == "-")
        std::cout << content;
    else
        cli::write_file(out_path, content);
}

int cmd_features(const std::string& manifest_path, const std::string& out_path, int threads,
                 bool json) {
    const auto manifest = read_manifest(manifest_path);
    const auto results = cli::manifest_features(manifest, FeatureConfig{}, threads);
    std::ostringstream out;
    std::size_t failed = 0;
    for (const auto& result : results) {
        out << feature_line(result, json) << "\n";
        if (!result.error.empty()) ++failed;
    }
    emit(out_path, out.str());
    return !results.empty() && failed == results.size() ? 1 : 0;
}

int cmd_train_aes(const std::string& manifest_path, const std::string& out_path, double lr,
                  int iterations, std::uint64_t seed, int threads, bool finetune) {
    const auto manifest = read_manifest(manifest_path);
    AestheticTrainConfig config;
    config.lr = lr;
    config.iterations = iterations;
    config.seed = seed;
    config.finetune_heads = finetune;
    const auto data = labeled_features(manifest, FeatureConfig{}, threads);
    const auto [model, report] = train_aesthetic(data, config);
    save_aesthetic_model_file(out_path, model);
    std::cout << "model=" << out_path << "\n";
    std::cout << "accuracy=" << fmt(report.metrics.accuracy) << "\n";
    std::cout << "macro_f1=" << fmt(report.metrics.macro_f1) << "\n";
    std::cout << "test_count=" << report.metrics.test_count << "\n";
    std::cout << "measure_mse=" << fmt(report.measure_mse) << "\n";
    std::cout << "log_measure_mse=" << fmt(report.log_measure_mse) << "\n";
    std::cout << "stage2_loss_initial=" << fmt(report.initial_stage2_loss) << "\n";
    std::cout << "stage2_loss_final=" << fmt(report.final_stage2_loss) << "\n";
    std::cout << "denominator_projections=" << report.denominator_projections << "\n";
    return 0;
}

int cmd_score(const std::string& manifest_path, const std::string& model_path,
              const std::string& out_path, int threads, bool json) {
    const auto manifest = read_manifest(manifest_path);
    const auto model = load_aesthetic_model_file(model_path);
    const auto results = cli::manifest_features(manifest, FeatureConfig{}, threads);

    struct Scored {
        std::string id;
        double measure = 0.0;
        AestheticFeatures aes;
        Label label = Label::kMedium;
        std::string error;
    };
    std::vector<Scored> scored;
    for (const auto& result : results) {
        Scored s;
        s.id = result.id;
        s.error = result.error;
        if (s.error.empty()) {
            try {
                s.aes = aesthetic_features(result.features, model.heads, model.normalizer);
                s.measure = birkhoff_score(s.aes, model.oc);
                s.label = classify(s.measure, model.oc);
            } catch (const std::exception& e) {
                s.error = e.what();
            }
        }
        scored.push_back(std::move(s));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.error.empty() != b.error.empty()) return a.error.empty();
        if (a.measure != b.measure) return a.measure > b.measure;
        return a.id < b.id;
    });

    std::ostringstream out;
    std::size_t failed = 0;
    int rank = 0;
    for (const auto& s : scored) {
        if (!s.error.empty()) {
            ++failed;
            if (json) {
                nlohmann::json obj{{"id", s.id}, {"error", s.error}};
                out << obj.dump() << "\n";
            } else {
                out << s.id << " error=\"" << s.error << "\"\n";
            }
            continue;
        }
        ++rank;
        if (json) {
            nlohmann::json obj{{"rank", rank},          {"id", s.id},
                               {"measure", s.measure},  {"H", s.aes.harmony},
                               {"S", s.aes.symmetry},   {"C", s.aes.chaos},
                               {"R", s.aes.redundancy}, {"class", to_string(s.label)}};
            out << obj.dump() << "\n";
        } else {
            out << "rank=" << rank << " id=" << s.id << " measure=" << fmt(s.measure)
                << " H=" << fmt(s.aes.harmony) << " S=" << fmt(s.aes.symmetry)
                << " C=" << fmt(s.aes.chaos) << " R=" << fmt(s.aes.redundancy)
                << " class=" << to_string(s.label) << "\n";
        }
    }
    emit(out_path, out.str());
    return !scored.empty() && failed == scored.size() ? 1 : 0;
}

int cmd_distill(const std::string& manifest_path, const std::string& model_path,
                const std::string& out_path, const std::string& transcriber_name, double lr,
                int steps, double lambda_rating) {
    const auto manifest = read_manifest(manifest_path);
    auto model = load_aesthetic_model_file(model_path);

    std::vector<AlignedTrack> aligned;
    std::map<std::uint64_t, MidiScore> by_hash;
    for (const auto& entry : manifest.tracks) {
        if (!entry.midi_path)
            throw DecodeError("distill: track '" + entry.id + "' has no aligned midi");
        auto track = cli::load_track(entry);
        aligned.push_back({std::move(track.audio), std::move(*track.midi), entry.label});
    }

    Transcriber transcriber;
    if (transcriber_name == "naive") {
        transcriber = [](const AudioBuffer& audio) { return naive_transcribe(audio); };
    } else if (transcriber_name == "identity") {
        // return each track's own aligned score, keyed by the sample data
        auto key = [](const AudioBuffer& audio) {
            std::uint64_t h = 14695981039346656037ull;
            for (double s : audio.samples) {
                std::uint64_t bits;
                std::memcpy(&bits, &s, 8);
                h = (h ^ bits) * 1099511628211ull;
            }
            return h;
        };
        auto map = std::make_shared<std::map<std::uint64_t, MidiScore>>();
        for (const auto& track : aligned) (*map)[key(track.audio)] = track.midi;
        transcriber = [map, key](const AudioBuffer& audio) {
            auto it = map->find(key(audio));
            if (it == map->end()) throw DecodeError("identity transcriber: unknown audio");
            return it->second;
        };
    } else {
        throw ConfigError("unknown transcriber '" + transcriber_name + "'");
    }

    DistillConfig config;
    config.lr = lr;
    config.steps = steps;
    config.lambda_rating = lambda_rating;
    const auto [heads, report] = distill_pseudo(aligned, model, transcriber, config);

    model.heads = heads;
    save_aesthetic_model_file(out_path, model);
    std::cout << "model=" << out_path << "\n";
    std::cout << "loss_initial=" << fmt(report.loss_curve.front()) << "\n";
    std::cout << "loss_final=" << fmt(report.loss_curve.back()) << "\n";
    std::cout << "feature_mse_before=" << fmt(report.total_mse_before) << "\n";
    std::cout << "feature_mse_after=" << fmt(report.total_mse_after) << "\n";
    for (int h = 0; h < kHeadCount; ++h)
        std::cout << "mse_" << head_names()[h] << "_before=" << fmt(report.feature_mse_before[h])
                  << " after=" << fmt(report.feature_mse_after[h]) << "\n";
    std::cout << "skipped_tracks=" << report.skipped_tracks << "\n";
    return 0;
}

struct ItemTable {
    Vocabulary vocab;
    Eigen::MatrixXd music;
    Eigen::MatrixXd aes;
};

ItemTable build_item_table(const DatasetManifest& manifest, const AestheticModel& model,
                           int threads) {
    ItemTable table;
    std::set<std::string> referenced;
    for (const auto& session : manifest.sessions)
        for (const auto& id : session.track_ids) referenced.insert(id);
    for (const auto& session : manifest.sessions)
        for (const auto& id : session.track_ids)
            if (!manifest.find_track(id))
                throw DecodeError("session references unknown track '" + id + "'");

    DatasetManifest used;
    for (const auto& track : manifest.tracks)
        if (referenced.count(track.id)) used.tracks.push_back(track);
    const auto results = cli::manifest_features(used, FeatureConfig{}, threads);

    for (const auto& result : results) table.vocab.add(result.id);
    table.music = Eigen::MatrixXd::Zero(table.vocab.size(), kBasicFeatureCount);
    table.aes = Eigen::MatrixXd::Zero(table.vocab.size(), 4);
    for (const auto& result : results) {
        if (!result.error.empty())
            throw DecodeError("track '" + result.id + "': " + result.error);
        const auto vectors = cli::item_vectors(result.features, model);
        const int idx = table.vocab.require(result.id);
        table.music.row(idx) = vectors.music.transpose();
        table.aes.row(idx) = vectors.aesthetic.transpose();
    }
    return table;
}

int cmd_train_rec(const std::string& manifest_path, const std::string& aes_model_path,
                  const std::string& out_path, RecTrainConfig config, int threads) {
    const auto manifest = read_manifest(manifest_path);
    if (manifest.sessions.empty()) throw DecodeError("train-rec: manifest has no sessions");
    const auto aes_model = load_aesthetic_model_file(aes_model_path);
    auto table = build_item_table(manifest, aes_model, threads);
    const auto sessions = cli::manifest_sessions(manifest, table.vocab, table.music, table.aes);

    const auto [params, report] = train_recommender(sessions, table.vocab.size(), config);
    RecommenderModel model{config, std::move(table.vocab), params, std::move(table.music),
                           std::move(table.aes)};
    save_recommender_model_file(out_path, model);
    std::cout << "model=" << out_path << "\n";
    std::cout << "loss_initial=" << fmt(report.initial_loss) << "\n";
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
        std::cout << "epoch=" << e + 1 << " loss=" << fmt(report.epoch_loss[e]) << "\n";
    return 0;
}

int cmd_recommend(const std::string& manifest_path, const std::string& model_path,
                  const std::string& out_path, int k, bool json) {
    const auto manifest = read_manifest(manifest_path);
    const auto model = load_recommender_model_file(model_path);

    std::ostringstream out;
    for (const auto& entry : manifest.sessions) {
        SessionData session;
        for (const auto& id : entry.track_ids) {
            const int idx = model.vocab.require(id);
            session.items.push_back(idx);
            session.music.push_back(model.item_music.row(idx).transpose());
            session.aesthetic.push_back(model.item_aes.row(idx).transpose());
        }
        session.items.push_back(kMaskIndex);
        session.music.push_back(Eigen::VectorXd());
        session.aesthetic.push_back(Eigen::VectorXd());
        session.truncate(model.config.max_len);

        const Eigen::MatrixXd x = embed(session, model.params, model.config);
        const Eigen::MatrixXd h = transformer_forward(x, model.params, session.length());
        const Eigen::VectorXd probs = predict_masked(h, session.length() - 1, model.params);

        std::vector<int> order;
        for (int j = kFirstItemIndex; j < model.params.vocab_size(); ++j) order.push_back(j);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (probs(a) != probs(b)) return probs(a) > probs(b);
            return a < b;
        });
        order.resize(std::min<std::size_t>(order.size(), k));

        if (json) {
            nlohmann::json obj;
            obj["user"] = entry.user_id;
            nlohmann::json items = nlohmann::json::array();
            for (int idx : order) items.push_back(model.vocab.ids[idx - kFirstItemIndex]);
            obj["top"] = items;
            out << obj.dump() << "\n";
        } else {
            out << "session " << entry.user_id << " top=";
            for (std::size_t i = 0; i < order.size(); ++i)
                out << (i ? "," : "") << model.vocab.ids[order[i] - kFirstItemIndex];
            out << "\n";
        }
    }
    emit(out_path, out.str());
    return 0;
}

int cmd_eval_rec(const std::string& manifest_path, const std::string& model_path,
                 const std::vector<int>& ks, const std::string& out_path, bool json) {
    const auto manifest = read_manifest(manifest_path);
    const auto model = load_recommender_model_file(model_path);
    const auto sessions =
        cli::manifest_sessions(manifest, model.vocab, model.item_music, model.item_aes);
    const auto metrics = evaluate_recommender(sessions, model.params, model.config, ks);

    std::ostringstream out;
    if (json) {
        nlohmann::json obj;
        for (const auto& [key, value] : metrics) obj[key] = value;
        out << obj.dump() << "\n";
    } else {
        for (int k : ks) out << "HR@" << k << "=" << fmt(metrics.at("HR@" + std::to_string(k))) << "\n";
        for (int k : ks)
            if (k != 1)
                out << "NDCG@" << k << "=" << fmt(metrics.at("NDCG@" + std::to_string(k))) << "\n";
    }
    emit(out_path, out.str());
    return 0;
}

int cmd_ablate(const std::string& manifest_path, const std::vector<std::string>& drop, double lr,
               int iterations, std::uint64_t seed, int threads) {
    const auto manifest = read_manifest(manifest_path);
    AestheticTrainConfig config;
    config.lr = lr;
    config.iterations = iterations;
    config.seed = seed;
    const auto data = labeled_features(manifest, FeatureConfig{}, threads);

    const auto [full_model, full] = train_aesthetic(data, config);
    const auto [ablated_model, ablated] =
        ablate(data, config, std::set<std::string>(drop.begin(), drop.end()));

    std::string dropped;
    for (const auto& name : drop) dropped += (dropped.empty() ? "" : ",") + name;
    std::cout << "full accuracy=" << fmt(full.metrics.accuracy)
              << " macro_f1=" << fmt(full.metrics.macro_f1) << " mse=" << fmt(full.measure_mse)
              << " log_mse=" << fmt(full.log_measure_mse) << "\n";
    std::cout << "ablated drop=" << (dropped.empty() ? "none" : dropped)
              << " accuracy=" << fmt(ablated.metrics.accuracy)
              << " macro_f1=" << fmt(ablated.metrics.macro_f1)
              << " mse=" << fmt(ablated.measure_mse) << " log_mse=" << fmt(ablated.log_measure_mse)
              << "\n";
    std::cout << "delta accuracy=" << fmt(ablated.metrics.accuracy - full.metrics.accuracy)
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"order/complexity music aesthetics and aesthetic-aware recommendation"};
    app.require_subcommand(1);

    std::string manifest_path, model_path, aes_model_path, out_path;
    std::uint64_t seed = 42;
    int threads = 1;
    bool json = false;

    auto* features = app.add_subcommand("features", "extract the ten basic features per track");
    features->add_option("--manifest", manifest_path)->required();
    features->add_option("--out", out_path);
    features->add_option("--threads", threads);
    features->add_flag("--json", json);

    double aes_lr = 5e-5;
    int aes_iterations = 1000;
    bool finetune = false;
    auto* train_aes = app.add_subcommand("train-aes", "train the aesthetic scoring model");
    train_aes->add_option("--manifest", manifest_path)->required();
    train_aes->add_option("--out", out_path)->required();
    train_aes->add_option("--lr", aes_lr);
    train_aes->add_option("--iterations", aes_iterations);
    train_aes->add_option("--seed", seed);
    train_aes->add_option("--threads", threads);
    train_aes->add_flag("--finetune-heads", finetune);

    auto* score = app.add_subcommand("score", "rank tracks by aesthetic measure");
    score->add_option("--manifest", manifest_path)->required();
    score->add_option("--model", model_path)->required();
    score->add_option("--out", out_path);
    score->add_option("--threads", threads);
    score->add_flag("--json", json);

    std::string transcriber = "naive";
    double distill_lr = 1e-2, lambda_rating = 1.0;
    int distill_steps = 100;
    auto* distill = app.add_subcommand("distill", "fit pseudo-feature heads from transcribed audio");
    distill->add_option("--manifest", manifest_path)->required();
    distill->add_option("--model", model_path)->required();
    distill->add_option("--out", out_path)->required();
    distill->add_option("--transcriber", transcriber)->check(CLI::IsMember({"naive", "identity"}));
    distill->add_option("--lr", distill_lr);
    distill->add_option("--steps", distill_steps);
    distill->add_option("--lambda-rating", lambda_rating);

    RecTrainConfig rec_config;
    bool no_aes = false;
    auto* train_rec = app.add_subcommand("train-rec", "train the sequential recommender");
    train_rec->add_option("--manifest", manifest_path)->required();
    train_rec->add_option("--aes-model", aes_model_path)->required();
    train_rec->add_option("--out", out_path)->required();
    train_rec->add_option("--layers", rec_config.layers);
    train_rec->add_option("--heads", rec_config.heads);
    train_rec->add_option("--dim", rec_config.dim);
    train_rec->add_option("--max-len", rec_config.max_len);
    train_rec->add_option("--rho", rec_config.mask_prop);
    train_rec->add_option("--lr", rec_config.lr);
    train_rec->add_option("--epochs", rec_config.epochs);
    train_rec->add_option("--batch-size", rec_config.batch_size);
    train_rec->add_option("--seed", seed);
    train_rec->add_option("--threads", threads);
    train_rec->add_flag("--no-aes", no_aes);

    int top_k = 10;
    auto* recommend = app.add_subcommand("recommend", "top-k next-item lists per session");
    recommend->add_option("--manifest", manifest_path)->required();
    recommend->add_option("--model", model_path)->required();
    recommend->add_option("--out", out_path);
    recommend->add_option("--k", top_k);
    recommend->add_flag("--json", json);

    std::vector<int> ks{1, 5, 10};
    auto* eval_rec = app.add_subcommand("eval-rec", "leave-one-out HR/NDCG evaluation");
    eval_rec->add_option("--manifest", manifest_path)->required();
    eval_rec->add_option("--model", model_path)->required();
    eval_rec->add_option("--k", ks)->delimiter(',');
    eval_rec->add_option("--out", out_path);
    eval_rec->add_flag("--json", json);

    std::vector<std::string> drop;
    auto* ablate_cmd = app.add_subcommand("ablate", "retrain with aesthetic terms removed");
    ablate_cmd->add_option("--manifest", manifest_path)->required();
    ablate_cmd->add_option("--drop", drop)
        ->delimiter(',')
        ->check(CLI::IsMember({"harmony", "symmetry", "chaos", "redundancy"}));
    ablate_cmd->add_option("--lr", aes_lr);
    ablate_cmd->add_option("--iterations", aes_iterations);
    ablate_cmd->add_option("--seed", seed);
    ablate_cmd->add_option("--threads", threads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage errors
    }

    try {
        if (features->parsed()) return cmd_features(manifest_path, out_path, threads, json);
        if (train_aes->parsed())
            return cmd_train_aes(manifest_path, out_path, aes_lr, aes_iterations, seed, threads,
                                 finetune);
        if (score->parsed()) return cmd_score(manifest_path, model_path, out_path, threads, json);
        if (distill->parsed())
            return cmd_distill(manifest_path, model_path, out_path, transcriber, distill_lr,
                               distill_steps, lambda_rating);
        if (train_rec->parsed()) {
            rec_config.seed = seed;
            rec_config.use_aesthetic = !no_aes;
            return cmd_train_rec(manifest_path, aes_model_path, out_path, rec_config, threads);
        }
        if (recommend->parsed())
            return cmd_recommend(manifest_path, model_path, out_path, top_k, json);
        if (eval_rec->parsed()) return cmd_eval_rec(manifest_path, model_path, ks, out_path, json);
        if (ablate_cmd->parsed())
            return cmd_ablate(manifest_path, drop, aes_lr, aes_iterations, seed, threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
