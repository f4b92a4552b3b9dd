#include "ocmusic/model_io.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

void write_header(std::ostream& out, std::string_view version) {
    out << version << "\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
}

void expect_version(std::istream& in, std::string_view version) {
    std::string line;
    if (!std::getline(in, line)) throw DecodeError("model file: empty");
    if (line != version)
        throw UnsupportedFormatError("model version mismatch: file has '" + line +
                                     "', this build reads '" + std::string(version) + "'");
}

std::string expect_key(std::istream& in, const std::string& key) {
    std::string token;
    if (!(in >> token) || token != key)
        throw DecodeError("model file: expected '" + key + "', got '" + token + "'");
    return token;
}

void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
    out << "tensor " << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
        out << "\n";
    }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& name) {
    expect_key(in, "tensor");
    expect_key(in, name);
    Eigen::Index rows, cols;
    if (!(in >> rows >> cols) || rows < 0 || cols < 0)
        throw DecodeError("model file: bad shape for tensor " + name);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(in >> m(i, j))) throw DecodeError("model file: truncated tensor " + name);
    return m;
}

void write_vector(std::ostream& out, const std::string& name, const Eigen::VectorXd& v) {
    write_matrix(out, name, v);
}

Eigen::VectorXd read_vector(std::istream& in, const std::string& name) {
    const Eigen::MatrixXd m = read_matrix(in, name);
    if (m.cols() != 1) throw DecodeError("model file: tensor " + name + " is not a vector");
    return m.col(0);
}

}  // namespace

void save_aesthetic_model(std::ostream& out, const AestheticModel& model) {
    write_header(out, kAestheticModelVersion);
    out << "seed " << model.seed << "\n";
    out << "config " << model.config.lr << " " << model.config.iterations << " "
        << model.config.test_fraction << " " << model.config.finetune_heads << " "
        << model.config.use_harmony << " " << model.config.use_symmetry << " "
        << model.config.use_chaos << " " << model.config.use_redundancy << "\n";
    out << "normalizer";
    for (int f = 0; f < kBasicFeatureCount; ++f)
        out << " " << model.normalizer.mean[f] << " " << model.normalizer.stddev[f] << " "
            << model.normalizer.active[f];
    out << "\n";
    for (int h = 0; h < kHeadCount; ++h) {
        out << "head " << head_names()[h] << " " << model.heads[h].weights.size();
        for (double w : model.heads[h].weights) out << " " << w;
        out << " " << model.heads[h].bias << "\n";
    }
    out << "oc " << model.oc.w1 << " " << model.oc.w2 << " " << model.oc.w3 << " " << model.oc.w4
        << " " << model.oc.theta1 << " " << model.oc.theta2 << " " << model.oc.tau1 << " "
        << model.oc.tau2 << "\n";
    out << "end\n";
}

AestheticModel load_aesthetic_model(std::istream& in) {
    expect_version(in, kAestheticModelVersion);
    AestheticModel model;
    expect_key(in, "seed");
    in >> model.seed;
    expect_key(in, "config");
    in >> model.config.lr >> model.config.iterations >> model.config.test_fraction >>
        model.config.finetune_heads >> model.config.use_harmony >> model.config.use_symmetry >>
        model.config.use_chaos >> model.config.use_redundancy;
    model.config.seed = model.seed;
    expect_key(in, "normalizer");
    for (int f = 0; f < kBasicFeatureCount; ++f) {
        bool active;
        in >> model.normalizer.mean[f] >> model.normalizer.stddev[f] >> active;
        model.normalizer.active[f] = active;
    }
    for (int h = 0; h < kHeadCount; ++h) {
        expect_key(in, "head");
        expect_key(in, std::string(head_names()[h]));
        std::size_t count;
        in >> count;
        if (count != head_feature_indices(h).size())
            throw DecodeError("model file: head weight count mismatch");
        model.heads[h].weights.resize(count);
        for (auto& w : model.heads[h].weights) in >> w;
        in >> model.heads[h].bias;
    }
    expect_key(in, "oc");
    in >> model.oc.w1 >> model.oc.w2 >> model.oc.w3 >> model.oc.w4 >> model.oc.theta1 >>
        model.oc.theta2 >> model.oc.tau1 >> model.oc.tau2;
    expect_key(in, "end");
    if (!in) throw DecodeError("model file: truncated");
    return model;
}

void save_recommender_model(std::ostream& out, const RecommenderModel& model) {
    write_header(out, kRecommenderModelVersion);
    const auto& c = model.config;
    out << "config " << c.layers << " " << c.heads << " " << c.dim << " " << c.ffn_dim << " "
        << c.max_len << " " << c.music_dim << " " << c.mask_prop << " " << c.lr << " " << c.beta1
        << " " << c.beta2 << " " << c.weight_decay << " " << c.grad_clip << " " << c.batch_size
        << " " << c.epochs << " " << c.seed << " " << c.use_aesthetic << " " << c.linear_lr_decay
        << "\n";
    out << "vocab " << model.vocab.ids.size() << "\n";
    for (const auto& id : model.vocab.ids) out << id << "\n";
    write_matrix(out, "item_emb", model.params.item_emb);
    write_matrix(out, "pos_emb", model.params.pos_emb);
    write_matrix(out, "music_proj", model.params.music_proj);
    write_matrix(out, "aes_proj", model.params.aes_proj);
    out << "layers " << model.params.layers.size() << "\n";
    for (const auto& layer : model.params.layers) {
        write_matrix(out, "wq", layer.wq);
        write_matrix(out, "wk", layer.wk);
        write_matrix(out, "wv", layer.wv);
        write_matrix(out, "wo", layer.wo);
        write_vector(out, "ln1_gain", layer.ln1_gain);
        write_vector(out, "ln1_bias", layer.ln1_bias);
        write_vector(out, "ln2_gain", layer.ln2_gain);
        write_vector(out, "ln2_bias", layer.ln2_bias);
        write_matrix(out, "w1", layer.w1);
        write_matrix(out, "w2", layer.w2);
        write_vector(out, "b1", layer.b1);
        write_vector(out, "b2", layer.b2);
    }
    write_matrix(out, "out_w", model.params.out_w);
    write_vector(out, "out_b", model.params.out_b);
    write_matrix(out, "item_music", model.item_music);
    write_matrix(out, "item_aes", model.item_aes);
    out << "end\n";
}

RecommenderModel load_recommender_model(std::istream& in) {
    expect_version(in, kRecommenderModelVersion);
    RecommenderModel model;
    auto& c = model.config;
    expect_key(in, "config");
    in >> c.layers >> c.heads >> c.dim >> c.ffn_dim >> c.max_len >> c.music_dim >> c.mask_prop >>
        c.lr >> c.beta1 >> c.beta2 >> c.weight_decay >> c.grad_clip >> c.batch_size >> c.epochs >>
        c.seed >> c.use_aesthetic >> c.linear_lr_decay;
    expect_key(in, "vocab");
    std::size_t vocab_count;
    in >> vocab_count;
    for (std::size_t i = 0; i < vocab_count; ++i) {
        std::string id;
        if (!(in >> id)) throw DecodeError("model file: truncated vocabulary");
        model.vocab.add(id);
    }
    model.params.head_count = c.heads;
    model.params.item_emb = read_matrix(in, "item_emb");
    model.params.pos_emb = read_matrix(in, "pos_emb");
    model.params.music_proj = read_matrix(in, "music_proj");
    model.params.aes_proj = read_matrix(in, "aes_proj");
    expect_key(in, "layers");
    std::size_t n_layers;
    in >> n_layers;
    model.params.layers.resize(n_layers);
    for (auto& layer : model.params.layers) {
        layer.wq = read_matrix(in, "wq");
        layer.wk = read_matrix(in, "wk");
        layer.wv = read_matrix(in, "wv");
        layer.wo = read_matrix(in, "wo");
        layer.ln1_gain = read_vector(in, "ln1_gain");
        layer.ln1_bias = read_vector(in, "ln1_bias");
        layer.ln2_gain = read_vector(in, "ln2_gain");
        layer.ln2_bias = read_vector(in, "ln2_bias");
        layer.w1 = read_matrix(in, "w1");
        layer.w2 = read_matrix(in, "w2");
        layer.b1 = read_vector(in, "b1");
        layer.b2 = read_vector(in, "b2");
    }
    model.params.out_w = read_matrix(in, "out_w");
    model.params.out_b = read_vector(in, "out_b");
    model.item_music = read_matrix(in, "item_music");
    model.item_aes = read_matrix(in, "item_aes");
    expect_key(in, "end");
    if (!in) throw DecodeError("model file: truncated");
    return model;
}

namespace {

template <class Saver, class Model>
void save_to_file(const std::string& path, const Model& model, Saver saver) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DecodeError("cannot open '" + path + "' for writing");
    saver(out, model);
    if (!out) throw DecodeError("failed writing '" + path + "'");
}

template <class Loader>
auto load_from_file(const std::string& path, Loader loader) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError("cannot open '" + path + "'");
    return loader(in);
}

}  // namespace

void save_aesthetic_model_file(const std::string& path, const AestheticModel& model) {
    save_to_file(path, model, [](std::ostream& out, const AestheticModel& m) {
        save_aesthetic_model(out, m);
    });
}

AestheticModel load_aesthetic_model_file(const std::string& path) {
    return load_from_file(path, [](std::istream& in) { return load_aesthetic_model(in); });
}

void save_recommender_model_file(const std::string& path, const RecommenderModel& model) {
    save_to_file(path, model, [](std::ostream& out, const RecommenderModel& m) {
        save_recommender_model(out, m);
    });
}

RecommenderModel load_recommender_model_file(const std::string& path) {
    return load_from_file(path, [](std::istream& in) { return load_recommender_model(in); });
}

}  // namespace ocmusic
