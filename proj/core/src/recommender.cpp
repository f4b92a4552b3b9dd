#include "ocmusic/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ocmusic/errors.hpp"

namespace ocmusic {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskedScore = -1e30;

}  // namespace

int Vocabulary::add(const std::string& id) {
    auto [it, inserted] = index_of.try_emplace(id, size());
    if (inserted) ids.push_back(id);
    return it->second;
}

int Vocabulary::require(const std::string& id) const {
    auto it = index_of.find(id);
    if (it == index_of.end()) throw VocabularyError("unknown item id '" + id + "'");
    return it->second;
}

void SessionData::truncate(int max_len) {
    const int n = length();
    if (n <= max_len) return;
    items.erase(items.begin(), items.end() - max_len);
    if (!music.empty()) music.erase(music.begin(), music.end() - max_len);
    if (!aesthetic.empty()) aesthetic.erase(aesthetic.begin(), aesthetic.end() - max_len);
}

int RecTrainConfig::head_dim() const {
    if (heads <= 0 || dim % heads != 0)
        throw ConfigError("recommender: dim must be divisible by the head count");
    return dim / heads;
}

RecommenderParams RecommenderParams::zeros(const RecTrainConfig& config, int vocab) {
    const int d = config.dim;
    const int ffn = config.resolved_ffn();
    RecommenderParams p;
    p.head_count = config.heads;
    p.item_emb = Eigen::MatrixXd::Zero(vocab, d);
    p.pos_emb = Eigen::MatrixXd::Zero(config.max_len, d);
    p.music_proj = Eigen::MatrixXd::Zero(config.music_dim, d);
    p.aes_proj = Eigen::MatrixXd::Zero(4, d);
    p.layers.resize(config.layers);
    for (auto& layer : p.layers) {
        layer.wq = layer.wk = layer.wv = layer.wo = Eigen::MatrixXd::Zero(d, d);
        layer.ln1_gain = layer.ln1_bias = layer.ln2_gain = layer.ln2_bias = Eigen::VectorXd::Zero(d);
        layer.w1 = Eigen::MatrixXd::Zero(d, ffn);
        layer.w2 = Eigen::MatrixXd::Zero(ffn, d);
        layer.b1 = Eigen::VectorXd::Zero(ffn);
        layer.b2 = Eigen::VectorXd::Zero(d);
    }
    p.out_w = Eigen::MatrixXd::Zero(d, d);
    p.out_b = Eigen::VectorXd::Zero(d);
    return p;
}

RecommenderParams RecommenderParams::init(const RecTrainConfig& config, int vocab, Rng& rng) {
    config.head_dim();  // validates divisibility
    RecommenderParams p = zeros(config, vocab);
    auto fill = [&rng](Eigen::MatrixXd& m) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.truncated_normal(0.005);
    };
    fill(p.item_emb);
    p.item_emb.row(kPadIndex).setZero();
    fill(p.pos_emb);
    fill(p.music_proj);
    fill(p.aes_proj);
    for (auto& layer : p.layers) {
        fill(layer.wq);
        fill(layer.wk);
        fill(layer.wv);
        fill(layer.wo);
        layer.ln1_gain.setOnes();
        layer.ln2_gain.setOnes();
        fill(layer.w1);
        fill(layer.w2);
    }
    fill(p.out_w);
    return p;
}

double gelu(double x) {
    return x * 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_prime(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    return cdf + x * phi;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double peak = logits.maxCoeff();
    Eigen::VectorXd out = (logits.array() - peak).exp();
    return out / out.sum();
}

Eigen::MatrixXd embed(const SessionData& session, const RecommenderParams& params,
                      const RecTrainConfig& config, int padded_len) {
    const int n = session.length();
    if (n == 0) throw ConfigError("embed: empty session");
    const int rows = padded_len < 0 ? n : padded_len;
    if (n > rows || rows > static_cast<int>(params.pos_emb.rows()))
        throw ConfigError("embed: session longer than the position table");

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, params.dim());
    for (int t = 0; t < n; ++t) {
        const int idx = session.items[t];
        if (idx < 0 || idx >= params.vocab_size())
            throw VocabularyError("embed: item index outside the vocabulary");
        x.row(t) = params.item_emb.row(idx) + params.pos_emb.row(t);
        if (idx >= kFirstItemIndex) {  // mask/pad carry no side features
            if (!session.music.empty() && session.music[t].size() > 0)
                x.row(t) += session.music[t].transpose() * params.music_proj;
            if (config.use_aesthetic && !session.aesthetic.empty() &&
                session.aesthetic[t].size() > 0)
                x.row(t) += session.aesthetic[t].transpose() * params.aes_proj;
        }
    }
    return x;
}

namespace {

struct LayerNormCache {
    Eigen::MatrixXd normalized;  // x-hat
    Eigen::VectorXd rstd;
};

Eigen::MatrixXd layer_norm_forward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                                   const Eigen::VectorXd& bias, LayerNormCache& cache) {
    const auto n = x.rows();
    const auto d = x.cols();
    cache.normalized.resize(n, d);
    cache.rstd.resize(n);
    Eigen::MatrixXd out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.rstd(i) = rstd;
        cache.normalized.row(i) = (x.row(i).array() - mean) * rstd;
        out.row(i) = cache.normalized.row(i).cwiseProduct(gain.transpose()) + bias.transpose();
    }
    return out;
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& d_out, const LayerNormCache& cache,
                                    const Eigen::VectorXd& gain, Eigen::VectorXd& d_gain,
                                    Eigen::VectorXd& d_bias) {
    const auto n = d_out.rows();
    const auto d = d_out.cols();
    Eigen::MatrixXd dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd d_hat = d_out.row(i).cwiseProduct(gain.transpose());
        const double mean_dhat = d_hat.mean();
        const double mean_dhat_hat = d_hat.cwiseProduct(cache.normalized.row(i)).mean();
        dx.row(i) = cache.rstd(i) *
                    (d_hat.array() - mean_dhat - cache.normalized.row(i).array() * mean_dhat_hat);
        d_gain += d_out.row(i).cwiseProduct(cache.normalized.row(i)).transpose();
        d_bias += d_out.row(i).transpose();
    }
    return dx;
}

struct LayerCache {
    Eigen::MatrixXd x_in;
    LayerNormCache ln1;
    Eigen::MatrixXd ln1_out;
    Eigen::MatrixXd q, k, v;                // n x d, heads concatenated
    std::vector<Eigen::MatrixXd> attention;  // per head, n x n
    Eigen::MatrixXd concat;                  // n x d
    Eigen::MatrixXd x_mid;
    LayerNormCache ln2;
    Eigen::MatrixXd ln2_out;
    Eigen::MatrixXd z1, a1;  // n x ffn
    Eigen::MatrixXd x_out;
};

Eigen::MatrixXd attention_block(const Eigen::MatrixXd& ln1_out,
                                const TransformerLayerParams& layer, int head_count, int valid_len,
                                LayerCache* cache) {
    const auto n = ln1_out.rows();
    const auto d = ln1_out.cols();
    const int dk = static_cast<int>(d) / head_count;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    const Eigen::MatrixXd q = ln1_out * layer.wq;
    const Eigen::MatrixXd k = ln1_out * layer.wk;
    const Eigen::MatrixXd v = ln1_out * layer.wv;

    Eigen::MatrixXd concat(n, d);
    std::vector<Eigen::MatrixXd> attentions(head_count);
    for (int h = 0; h < head_count; ++h) {
        const auto qh = q.middleCols(h * dk, dk);
        const auto kh = k.middleCols(h * dk, dk);
        const auto vh = v.middleCols(h * dk, dk);
        Eigen::MatrixXd scores = qh * kh.transpose() * scale;
        if (valid_len < n)
            scores.rightCols(n - valid_len).setConstant(kMaskedScore);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double peak = scores.row(i).maxCoeff();
            Eigen::RowVectorXd e = (scores.row(i).array() - peak).exp();
            scores.row(i) = e / e.sum();
        }
        concat.middleCols(h * dk, dk) = scores * vh;
        attentions[h] = std::move(scores);
    }
    if (cache) {
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->attention = std::move(attentions);
    }
    return concat;
}

Eigen::MatrixXd layer_forward(const Eigen::MatrixXd& x, const TransformerLayerParams& layer,
                              int head_count, int valid_len, LayerCache* cache) {
    LayerNormCache ln1_cache;
    const Eigen::MatrixXd ln1_out = layer_norm_forward(x, layer.ln1_gain, layer.ln1_bias, ln1_cache);
    const Eigen::MatrixXd concat = attention_block(ln1_out, layer, head_count, valid_len, cache);
    const Eigen::MatrixXd x_mid = x + concat * layer.wo;

    LayerNormCache ln2_cache;
    const Eigen::MatrixXd ln2_out =
        layer_norm_forward(x_mid, layer.ln2_gain, layer.ln2_bias, ln2_cache);
    const Eigen::MatrixXd z1 =
        (ln2_out * layer.w1).rowwise() + layer.b1.transpose();
    const Eigen::MatrixXd a1 = z1.unaryExpr([](double v) { return gelu(v); });
    const Eigen::MatrixXd x_out = x_mid + ((a1 * layer.w2).rowwise() + layer.b2.transpose());

    if (cache) {
        cache->x_in = x;
        cache->ln1 = std::move(ln1_cache);
        cache->ln1_out = ln1_out;
        cache->concat = concat;
        cache->x_mid = x_mid;
        cache->ln2 = std::move(ln2_cache);
        cache->ln2_out = ln2_out;
        cache->z1 = z1;
        cache->a1 = a1;
        cache->x_out = x_out;
    }
    return x_out;
}

// dX for the attention sublayer; accumulates parameter gradients.
Eigen::MatrixXd attention_backward(const Eigen::MatrixXd& d_concat, const LayerCache& cache,
                                   const TransformerLayerParams& layer,
                                   TransformerLayerParams& grads, int head_count) {
    const auto n = cache.ln1_out.rows();
    const auto d = cache.ln1_out.cols();
    const int dk = static_cast<int>(d) / head_count;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, d);
    Eigen::MatrixXd dk_mat = Eigen::MatrixXd::Zero(n, d);
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(n, d);
    for (int h = 0; h < head_count; ++h) {
        const auto a = cache.attention[h];
        const auto vh = cache.v.middleCols(h * dk, dk);
        const auto d_head = d_concat.middleCols(h * dk, dk);

        const Eigen::MatrixXd da = d_head * vh.transpose();
        dv.middleCols(h * dk, dk) = a.transpose() * d_head;

        Eigen::MatrixXd ds(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dot = da.row(i).dot(a.row(i));
            ds.row(i) = a.row(i).array() * (da.row(i).array() - dot);
        }
        // masked key columns have zero attention, so ds there is zero already
        dq.middleCols(h * dk, dk) = ds * cache.k.middleCols(h * dk, dk) * scale;
        dk_mat.middleCols(h * dk, dk) = ds.transpose() * cache.q.middleCols(h * dk, dk) * scale;
    }
    grads.wq += cache.ln1_out.transpose() * dq;
    grads.wk += cache.ln1_out.transpose() * dk_mat;
    grads.wv += cache.ln1_out.transpose() * dv;
    return dq * layer.wq.transpose() + dk_mat * layer.wk.transpose() + dv * layer.wv.transpose();
}

Eigen::MatrixXd layer_backward(const Eigen::MatrixXd& d_out, const LayerCache& cache,
                               const TransformerLayerParams& layer, TransformerLayerParams& grads,
                               int head_count) {
    // FFN sublayer
    Eigen::MatrixXd dx_mid = d_out;
    const Eigen::MatrixXd d_ffn = d_out;
    grads.w2 += cache.a1.transpose() * d_ffn;
    grads.b2 += d_ffn.colwise().sum().transpose();
    const Eigen::MatrixXd da1 = d_ffn * layer.w2.transpose();
    const Eigen::MatrixXd dz1 =
        da1.cwiseProduct(cache.z1.unaryExpr([](double v) { return gelu_prime(v); }));
    grads.w1 += cache.ln2_out.transpose() * dz1;
    grads.b1 += dz1.colwise().sum().transpose();
    const Eigen::MatrixXd d_ln2_out = dz1 * layer.w1.transpose();
    dx_mid += layer_norm_backward(d_ln2_out, cache.ln2, layer.ln2_gain, grads.ln2_gain,
                                  grads.ln2_bias);

    // attention sublayer
    Eigen::MatrixXd dx_in = dx_mid;
    grads.wo += cache.concat.transpose() * dx_mid;
    const Eigen::MatrixXd d_concat = dx_mid * layer.wo.transpose();
    const Eigen::MatrixXd d_ln1_out =
        attention_backward(d_concat, cache, layer, grads, head_count);
    dx_in += layer_norm_backward(d_ln1_out, cache.ln1, layer.ln1_gain, grads.ln1_gain,
                                 grads.ln1_bias);
    return dx_in;
}

}  // namespace

Eigen::MatrixXd attention_head(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wq,
                               const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv, int valid_len,
                               Eigen::MatrixXd* attention_out) {
    const auto n = x.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
    Eigen::MatrixXd scores = (x * wq) * (x * wk).transpose() * scale;
    if (valid_len < n) scores.rightCols(n - valid_len).setConstant(kMaskedScore);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double peak = scores.row(i).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(i).array() - peak).exp();
        scores.row(i) = e / e.sum();
    }
    if (attention_out) *attention_out = scores;
    return scores * (x * wv);
}

Eigen::MatrixXd transformer_forward(const Eigen::MatrixXd& x, const RecommenderParams& params,
                                    int valid_len) {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        h = layer_forward(h, params.layers[l], params.head_count, valid_len, nullptr);
        if (!h.allFinite())
            throw NumericError("transformer: non-finite activations in layer " + std::to_string(l));
    }
    return h;
}

Eigen::VectorXd predict_masked(const Eigen::MatrixXd& h_final, int position,
                               const RecommenderParams& params) {
    if (position < 0 || position >= h_final.rows())
        throw ConfigError("predict_masked: position outside the sequence");
    const Eigen::VectorXd h = h_final.row(position).transpose();
    const Eigen::VectorXd z = params.out_w * h + params.out_b;
    const Eigen::VectorXd a = z.unaryExpr([](double v) { return gelu(v); });
    return softmax(params.item_emb * a);
}

MaskedBatch mask_sessions(const std::vector<SessionData>& sessions, double rho,
                          std::uint64_t seed) {
    if (rho <= 0.0 || rho >= 1.0) throw ConfigError("mask_sessions: rho must lie in (0, 1)");
    Rng rng(seed);
    MaskedBatch batch;
    batch.sessions = sessions;
    for (std::size_t s = 0; s < batch.sessions.size(); ++s) {
        auto& session = batch.sessions[s];
        bool any = false;
        for (int t = 0; t < session.length(); ++t) {
            if (session.items[t] < kFirstItemIndex) continue;
            if (rng.uniform() < rho) {
                batch.targets.push_back({static_cast<int>(s), t, session.items[t]});
                session.items[t] = kMaskIndex;
                any = true;
            }
        }
        if (!any && session.length() > 0) {
            const int t = static_cast<int>(rng.uniform_index(session.length()));
            if (session.items[t] >= kFirstItemIndex) {
                batch.targets.push_back({static_cast<int>(s), t, session.items[t]});
                session.items[t] = kMaskIndex;
            }
        }
    }
    return batch;
}

double masked_loss(const MaskedBatch& batch, const RecommenderParams& params,
                   const RecTrainConfig& config, RecommenderParams* grads) {
    if (batch.targets.empty()) throw ConfigError("masked_loss: no masked positions");
    double loss = 0.0;

    // group targets per session so each session runs one forward pass
    std::vector<std::vector<const MaskTarget*>> per_session(batch.sessions.size());
    for (const auto& target : batch.targets) per_session[target.session].push_back(&target);

    for (std::size_t s = 0; s < batch.sessions.size(); ++s) {
        if (per_session[s].empty()) continue;
        const auto& session = batch.sessions[s];
        const int n = session.length();

        const Eigen::MatrixXd x0 = embed(session, params, config);
        std::vector<LayerCache> caches(params.layers.size());
        Eigen::MatrixXd h = x0;
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            h = layer_forward(h, params.layers[l], params.head_count, n, &caches[l]);
            if (!h.allFinite())
                throw NumericError("transformer: non-finite activations in layer " +
                                   std::to_string(l));
        }

        Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n, params.dim());
        for (const auto* target : per_session[s]) {
            const Eigen::VectorXd hv = h.row(target->position).transpose();
            const Eigen::VectorXd z = params.out_w * hv + params.out_b;
            const Eigen::VectorXd a = z.unaryExpr([](double v) { return gelu(v); });
            const Eigen::VectorXd probs = softmax(params.item_emb * a);
            loss -= std::log(std::max(probs(target->target), 1e-300));
            if (grads) {
                Eigen::VectorXd dlogits = probs;
                dlogits(target->target) -= 1.0;
                grads->item_emb += dlogits * a.transpose();
                const Eigen::VectorXd da = params.item_emb.transpose() * dlogits;
                const Eigen::VectorXd dz =
                    da.cwiseProduct(z.unaryExpr([](double v) { return gelu_prime(v); }));
                grads->out_w += dz * hv.transpose();
                grads->out_b += dz;
                dh.row(target->position) += (params.out_w.transpose() * dz).transpose();
            }
        }

        if (grads) {
            Eigen::MatrixXd dx = dh;
            for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l)
                dx = layer_backward(dx, caches[l], params.layers[l], grads->layers[l],
                                    params.head_count);
            for (int t = 0; t < n; ++t) {
                const int idx = session.items[t];
                grads->item_emb.row(idx) += dx.row(t);
                grads->pos_emb.row(t) += dx.row(t);
                if (idx >= kFirstItemIndex) {
                    if (!session.music.empty() && session.music[t].size() > 0)
                        grads->music_proj += session.music[t] * dx.row(t);
                    if (config.use_aesthetic && !session.aesthetic.empty() &&
                        session.aesthetic[t].size() > 0)
                        grads->aes_proj += session.aesthetic[t] * dx.row(t);
                }
            }
        }
    }

    const double inv = 1.0 / static_cast<double>(batch.targets.size());
    if (grads)
        visit_tensors([inv](bool, auto& g) { g *= inv; }, *grads);
    return loss * inv;
}

namespace {

class TensorAdam {
public:
    TensorAdam(const RecTrainConfig& config, int vocab)
        : config_(config),
          m_(RecommenderParams::zeros(config, vocab)),
          v_(RecommenderParams::zeros(config, vocab)) {}

    void step(RecommenderParams& params, RecommenderParams& grads, double lr_scale) {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, t_);
        const double c2 = 1.0 - std::pow(config_.beta2, t_);
        const double lr = config_.lr * lr_scale;
        const double b1 = config_.beta1, b2 = config_.beta2, wd = config_.weight_decay;
        visit_tensors(
            [&](bool decay, auto& p, auto& g, auto& m, auto& v) {
                m = b1 * m + (1.0 - b1) * g;
                v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
                p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
                if (decay && wd > 0.0) p.array() -= lr * wd * p.array();
            },
            params, grads, m_, v_);
    }

private:
    RecTrainConfig config_;
    RecommenderParams m_, v_;
    int t_ = 0;
};

double clip_tensors(RecommenderParams& grads, double max_norm) {
    double sq = 0.0;
    visit_tensors([&sq](bool, auto& g) { sq += g.squaredNorm(); }, grads);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        visit_tensors([scale](bool, auto& g) { g *= scale; }, grads);
    }
    return norm;
}

}  // namespace

std::pair<RecommenderParams, RecTrainReport> train_recommender(
    const std::vector<SessionData>& sessions, int vocab_size, const RecTrainConfig& config) {
    if (sessions.empty()) throw ConfigError("train_recommender: no sessions");
    if (vocab_size <= kFirstItemIndex) throw ConfigError("train_recommender: empty vocabulary");

    std::vector<SessionData> data = sessions;
    for (auto& s : data) s.truncate(config.max_len);

    Rng rng(config.seed);
    RecommenderParams params = RecommenderParams::init(config, vocab_size, rng);
    RecommenderParams grads = RecommenderParams::zeros(config, vocab_size);
    TensorAdam adam(config, vocab_size);

    RecTrainReport report;
    report.initial_loss =
        masked_loss(mask_sessions(data, config.mask_prop, rng.next_u64()), params, config, nullptr);

    const int batches_per_epoch =
        static_cast<int>((data.size() + config.batch_size - 1) / config.batch_size);
    const long total_steps = static_cast<long>(batches_per_epoch) * config.epochs;
    long step = 0;

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int epoch_batches = 0;
        for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
            std::vector<SessionData> batch_sessions;
            for (std::size_t i = at; i < std::min(order.size(), at + config.batch_size); ++i)
                batch_sessions.push_back(data[order[i]]);
            const auto batch = mask_sessions(batch_sessions, config.mask_prop, rng.next_u64());
            if (batch.targets.empty()) continue;

            visit_tensors([](bool, auto& g) { g.setZero(); }, grads);
            const double loss = masked_loss(batch, params, config, &grads);
            if (!std::isfinite(loss))
                throw NumericError("train_recommender: loss diverged at step " +
                                   std::to_string(step));
            clip_tensors(grads, config.grad_clip);
            const double lr_scale =
                config.linear_lr_decay
                    ? 1.0 - static_cast<double>(step) / static_cast<double>(total_steps)
                    : 1.0;
            adam.step(params, grads, lr_scale);
            ++step;
            epoch_loss += loss;
            ++epoch_batches;
        }
        report.epoch_loss.push_back(epoch_batches > 0 ? epoch_loss / epoch_batches : 0.0);
    }
    return {std::move(params), std::move(report)};
}

double masked_prediction_accuracy(const std::vector<SessionData>& sessions,
                                  const RecommenderParams& params, const RecTrainConfig& config,
                                  double rho, std::uint64_t seed) {
    std::vector<SessionData> data = sessions;
    for (auto& s : data) s.truncate(config.max_len);
    const auto batch = mask_sessions(data, rho, seed);
    if (batch.targets.empty()) return 0.0;

    int correct = 0;
    for (const auto& target : batch.targets) {
        const auto& session = batch.sessions[target.session];
        const Eigen::MatrixXd x = embed(session, params, config);
        const Eigen::MatrixXd h = transformer_forward(x, params, session.length());
        const Eigen::VectorXd probs = predict_masked(h, target.position, params);
        int argmax = kFirstItemIndex;
        for (int j = kFirstItemIndex; j < params.vocab_size(); ++j)
            if (probs(j) > probs(argmax)) argmax = j;
        if (argmax == target.target) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.targets.size());
}

int rank_of_target(const Eigen::VectorXd& scores, int target) {
    if (target < kFirstItemIndex || target >= scores.size())
        throw ConfigError("rank_of_target: target outside the item range");
    int rank = 1;
    for (int j = kFirstItemIndex; j < scores.size(); ++j) {
        if (j == target) continue;
        if (scores(j) > scores(target) || (scores(j) == scores(target) && j < target)) ++rank;
    }
    return rank;
}

std::map<std::string, double> evaluate_recommender(const std::vector<SessionData>& sessions,
                                                   const RecommenderParams& params,
                                                   const RecTrainConfig& config,
                                                   const std::vector<int>& ks) {
    if (sessions.empty()) throw ConfigError("evaluate: empty test set");
    std::map<std::string, double> metrics;
    for (int k : ks) {
        metrics["HR@" + std::to_string(k)] = 0.0;
        if (k != 1) metrics["NDCG@" + std::to_string(k)] = 0.0;
    }

    int evaluated = 0;
    for (const auto& raw : sessions) {
        SessionData session = raw;
        session.truncate(config.max_len);
        if (session.length() < 2) continue;
        const int last = session.length() - 1;
        const int target = session.items[last];
        if (target < kFirstItemIndex) continue;
        session.items[last] = kMaskIndex;

        const Eigen::MatrixXd x = embed(session, params, config);
        const Eigen::MatrixXd h = transformer_forward(x, params, session.length());
        const Eigen::VectorXd probs = predict_masked(h, last, params);
        const int rank = rank_of_target(probs, target);
        ++evaluated;
        for (int k : ks) {
            if (rank <= k) {
                metrics["HR@" + std::to_string(k)] += 1.0;
                if (k != 1)
                    metrics["NDCG@" + std::to_string(k)] += 1.0 / std::log2(rank + 1.0);
            }
        }
    }
    if (evaluated == 0) throw ConfigError("evaluate: no session long enough for leave-one-out");
    for (auto& [key, value] : metrics) value /= evaluated;
    return metrics;
}

FusionAblation ablate_aesthetic_fusion(const std::vector<SessionData>& train,
                                       const std::vector<SessionData>& test, int vocab_size,
                                       const RecTrainConfig& config, const std::vector<int>& ks) {
    RecTrainConfig with_aes = config;
    with_aes.use_aesthetic = true;
    RecTrainConfig without_aes = config;
    without_aes.use_aesthetic = false;

    FusionAblation out;
    const auto model_with = train_recommender(train, vocab_size, with_aes);
    out.with_aesthetic = evaluate_recommender(test, model_with.first, with_aes, ks);
    const auto model_without = train_recommender(train, vocab_size, without_aes);
    out.without_aesthetic = evaluate_recommender(test, model_without.first, without_aes, ks);
    return out;
}

}  // namespace ocmusic
