#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ocmusic/optim.hpp"

namespace ocmusic {

// reserved vocabulary slots
inline constexpr int kPadIndex = 0;
inline constexpr int kMaskIndex = 1;
inline constexpr int kFirstItemIndex = 2;

/// Item-id <-> dense-index mapping. Indices 0 and 1 are the padding and
/// [mask] tokens.
struct Vocabulary {
    std::vector<std::string> ids;  // ids[i] is the item at index i + kFirstItemIndex
    std::map<std::string, int> index_of;

    int add(const std::string& id);
    int require(const std::string& id) const;  // VocabularyError on unknown ids
    int size() const { return static_cast<int>(ids.size()) + kFirstItemIndex; }
};

/// One listening session: item indices plus per-occurrence feature vectors.
/// Sequences longer than max_len must be truncated to the most recent items
/// before training (SessionData::truncate).
struct SessionData {
    std::vector<int> items;
    std::vector<Eigen::VectorXd> music;      // music feature vector per item
    std::vector<Eigen::VectorXd> aesthetic;  // 4-dim aesthetic vector per item

    int length() const { return static_cast<int>(items.size()); }
    void truncate(int max_len);
};

struct RecTrainConfig {
    int layers = 2;
    int heads = 4;
    int dim = 32;
    int ffn_dim = 0;  // 0 resolves to 4 * dim
    int max_len = 50;
    int music_dim = 10;
    double mask_prop = 0.4;  // 0.6 for the large-corpus setting
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double grad_clip = 5.0;
    int batch_size = 256;
    int epochs = 20;
    std::uint64_t seed = 42;
    bool use_aesthetic = true;
    bool linear_lr_decay = true;

    int resolved_ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * dim; }
    int head_dim() const;  // dim / heads; ConfigError when it does not divide
};

struct TransformerLayerParams {
    Eigen::MatrixXd wq, wk, wv, wo;  // d x d; per-head slices of width d/h
    Eigen::VectorXd ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    Eigen::MatrixXd w1, w2;  // d x ffn, ffn x d
    Eigen::VectorXd b1, b2;
};

/// Every learned tensor of the model. Output distribution is weight-tied:
/// logits = E . GELU(W_p h + b_p); the printed post-softmax bias is pinned
/// to zero so predictions stay a distribution.
struct RecommenderParams {
    Eigen::MatrixXd item_emb;    // V x d
    Eigen::MatrixXd pos_emb;     // max_len x d
    Eigen::MatrixXd music_proj;  // music_dim x d
    Eigen::MatrixXd aes_proj;    // 4 x d
    std::vector<TransformerLayerParams> layers;
    Eigen::MatrixXd out_w;  // d x d
    Eigen::VectorXd out_b;  // d
    int head_count = 4;

    int vocab_size() const { return static_cast<int>(item_emb.rows()); }
    int dim() const { return static_cast<int>(item_emb.cols()); }

    static RecommenderParams zeros(const RecTrainConfig& config, int vocab);
    /// Truncated-normal init in [-0.01, 0.01]; layer-norm gains start at 1.
    static RecommenderParams init(const RecTrainConfig& config, int vocab, Rng& rng);
};

/// Visit the same tensor across several parameter structs (params, grads,
/// Adam moments, ...). The callback receives (decay_allowed, tensors&...).
template <class F, class... P>
void visit_tensors(F&& f, P&... packs) {
    f(true, packs.item_emb...);
    f(true, packs.pos_emb...);
    f(true, packs.music_proj...);
    f(true, packs.aes_proj...);
    const std::size_t n_layers = (packs.layers.size(), ...);
    for (std::size_t l = 0; l < n_layers; ++l) {
        f(true, packs.layers[l].wq...);
        f(true, packs.layers[l].wk...);
        f(true, packs.layers[l].wv...);
        f(true, packs.layers[l].wo...);
        f(false, packs.layers[l].ln1_gain...);
        f(false, packs.layers[l].ln1_bias...);
        f(false, packs.layers[l].ln2_gain...);
        f(false, packs.layers[l].ln2_bias...);
        f(true, packs.layers[l].w1...);
        f(true, packs.layers[l].w2...);
        f(false, packs.layers[l].b1...);
        f(false, packs.layers[l].b2...);
    }
    f(true, packs.out_w...);
    f(false, packs.out_b...);
}

double gelu(double x);
double gelu_prime(double x);
/// Row-wise softmax of a vector of logits.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Item + position + projected music + projected aesthetic embeddings,
/// summed per position. Masked and padding items contribute no feature
/// embeddings. Rows past `session.length()` are zero padding rows.
Eigen::MatrixXd embed(const SessionData& session, const RecommenderParams& params,
                      const RecTrainConfig& config, int padded_len = -1);

/// Single attention head: row-softmax((X Wq)(X Wk)^T / sqrt(dk)) (X Wv) with
/// key columns at positions >= valid_len masked out. Returns the head output;
/// `attention_out` (optional) receives the softmax matrix.
Eigen::MatrixXd attention_head(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wq,
                               const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv, int valid_len,
                               Eigen::MatrixXd* attention_out = nullptr);

/// Pre-norm stack: X += MHA(LN1(X)); X += FFN(LN2(X)) per layer.
/// Raises NumericError naming the layer if activations go non-finite.
Eigen::MatrixXd transformer_forward(const Eigen::MatrixXd& x, const RecommenderParams& params,
                                    int valid_len);

/// Distribution over the vocabulary for the (masked) position t.
Eigen::VectorXd predict_masked(const Eigen::MatrixXd& h_final, int position,
                               const RecommenderParams& params);

struct MaskTarget {
    int session = 0;
    int position = 0;
    int target = 0;  // original item index
};

struct MaskedBatch {
    std::vector<SessionData> sessions;  // with [mask] substituted
    std::vector<MaskTarget> targets;
};

/// Independent Bernoulli(rho) masking per non-padding position with at least
/// one mask forced per session. Deterministic under seed.
MaskedBatch mask_sessions(const std::vector<SessionData>& sessions, double rho, std::uint64_t seed);

/// Mean masked-position cross-entropy; accumulates analytic gradients when
/// `grads` is non-null. Exposed for the finite-difference check.
double masked_loss(const MaskedBatch& batch, const RecommenderParams& params,
                   const RecTrainConfig& config, RecommenderParams* grads);

struct RecTrainReport {
    std::vector<double> epoch_loss;
    double initial_loss = 0.0;
};

/// Masked-item training: AdamW with linear learning-rate decay and global
/// gradient-norm clipping, deterministic under the config seed.
std::pair<RecommenderParams, RecTrainReport> train_recommender(
    const std::vector<SessionData>& sessions, int vocab_size, const RecTrainConfig& config);

/// Fraction of freshly masked positions whose argmax prediction recovers the
/// original item.
double masked_prediction_accuracy(const std::vector<SessionData>& sessions,
                                  const RecommenderParams& params, const RecTrainConfig& config,
                                  double rho, std::uint64_t seed);

/// Leave-one-out ranking metrics: the final item of each session is masked
/// and ranked against the whole item vocabulary (ties broken by item index).
/// Keys look like "HR@5" / "NDCG@5"; NDCG@1 is omitted (it equals HR@1).
std::map<std::string, double> evaluate_recommender(const std::vector<SessionData>& sessions,
                                                   const RecommenderParams& params,
                                                   const RecTrainConfig& config,
                                                   const std::vector<int>& ks);

/// 1-based rank of `target` under descending score with index tiebreak,
/// considering only real items (index >= kFirstItemIndex).
int rank_of_target(const Eigen::VectorXd& scores, int target);

struct FusionAblation {
    std::map<std::string, double> with_aesthetic;
    std::map<std::string, double> without_aesthetic;
};

/// Twin training runs differing only in the aesthetic embedding addend.
FusionAblation ablate_aesthetic_fusion(const std::vector<SessionData>& train,
                                       const std::vector<SessionData>& test, int vocab_size,
                                       const RecTrainConfig& config, const std::vector<int>& ks);

}  // namespace ocmusic
