#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tlsan/ingest.hpp"
#include "tlsan/linalg.hpp"

namespace tlsan {

enum class Ablation {
    Full,
    NoShort,  // skip the short-term layer: u_t = u_e + u_{t-1}
    NoGamma,  // gamma pinned at 1.0 and not trained
};

struct HyperParams {
    uint32_t d_f = 32;
    uint32_t long_seq_len = 10;
    uint32_t heads = 8;
    uint32_t n_users = 0;
    uint32_t n_items = 0;
    uint32_t n_categories = 0;

    uint32_t emb_dim() const { return 2 * d_f; }
    void validate() const;
};

// All trainable tensors.
struct ModelParams {
    HyperParams hyper;
    Mat user_emb;      // n_users x d_f
    Mat item_emb;      // n_items x d_f
    Mat cat_emb;       // n_categories x d_f
    Mat pos_weight;    // n_users x long_seq_len, scalar per (user, slot)
    double gamma = 1.0;
    Mat w1, w2, w3, w4;  // 2d_f x 2d_f
    Vec b1, b2, b3, b4;  // 2d_f

    static ModelParams init(const HyperParams& hyper, Rng& rng);
};

namespace model {

// Everything backprop needs from one attention application.
struct AttentionCache {
    std::vector<Vec> inputs;   // x_j, emb_dim each
    std::vector<bool> mask;
    std::vector<Vec> pre;      // z_j = Wb_k x_j + bb (blockwise), zero where masked
    std::vector<Vec> act;      // relu(z_j)
    Mat logits;                // emb_dim x J
    Mat weights;               // emb_dim x J, rows sum to 1 over unmasked j
    Vec context;
};

struct ForwardCache {
    Example example;
    Vec user_ctx_emb;              // u_{e,t}
    std::vector<double> decay;     // q_j per long slot (0 where masked)
    std::vector<uint32_t> slot;    // position-table column per long slot
    std::vector<Vec> long_emb;     // l_j per long slot
    AttentionCache long_att;       // over h_j
    bool long_empty = false;
    Vec u_prev;                    // u_{t-1}
    AttentionCache short_att;      // over s_0 = u_{t-1}, s_1.. = short items
    bool short_skipped = false;    // NoShort ablation
    Vec u_t;
    // scored candidates: (item, category); [0] is the example target
    std::vector<std::pair<uint32_t, uint32_t>> candidates;
    std::vector<double> scores;
};

// [I(item); C(category)]
Vec item_embedding(uint32_t item, uint32_t category, const ModelParams& p);
// [U(user); C(user_category)]
Vec user_embedding(uint32_t user, uint32_t user_category, const ModelParams& p);

// q = 1 / (1 + day_delta); same-day items share a value
double time_decay(int64_t day_delta);

// Eqs for the generic attention block shared by both layers. Head k sees the
// k-th contiguous feature slice of the inputs and the matching diagonal
// blocks of Wa/Wb (with heads=1 this is the monolithic computation).
AttentionCache feature_wise_attention(const Mat& wa, const Mat& wb,
                                      const Vec& ba, const Vec& bb,
                                      const std::vector<Vec>& inputs,
                                      const std::vector<bool>& mask,
                                      uint32_t heads);

double score(const Vec& u_t, uint32_t item, uint32_t category,
             const ModelParams& p);

// Full forward pass; scores the example target followed by the given
// negatives. The cache keeps every intermediate for backward().
ForwardCache forward(const Example& ex, const ModelParams& p,
                     const std::vector<std::pair<uint32_t, uint32_t>>& negatives,
                     Ablation ablation = Ablation::Full);

}  // namespace model
}  // namespace tlsan
