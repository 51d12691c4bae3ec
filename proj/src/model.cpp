#include "tlsan/model.hpp"

#include <stdexcept>

namespace tlsan {

void HyperParams::validate() const {
    if (d_f == 0) throw std::invalid_argument("d_f must be positive");
    if (emb_dim() % heads != 0)
        throw std::invalid_argument("2*d_f must be divisible by heads");
    if (long_seq_len == 0) throw std::invalid_argument("L_s must be positive");
}

ModelParams ModelParams::init(const HyperParams& hyper, Rng& rng) {
    hyper.validate();
    ModelParams p;
    p.hyper = hyper;
    uint32_t d = hyper.emb_dim();
    p.user_emb = linalg::init_matrix(rng, hyper.n_users, hyper.d_f,
                                     linalg::Init::EmbeddingUniform);
    p.item_emb = linalg::init_matrix(rng, hyper.n_items, hyper.d_f,
                                     linalg::Init::EmbeddingUniform);
    p.cat_emb = linalg::init_matrix(rng, hyper.n_categories, hyper.d_f,
                                    linalg::Init::EmbeddingUniform);
    // neutral position mask to start
    p.pos_weight = linalg::init_matrix(rng, hyper.n_users, hyper.long_seq_len,
                                       linalg::Init::Ones);
    p.gamma = 1.0;
    p.w1 = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    p.w2 = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    p.w3 = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    p.w4 = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    p.b1.assign(d, 0.0);
    p.b2.assign(d, 0.0);
    p.b3.assign(d, 0.0);
    p.b4.assign(d, 0.0);
    return p;
}

namespace model {

Vec item_embedding(uint32_t item, uint32_t category, const ModelParams& p) {
    if (item >= p.hyper.n_items || category >= p.hyper.n_categories)
        throw std::out_of_range("item_embedding: index out of range");
    uint32_t d_f = p.hyper.d_f;
    Vec out(2 * d_f);
    const double* ir = p.item_emb.row(item);
    const double* cr = p.cat_emb.row(category);
    std::copy(ir, ir + d_f, out.begin());
    std::copy(cr, cr + d_f, out.begin() + d_f);
    return out;
}

Vec user_embedding(uint32_t user, uint32_t user_category, const ModelParams& p) {
    if (user >= p.hyper.n_users || user_category >= p.hyper.n_categories)
        throw std::out_of_range("user_embedding: index out of range");
    uint32_t d_f = p.hyper.d_f;
    Vec out(2 * d_f);
    const double* ur = p.user_emb.row(user);
    const double* cr = p.cat_emb.row(user_category);
    std::copy(ur, ur + d_f, out.begin());
    std::copy(cr, cr + d_f, out.begin() + d_f);
    return out;
}

double time_decay(int64_t day_delta) {
    if (day_delta < 0) throw std::invalid_argument("time_decay: negative delta");
    return 1.0 / (1.0 + static_cast<double>(day_delta));
}

AttentionCache feature_wise_attention(const Mat& wa, const Mat& wb,
                                      const Vec& ba, const Vec& bb,
                                      const std::vector<Vec>& inputs,
                                      const std::vector<bool>& mask,
                                      uint32_t heads) {
    size_t n = inputs.size();
    if (mask.size() != n)
        throw std::invalid_argument("attention: mask/input size mismatch");
    if (n == 0) throw std::invalid_argument("attention: no inputs");
    size_t d = inputs[0].size();
    if (heads == 0 || d % heads != 0)
        throw std::invalid_argument("attention: emb_dim not divisible by heads");
    size_t k = d / heads;

    AttentionCache c;
    c.inputs = inputs;
    c.mask = mask;
    c.pre.assign(n, Vec(d, 0.0));
    c.act.assign(n, Vec(d, 0.0));
    c.logits = Mat(d, n);

    for (size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        const Vec& x = inputs[j];
        Vec& z = c.pre[j];
        Vec& r = c.act[j];
        for (uint32_t h = 0; h < heads; ++h) {
            size_t o = h * k;
            linalg::block_matvec(wb, o, o, k, x.data() + o, z.data() + o);
            for (size_t i = 0; i < k; ++i) z[o + i] += bb[o + i];
            kernels::active().relu(z.data() + o, r.data() + o, k);
            Vec e(k);
            linalg::block_matvec_t(wa, o, o, k, r.data() + o, e.data());
            for (size_t i = 0; i < k; ++i)
                c.logits(o + i, j) = e[i] + ba[o + i];
        }
    }

    c.weights = linalg::softmax_over_positions(c.logits, mask);
    c.context.assign(d, 0.0);
    for (size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        for (size_t i = 0; i < d; ++i)
            c.context[i] += c.weights(i, j) * inputs[j][i];
    }
    return c;
}

double score(const Vec& u_t, uint32_t item, uint32_t category,
             const ModelParams& p) {
    return linalg::dot(u_t, item_embedding(item, category, p));
}

ForwardCache forward(const Example& ex, const ModelParams& p,
                     const std::vector<std::pair<uint32_t, uint32_t>>& negatives,
                     Ablation ablation) {
    const auto& hy = p.hyper;
    uint32_t d = hy.emb_dim();
    uint32_t ls = hy.long_seq_len;
    if (ex.long_items.size() > ls)
        throw std::invalid_argument("forward: long sequence exceeds L_s");

    ForwardCache c;
    c.example = ex;
    c.user_ctx_emb = user_embedding(ex.user, ex.user_category, p);

    // time-aware history: left-pad to L_s slots, masked where empty
    size_t j0 = ls - ex.long_items.size();
    std::vector<bool> mask(ls, false);
    std::vector<Vec> h(ls, Vec(d, 0.0));
    c.decay.assign(ls, 0.0);
    c.slot.assign(ls, 0);
    c.long_emb.assign(ls, Vec());
    double g = ablation == Ablation::NoGamma ? 1.0 : p.gamma;
    for (size_t i = 0; i < ex.long_items.size(); ++i) {
        const auto& li = ex.long_items[i];
        size_t s = j0 + i;  // slot L_s-1 = most recent
        mask[s] = true;
        c.decay[s] = time_decay(li.day_delta);
        c.slot[s] = static_cast<uint32_t>(s);
        c.long_emb[s] = item_embedding(li.item, li.category, p);
        double w = g * c.decay[s] * p.pos_weight(ex.user, s);
        h[s] = c.long_emb[s];
        linalg::scale(h[s], w);
    }

    c.long_empty = ex.long_items.empty();
    if (c.long_empty) {
        c.u_prev.assign(d, 0.0);
    } else {
        c.long_att = feature_wise_attention(p.w1, p.w2, p.b1, p.b2, h, mask,
                                            hy.heads);
        c.u_prev = c.long_att.context;
    }

    if (ablation == Ablation::NoShort) {
        c.short_skipped = true;
        c.u_t = linalg::add(c.user_ctx_emb, c.u_prev);
    } else {
        bool u_prev_zero = true;
        for (double v : c.u_prev) u_prev_zero = u_prev_zero && v == 0.0;
        if (ex.short_items.empty() && u_prev_zero)
            throw std::runtime_error("forward: degenerate context");
        std::vector<Vec> s;
        s.push_back(c.u_prev);
        for (const auto& [item, cat] : ex.short_items)
            s.push_back(item_embedding(item, cat, p));
        std::vector<bool> smask(s.size(), true);
        c.short_att = feature_wise_attention(p.w3, p.w4, p.b3, p.b4, s, smask,
                                             hy.heads);
        c.u_t = linalg::add(c.user_ctx_emb, c.short_att.context);
    }

    c.candidates.emplace_back(ex.target, ex.target_category);
    for (const auto& neg : negatives) c.candidates.push_back(neg);
    for (const auto& [item, cat] : c.candidates)
        c.scores.push_back(score(c.u_t, item, cat, p));
    return c;
}

}  // namespace model
}  // namespace tlsan
