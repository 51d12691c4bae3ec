#include "tlsan/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tlsan/io.hpp"

namespace tlsan {

Gradients Gradients::zeros(const HyperParams& hyper) {
    Gradients g;
    uint32_t d = hyper.emb_dim();
    g.dw1 = Mat(d, d);
    g.dw2 = Mat(d, d);
    g.dw3 = Mat(d, d);
    g.dw4 = Mat(d, d);
    g.db1.assign(d, 0.0);
    g.db2.assign(d, 0.0);
    g.db3.assign(d, 0.0);
    g.db4.assign(d, 0.0);
    return g;
}

namespace {

void add_rows(std::unordered_map<uint32_t, Vec>& dst,
              const std::unordered_map<uint32_t, Vec>& src) {
    for (const auto& [idx, row] : src) {
        auto it = dst.find(idx);
        if (it == dst.end()) {
            dst.emplace(idx, row);
        } else {
            linalg::axpy(1.0, row, it->second);
        }
    }
}

void scale_rows(std::unordered_map<uint32_t, Vec>& rows, double alpha) {
    for (auto& [idx, row] : rows) linalg::scale(row, alpha);
}

}  // namespace

void Gradients::accumulate(const Gradients& other) {
    linalg::axpy(1.0, other.dw1.a, dw1.a);
    linalg::axpy(1.0, other.dw2.a, dw2.a);
    linalg::axpy(1.0, other.dw3.a, dw3.a);
    linalg::axpy(1.0, other.dw4.a, dw4.a);
    linalg::axpy(1.0, other.db1, db1);
    linalg::axpy(1.0, other.db2, db2);
    linalg::axpy(1.0, other.db3, db3);
    linalg::axpy(1.0, other.db4, db4);
    dgamma += other.dgamma;
    add_rows(duser, other.duser);
    add_rows(ditem, other.ditem);
    add_rows(dcat, other.dcat);
    add_rows(dpos, other.dpos);
}

void Gradients::scale(double alpha) {
    linalg::scale(dw1.a, alpha);
    linalg::scale(dw2.a, alpha);
    linalg::scale(dw3.a, alpha);
    linalg::scale(dw4.a, alpha);
    linalg::scale(db1, alpha);
    linalg::scale(db2, alpha);
    linalg::scale(db3, alpha);
    linalg::scale(db4, alpha);
    dgamma *= alpha;
    scale_rows(duser, alpha);
    scale_rows(ditem, alpha);
    scale_rows(dcat, alpha);
    scale_rows(dpos, alpha);
}

void TrainConfig::validate() const {
    if (lr_drop_fraction <= 0.0 || lr_drop_fraction >= 1.0)
        throw std::invalid_argument("lr_drop_fraction must be in (0,1)");
    if (l2 < 0.0) throw std::invalid_argument("l2 weight must be >= 0");
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    if (2 * d_f % heads != 0)
        throw std::invalid_argument("2*d_f must be divisible by heads");
}

namespace train {

double sample_loss(double score, int label) {
    // 1 - sigmoid(f) == sigmoid(-f)
    return label ? -linalg::log_sigmoid(score) : -linalg::log_sigmoid(-score);
}

double loss(const std::vector<Sample>& samples, double l2,
            const ModelParams& params, const TouchedRows& touched) {
    if (samples.empty()) throw std::invalid_argument("loss: no samples");
    double total = 0.0;
    for (const auto& s : samples) total += sample_loss(s.score, s.label);
    if (l2 > 0.0) {
        double ss = 0.0;
        auto sumsq = [](const double* p, size_t n) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += p[i] * p[i];
            return s;
        };
        for (uint32_t u : touched.users)
            ss += sumsq(params.user_emb.row(u), params.hyper.d_f);
        for (uint32_t i : touched.items)
            ss += sumsq(params.item_emb.row(i), params.hyper.d_f);
        for (const Mat* w : {&params.w1, &params.w2, &params.w3, &params.w4})
            ss += sumsq(w->a.data(), w->a.size());
        for (const Vec* b : {&params.b1, &params.b2, &params.b3, &params.b4})
            ss += sumsq(b->data(), b->size());
        total += l2 * ss;
    }
    return total;
}

namespace {

using model::AttentionCache;

// Backprop through one feature-wise attention block. Returns dL/dx_j and
// accumulates the weight/bias gradients. Mirrors the forward exactly:
// per-dimension softmax Jacobian, then the per-head block matvecs.
std::vector<Vec> attention_backward(const AttentionCache& c, const Vec& dctx,
                                    const Mat& wa, const Mat& wb, uint32_t heads,
                                    Mat& dwa, Mat& dwb, Vec& dba, Vec& dbb) {
    size_t n = c.inputs.size();
    size_t d = dctx.size();
    size_t k = d / heads;
    std::vector<Vec> dx(n, Vec(d, 0.0));
    Mat de(d, n);

    for (size_t dim = 0; dim < d; ++dim) {
        double s = 0.0;
        for (size_t j = 0; j < n; ++j) {
            if (!c.mask[j]) continue;
            s += c.weights(dim, j) * dctx[dim] * c.inputs[j][dim];
        }
        for (size_t j = 0; j < n; ++j) {
            if (!c.mask[j]) continue;
            double da = dctx[dim] * c.inputs[j][dim];
            de(dim, j) = c.weights(dim, j) * (da - s);
            dx[j][dim] += c.weights(dim, j) * dctx[dim];
        }
    }

    Vec dek(k), dr(k), dz(k), tmp(k);
    for (size_t j = 0; j < n; ++j) {
        if (!c.mask[j]) continue;
        const Vec& x = c.inputs[j];
        const Vec& z = c.pre[j];
        const Vec& r = c.act[j];
        for (uint32_t h = 0; h < heads; ++h) {
            size_t o = h * k;
            for (size_t i = 0; i < k; ++i) dek[i] = de(o + i, j);
            // e = Wa_k^T r + ba  =>  dr = Wa_k de, dWa[ii,i] += r[ii] de[i]
            linalg::block_matvec(wa, o, o, k, dek.data(), dr.data());
            for (size_t i = 0; i < k; ++i) dba[o + i] += dek[i];
            for (size_t ii = 0; ii < k; ++ii)
                for (size_t i = 0; i < k; ++i)
                    dwa(o + ii, o + i) += r[o + ii] * dek[i];
            // relu subgradient: 0 at exactly 0
            for (size_t i = 0; i < k; ++i)
                dz[i] = z[o + i] > 0.0 ? dr[i] : 0.0;
            // z = Wb_k x + bb  =>  dx += Wb_k^T dz, dWb[i,ii] += dz[i] x[ii]
            for (size_t i = 0; i < k; ++i) {
                dbb[o + i] += dz[i];
                kernels::active().axpy(dz[i], x.data() + o,
                                       dwb.row(o + i) + o, k);
            }
            linalg::block_matvec_t(wb, o, o, k, dz.data(), tmp.data());
            for (size_t ii = 0; ii < k; ++ii) dx[j][o + ii] += tmp[ii];
        }
    }
    return dx;
}

Vec& row_grad(std::unordered_map<uint32_t, Vec>& m, uint32_t idx, size_t len) {
    auto it = m.find(idx);
    if (it == m.end()) it = m.emplace(idx, Vec(len, 0.0)).first;
    return it->second;
}

}  // namespace

Gradients backward(const model::ForwardCache& cache,
                   const std::vector<double>& dscore, const ModelParams& params,
                   Ablation ablation) {
    const auto& hy = params.hyper;
    uint32_t d_f = hy.d_f;
    uint32_t d = hy.emb_dim();
    if (dscore.size() != cache.scores.size())
        throw std::invalid_argument("backward: dscore/scores size mismatch");

    Gradients g = Gradients::zeros(hy);
    const Example& ex = cache.example;

    // score path: f_s = u_t . [I(cand); C(cand_cat)]
    Vec du_t(d, 0.0);
    for (size_t s = 0; s < cache.candidates.size(); ++s) {
        double ds = dscore[s];
        if (ds == 0.0) continue;
        auto [item, cat] = cache.candidates[s];
        Vec emb = model::item_embedding(item, cat, params);
        linalg::axpy(ds, emb, du_t);
        Vec& di = row_grad(g.ditem, item, d_f);
        Vec& dc = row_grad(g.dcat, cat, d_f);
        kernels::active().axpy(ds, cache.u_t.data(), di.data(), d_f);
        kernels::active().axpy(ds, cache.u_t.data() + d_f, dc.data(), d_f);
    }

    // u_t = u_{e,t} + context
    {
        Vec& du = row_grad(g.duser, ex.user, d_f);
        Vec& dc = row_grad(g.dcat, ex.user_category, d_f);
        kernels::active().axpy(1.0, du_t.data(), du.data(), d_f);
        kernels::active().axpy(1.0, du_t.data() + d_f, dc.data(), d_f);
    }

    Vec du_prev(d, 0.0);
    if (cache.short_skipped) {
        du_prev = du_t;
    } else {
        auto dx = attention_backward(cache.short_att, du_t, params.w3,
                                     params.w4, hy.heads, g.dw3, g.dw4, g.db3,
                                     g.db4);
        du_prev = dx[0];  // s_0 = u_{t-1}
        for (size_t j = 1; j < dx.size(); ++j) {
            auto [item, cat] = ex.short_items[j - 1];
            Vec& di = row_grad(g.ditem, item, d_f);
            Vec& dc = row_grad(g.dcat, cat, d_f);
            kernels::active().axpy(1.0, dx[j].data(), di.data(), d_f);
            kernels::active().axpy(1.0, dx[j].data() + d_f, dc.data(), d_f);
        }
    }

    if (!cache.long_empty) {
        auto dh = attention_backward(cache.long_att, du_prev, params.w1,
                                     params.w2, hy.heads, g.dw1, g.dw2, g.db1,
                                     g.db2);
        double geff = ablation == Ablation::NoGamma ? 1.0 : params.gamma;
        size_t j0 = hy.long_seq_len - ex.long_items.size();
        Vec& dp = row_grad(g.dpos, ex.user, hy.long_seq_len);
        for (size_t i = 0; i < ex.long_items.size(); ++i) {
            size_t slot = j0 + i;
            const auto& li = ex.long_items[i];
            const Vec& l = cache.long_emb[slot];
            double q = cache.decay[slot];
            double pw = params.pos_weight(ex.user, slot);
            double dot_dl =
                kernels::active().dot(dh[slot].data(), l.data(), d);
            if (ablation != Ablation::NoGamma) g.dgamma += q * pw * dot_dl;
            dp[slot] += geff * q * dot_dl;
            double w = geff * q * pw;
            Vec& di = row_grad(g.ditem, li.item, d_f);
            Vec& dc = row_grad(g.dcat, li.category, d_f);
            kernels::active().axpy(w, dh[slot].data(), di.data(), d_f);
            kernels::active().axpy(w, dh[slot].data() + d_f, dc.data(), d_f);
        }
    }
    return g;
}

void add_l2_gradient(Gradients& grads, const ModelParams& params, double l2,
                     const TouchedRows& touched) {
    if (l2 == 0.0) return;
    double c = 2.0 * l2;
    uint32_t d_f = params.hyper.d_f;
    for (uint32_t u : touched.users) {
        Vec& du = row_grad(grads.duser, u, d_f);
        kernels::active().axpy(c, params.user_emb.row(u), du.data(), d_f);
    }
    for (uint32_t i : touched.items) {
        Vec& di = row_grad(grads.ditem, i, d_f);
        kernels::active().axpy(c, params.item_emb.row(i), di.data(), d_f);
    }
    linalg::axpy(c, params.w1.a, grads.dw1.a);
    linalg::axpy(c, params.w2.a, grads.dw2.a);
    linalg::axpy(c, params.w3.a, grads.dw3.a);
    linalg::axpy(c, params.w4.a, grads.dw4.a);
    linalg::axpy(c, params.b1, grads.db1);
    linalg::axpy(c, params.b2, grads.db2);
    linalg::axpy(c, params.b3, grads.db3);
    linalg::axpy(c, params.b4, grads.db4);
}

namespace {

void apply_dense(Vec& theta, const Vec& grad, double lr, const char* name) {
    for (size_t i = 0; i < theta.size(); ++i) {
        double v = theta[i] - lr * grad[i];
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("sgd_step: non-finite update in ") + name);
        theta[i] = v;
    }
}

void apply_rows(Mat& theta, const std::unordered_map<uint32_t, Vec>& rows,
                double lr, const char* name) {
    for (const auto& [idx, grad] : rows) {
        double* r = theta.row(idx);
        for (size_t i = 0; i < theta.cols; ++i) {
            double v = r[i] - lr * grad[i];
            if (!std::isfinite(v))
                throw std::runtime_error(std::string("sgd_step: non-finite update in ") + name);
            r[i] = v;
        }
    }
}

}  // namespace

void sgd_step(ModelParams& params, const Gradients& grads, double lr) {
    apply_dense(params.w1.a, grads.dw1.a, lr, "w1");
    apply_dense(params.w2.a, grads.dw2.a, lr, "w2");
    apply_dense(params.w3.a, grads.dw3.a, lr, "w3");
    apply_dense(params.w4.a, grads.dw4.a, lr, "w4");
    apply_dense(params.b1, grads.db1, lr, "b1");
    apply_dense(params.b2, grads.db2, lr, "b2");
    apply_dense(params.b3, grads.db3, lr, "b3");
    apply_dense(params.b4, grads.db4, lr, "b4");
    double gm = params.gamma - lr * grads.dgamma;
    if (!std::isfinite(gm))
        throw std::runtime_error("sgd_step: non-finite update in gamma");
    params.gamma = gm;
    apply_rows(params.user_emb, grads.duser, lr, "user_emb");
    apply_rows(params.item_emb, grads.ditem, lr, "item_emb");
    apply_rows(params.cat_emb, grads.dcat, lr, "cat_emb");
    apply_rows(params.pos_weight, grads.dpos, lr, "pos_weight");
}

namespace {

double* param_entry(ModelParams& p, const std::string& tensor, size_t i) {
    if (tensor == "user_emb") return &p.user_emb.a[i];
    if (tensor == "item_emb") return &p.item_emb.a[i];
    if (tensor == "cat_emb") return &p.cat_emb.a[i];
    if (tensor == "pos_weight") return &p.pos_weight.a[i];
    if (tensor == "gamma") return &p.gamma;
    if (tensor == "w1") return &p.w1.a[i];
    if (tensor == "w2") return &p.w2.a[i];
    if (tensor == "w3") return &p.w3.a[i];
    if (tensor == "w4") return &p.w4.a[i];
    if (tensor == "b1") return &p.b1[i];
    if (tensor == "b2") return &p.b2[i];
    if (tensor == "b3") return &p.b3[i];
    if (tensor == "b4") return &p.b4[i];
    throw std::logic_error("unknown tensor " + tensor);
}

double grad_entry(const Gradients& g, const HyperParams& hy,
                  const std::string& tensor, size_t i) {
    auto sparse = [&](const std::unordered_map<uint32_t, Vec>& rows,
                      size_t cols) {
        auto it = rows.find(static_cast<uint32_t>(i / cols));
        return it == rows.end() ? 0.0 : it->second[i % cols];
    };
    if (tensor == "user_emb") return sparse(g.duser, hy.d_f);
    if (tensor == "item_emb") return sparse(g.ditem, hy.d_f);
    if (tensor == "cat_emb") return sparse(g.dcat, hy.d_f);
    if (tensor == "pos_weight") return sparse(g.dpos, hy.long_seq_len);
    if (tensor == "gamma") return g.dgamma;
    if (tensor == "w1") return g.dw1.a[i];
    if (tensor == "w2") return g.dw2.a[i];
    if (tensor == "w3") return g.dw3.a[i];
    if (tensor == "w4") return g.dw4.a[i];
    if (tensor == "b1") return g.db1[i];
    if (tensor == "b2") return g.db2[i];
    if (tensor == "b3") return g.db3[i];
    if (tensor == "b4") return g.db4[i];
    throw std::logic_error("unknown tensor " + tensor);
}

size_t tensor_size(const ModelParams& p, const std::string& tensor) {
    if (tensor == "user_emb") return p.user_emb.a.size();
    if (tensor == "item_emb") return p.item_emb.a.size();
    if (tensor == "cat_emb") return p.cat_emb.a.size();
    if (tensor == "pos_weight") return p.pos_weight.a.size();
    if (tensor == "gamma") return 1;
    if (tensor == "b1" || tensor == "b2" || tensor == "b3" || tensor == "b4")
        return p.b1.size();
    return p.w1.a.size();
}

}  // namespace

GradCheckReport grad_check(const HyperParams& hyper, uint64_t seed,
                           double fd_step,
                           const std::function<void(Gradients&)>& tamper) {
    HyperParams hy = hyper;
    if (hy.n_users == 0) hy.n_users = 3;
    if (hy.n_items == 0) hy.n_items = 8;
    if (hy.n_categories == 0) hy.n_categories = 4;
    hy.validate();

    Rng rng(seed);
    ModelParams params = ModelParams::init(hy, rng);
    double l2 = 1e-3;  // nonzero so the regularizer path is checked too

    static const char* kTensors[] = {"user_emb", "item_emb", "cat_emb",
                                     "pos_weight", "gamma", "w1", "w2", "w3",
                                     "w4", "b1", "b2", "b3", "b4"};

    Example ex;
    std::vector<std::pair<uint32_t, uint32_t>> negs;
    model::ForwardCache cache;
    Gradients analytic = Gradients::zeros(hy);
    TouchedRows touched;
    // redraw until no relu pre-activation sits near its kink and no gradient
    // entry is so small that finite-difference roundoff would dominate it
    for (int attempt = 0;; ++attempt) {
        ex = Example{};
        ex.user = static_cast<uint32_t>(rng.below(hy.n_users));
        ex.user_category = static_cast<uint32_t>(rng.below(hy.n_categories));
        size_t n_long = 1 + rng.below(hy.long_seq_len);
        std::vector<int64_t> deltas;
        for (size_t i = 0; i < n_long; ++i)
            deltas.push_back(static_cast<int64_t>(rng.below(15)));
        std::sort(deltas.rbegin(), deltas.rend());
        for (size_t i = 0; i < n_long; ++i)
            ex.long_items.push_back({static_cast<uint32_t>(rng.below(hy.n_items)),
                                     static_cast<uint32_t>(rng.below(hy.n_categories)),
                                     deltas[i]});
        size_t n_short = 1 + rng.below(3);
        for (size_t i = 0; i < n_short; ++i)
            ex.short_items.emplace_back(static_cast<uint32_t>(rng.below(hy.n_items)),
                                        static_cast<uint32_t>(rng.below(hy.n_categories)));
        ex.target = static_cast<uint32_t>(rng.below(hy.n_items));
        ex.target_category = static_cast<uint32_t>(rng.below(hy.n_categories));
        negs = {{static_cast<uint32_t>(rng.below(hy.n_items)),
                 static_cast<uint32_t>(rng.below(hy.n_categories))}};

        cache = model::forward(ex, params, negs);
        double min_abs = 1e300;
        for (const auto* att : {&cache.long_att, &cache.short_att})
            for (size_t j = 0; j < att->pre.size(); ++j) {
                if (!att->mask[j]) continue;
                for (double z : att->pre[j]) min_abs = std::min(min_abs, std::abs(z));
            }
        // the margin must comfortably exceed the finite-difference step, or
        // a perturbation can push a pre-activation across the relu kink
        if (min_abs <= 100.0 * fd_step && attempt < 50) continue;

        touched = TouchedRows{};
        touched.users.insert(ex.user);
        touched.items.insert(ex.target);
        for (const auto& li : ex.long_items) touched.items.insert(li.item);
        for (const auto& [item, cat] : ex.short_items) touched.items.insert(item);
        for (const auto& [item, cat] : negs) touched.items.insert(item);

        std::vector<double> ds;
        ds.push_back(linalg::sigmoid(cache.scores[0]) - 1.0);
        for (size_t s = 1; s < cache.scores.size(); ++s)
            ds.push_back(linalg::sigmoid(cache.scores[s]));
        analytic = backward(cache, ds, params);
        add_l2_gradient(analytic, params, l2, touched);

        // entries with a tiny nonzero derivative sit at the double-precision
        // noise floor of the central difference; structural zeros are exact
        // on both sides and stay comparable
        bool noisy = false;
        for (const char* t : kTensors) {
            size_t n = tensor_size(params, t);
            for (size_t i = 0; i < n && !noisy; ++i) {
                double a = std::abs(grad_entry(analytic, hy, t, i));
                noisy = a > 1e-12 && a < 1e-7;
            }
            if (noisy) break;
        }
        if (!noisy || attempt >= 50) break;
    }

    auto loss_at = [&](ModelParams& p) {
        auto c = model::forward(ex, p, negs);
        std::vector<Sample> samples;
        samples.push_back({c.scores[0], 1});
        for (size_t s = 1; s < c.scores.size(); ++s)
            samples.push_back({c.scores[s], 0});
        return loss(samples, l2, p, touched);
    };

    if (tamper) tamper(analytic);

    GradCheckReport rep;
    for (const char* t : kTensors) {
        double worst = 0.0;
        size_t n = tensor_size(params, t);
        for (size_t i = 0; i < n; ++i) {
            double* theta = param_entry(params, t, i);
            double orig = *theta;
            *theta = orig + fd_step;
            double lp = loss_at(params);
            *theta = orig - fd_step;
            double lm = loss_at(params);
            *theta = orig;
            double numeric = (lp - lm) / (2.0 * fd_step);
            double a = grad_entry(analytic, hy, t, i);
            double err = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, err);
        }
        rep.per_tensor.emplace_back(t, worst);
        rep.max_error = std::max(rep.max_error, worst);
    }
    return rep;
}

TrainReport train_loop(const Dataset& dataset, const TrainConfig& config,
                       ModelParams& params, const std::string& checkpoint_path,
                       const EvalHook& on_step) {
    config.validate();
    if (dataset.histories.empty())
        throw std::invalid_argument("train_loop: empty dataset");
    const auto& hy = params.hyper;

    std::vector<uint32_t> users;
    for (const auto& h : dataset.histories)
        if (h.sessions.size() >= 2) users.push_back(h.user);
    if (users.empty())
        throw std::invalid_argument("train_loop: no trainable users");

    std::vector<std::unordered_set<uint32_t>> item_sets(dataset.histories.size());
    for (const auto& h : dataset.histories)
        item_sets[h.user] = ingest::user_item_set(h);
    // item -> category (fixed per item by construction)
    std::vector<uint32_t> item_cat(hy.n_items, kUnknownCategory);
    for (const auto& h : dataset.histories)
        for (const auto& s : h.sessions)
            for (const auto& [item, cat] : s.items) item_cat[item] = cat;

    uint64_t steps_per_epoch = (users.size() + config.batch - 1) / config.batch;
    uint64_t total_steps = steps_per_epoch * config.epochs;
    auto drop_step =
        static_cast<uint64_t>(config.lr_drop_fraction *
                              static_cast<double>(total_steps));

    Rng rng(config.seed);
    TrainReport rep;
    rep.total_steps = total_steps;
    uint64_t step = 0;
    double last_epoch_loss = 0.0;
    ModelParams snapshot = params;

    for (uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
        snapshot = params;
        // Fisher-Yates with the run rng
        for (size_t i = users.size(); i > 1; --i)
            std::swap(users[i - 1], users[rng.below(i)]);

        double epoch_loss_sum = 0.0;
        uint64_t epoch_batches = 0;
        for (size_t b0 = 0; b0 < users.size(); b0 += config.batch) {
            size_t b1 = std::min(b0 + config.batch, users.size());
            Gradients acc = Gradients::zeros(hy);
            TouchedRows touched;
            double batch_loss = 0.0;
            size_t n_samples = 0;

            for (size_t bi = b0; bi < b1; ++bi) {
                uint32_t u = users[bi];
                auto pair = ingest::build_examples(dataset.histories[u],
                                                   hy.long_seq_len, rng);
                const Example& ex = *pair.train;
                std::vector<std::pair<uint32_t, uint32_t>> negs;
                for (uint32_t k = 0; k < config.negatives_per_positive; ++k) {
                    uint32_t neg =
                        ingest::sample_negative(rng, item_sets[u], hy.n_items);
                    negs.emplace_back(neg, item_cat[neg]);
                }
                auto cache = model::forward(ex, params, negs, config.ablation);
                std::vector<double> dscore(cache.scores.size());
                for (size_t s = 0; s < cache.scores.size(); ++s) {
                    int y = s == 0 ? 1 : 0;
                    batch_loss += sample_loss(cache.scores[s], y);
                    dscore[s] = linalg::sigmoid(cache.scores[s]) - y;
                }
                n_samples += cache.scores.size();
                acc.accumulate(backward(cache, dscore, params, config.ablation));
                touched.users.insert(u);
                touched.items.insert(ex.target);
                for (const auto& li : ex.long_items) touched.items.insert(li.item);
                for (const auto& [it, ct] : ex.short_items) touched.items.insert(it);
                for (const auto& [it, ct] : negs) touched.items.insert(it);
            }

            // mean data gradient over the batch; L2 term applied per step
            acc.scale(1.0 / static_cast<double>(b1 - b0));
            add_l2_gradient(acc, params, config.l2, touched);

            ++step;
            double lr = step < drop_step ? config.lr_initial : config.lr_after;
            double mean_loss = batch_loss / static_cast<double>(n_samples);
            if (!std::isfinite(mean_loss)) {
                params = snapshot;
                if (!checkpoint_path.empty())
                    io::write_checkpoint(params, checkpoint_path);
                throw std::runtime_error("train_loop: loss diverged at step " +
                                         std::to_string(step));
            }
            try {
                sgd_step(params, acc, lr);
            } catch (const std::exception&) {
                params = snapshot;
                if (!checkpoint_path.empty())
                    io::write_checkpoint(params, checkpoint_path);
                throw;
            }
            rep.step_loss.push_back(mean_loss);
            epoch_loss_sum += mean_loss;
            ++epoch_batches;
            if (on_step) on_step(step, epoch, lr, mean_loss, params);
        }
        last_epoch_loss = epoch_loss_sum / static_cast<double>(epoch_batches);
    }

    rep.final_loss = last_epoch_loss;
    if (!checkpoint_path.empty()) {
        io::write_checkpoint(params, checkpoint_path);
        rep.checkpoint_path = checkpoint_path;
    }
    return rep;
}

}  // namespace train
}  // namespace tlsan
