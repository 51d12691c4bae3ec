#include <doctest.h>

#include <cmath>
#include <vector>

#include "tlsan/model.hpp"

using namespace tlsan;

namespace {

HyperParams small_hyper(uint32_t d_f = 4, uint32_t ls = 3, uint32_t heads = 2) {
    HyperParams h;
    h.d_f = d_f;
    h.long_seq_len = ls;
    h.heads = heads;
    h.n_users = 3;
    h.n_items = 8;
    h.n_categories = 4;
    return h;
}

Example small_example() {
    Example ex;
    ex.user = 1;
    ex.user_category = 2;
    ex.long_items = {{3, 1, 4}, {5, 2, 1}};
    ex.short_items = {{0, 3}, {6, 1}};
    ex.target = 2;
    ex.target_category = 2;
    return ex;
}

// independent per-dimension recomputation of the attention layer with plain
// loops (no shared kernels, no shared softmax)
model::AttentionCache naive_attention(const Mat& wa, const Mat& wb,
                                      const Vec& ba, const Vec& bb,
                                      const std::vector<Vec>& inputs,
                                      const std::vector<bool>& mask,
                                      uint32_t heads) {
    size_t n = inputs.size();
    size_t d = inputs[0].size();
    size_t k = d / heads;
    Mat logits(d, n), weights(d, n);
    for (size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        for (uint32_t h = 0; h < heads; ++h) {
            size_t o = h * k;
            std::vector<double> r(k);
            for (size_t i = 0; i < k; ++i) {
                double z = bb[o + i];
                for (size_t jj = 0; jj < k; ++jj)
                    z += wb.a[(o + i) * d + (o + jj)] * inputs[j][o + jj];
                r[i] = z > 0.0 ? z : 0.0;
            }
            for (size_t i = 0; i < k; ++i) {
                double e = ba[o + i];
                for (size_t ii = 0; ii < k; ++ii)
                    e += wa.a[(o + ii) * d + (o + i)] * r[ii];
                logits(o + i, j) = e;
            }
        }
    }
    for (size_t i = 0; i < d; ++i) {
        double mx = -1e300;
        for (size_t j = 0; j < n; ++j)
            if (mask[j]) mx = std::max(mx, logits(i, j));
        double denom = 0.0;
        for (size_t j = 0; j < n; ++j)
            if (mask[j]) denom += std::exp(logits(i, j) - mx);
        for (size_t j = 0; j < n; ++j)
            if (mask[j]) weights(i, j) = std::exp(logits(i, j) - mx) / denom;
    }
    model::AttentionCache c;
    c.logits = logits;
    c.weights = weights;
    c.context.assign(d, 0.0);
    for (size_t j = 0; j < n; ++j)
        if (mask[j])
            for (size_t i = 0; i < d; ++i)
                c.context[i] += weights(i, j) * inputs[j][i];
    return c;
}

}  // namespace

TEST_CASE("embeddings concatenate the id and category halves") {
    Rng rng(1);
    auto p = ModelParams::init(small_hyper(), rng);
    auto e = model::item_embedding(3, 1, p);
    REQUIRE(e.size() == 8);
    for (uint32_t i = 0; i < 4; ++i) {
        CHECK(e[i] == p.item_emb(3, i));
        CHECK(e[4 + i] == p.cat_emb(1, i));
    }
    auto u = model::user_embedding(2, 3, p);
    for (uint32_t i = 0; i < 4; ++i) {
        CHECK(u[i] == p.user_emb(2, i));
        CHECK(u[4 + i] == p.cat_emb(3, i));
    }
    CHECK_THROWS(model::item_embedding(99, 0, p));
}

TEST_CASE("time_decay follows 1/(1+delta)") {
    CHECK(model::time_decay(0) == 1.0);
    CHECK(model::time_decay(1) == 0.5);
    CHECK(model::time_decay(9) == doctest::Approx(0.1));
    CHECK_THROWS(model::time_decay(-1));
}

TEST_CASE("attention matches the naive per-dimension recomputation") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        uint32_t heads = 1 + static_cast<uint32_t>(rng.below(3));
        size_t k = 1 + rng.below(4);
        size_t d = heads * k;
        size_t n = 1 + rng.below(5);
        Mat wa = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
        Mat wb = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
        Vec ba(d), bb(d);
        for (auto& x : ba) x = rng.uniform(-0.5, 0.5);
        for (auto& x : bb) x = rng.uniform(-0.5, 0.5);
        std::vector<Vec> inputs(n, Vec(d));
        for (auto& v : inputs)
            for (auto& x : v) x = rng.uniform(-2.0, 2.0);
        std::vector<bool> mask(n);
        bool any = false;
        for (size_t j = 0; j < n; ++j) {
            mask[j] = rng.uniform() < 0.8;
            any = any || mask[j];
        }
        if (!any) mask[0] = true;

        auto got = model::feature_wise_attention(wa, wb, ba, bb, inputs, mask, heads);
        auto want = naive_attention(wa, wb, ba, bb, inputs, mask, heads);
        for (size_t i = 0; i < d; ++i) {
            CHECK(got.context[i] == doctest::Approx(want.context[i]).epsilon(1e-12));
            for (size_t j = 0; j < n; ++j)
                CHECK(got.weights(i, j) ==
                      doctest::Approx(want.weights(i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("a single unmasked input receives all the attention") {
    Rng rng(3);
    size_t d = 6;
    Mat wa = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    Mat wb = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    Vec ba(d, 0.1), bb(d, -0.2);
    std::vector<Vec> inputs(3, Vec(d));
    for (auto& v : inputs)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    std::vector<bool> mask = {false, true, false};
    auto c = model::feature_wise_attention(wa, wb, ba, bb, inputs, mask, 2);
    for (size_t i = 0; i < d; ++i) {
        CHECK(c.weights(i, 1) == doctest::Approx(1.0));
        CHECK(c.weights(i, 0) == 0.0);
        CHECK(c.context[i] == doctest::Approx(inputs[1][i]));
    }
}

TEST_CASE("with block-diagonal weights one head equals many") {
    Rng rng(9);
    size_t d = 8;
    uint32_t heads = 4;
    size_t k = d / heads;
    Mat wa = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    Mat wb = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    // zero everything outside the head-diagonal blocks
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j)
            if (i / k != j / k) {
                wa(i, j) = 0.0;
                wb(i, j) = 0.0;
            }
    Vec ba(d), bb(d);
    for (auto& x : ba) x = rng.uniform(-0.3, 0.3);
    for (auto& x : bb) x = rng.uniform(-0.3, 0.3);
    std::vector<Vec> inputs(4, Vec(d));
    for (auto& v : inputs)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    std::vector<bool> mask(4, true);

    auto multi = model::feature_wise_attention(wa, wb, ba, bb, inputs, mask, heads);
    auto mono = model::feature_wise_attention(wa, wb, ba, bb, inputs, mask, 1);
    for (size_t i = 0; i < d; ++i)
        CHECK(multi.context[i] == doctest::Approx(mono.context[i]).epsilon(1e-12));
}

TEST_CASE("head count changes the output when blocks interact") {
    Rng rng(10);
    size_t d = 8;
    Mat wa = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    Mat wb = linalg::init_matrix(rng, d, d, linalg::Init::GlorotUniform);
    Vec ba(d, 0.0), bb(d, 0.0);
    std::vector<Vec> inputs(3, Vec(d));
    for (auto& v : inputs)
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    std::vector<bool> mask(3, true);
    auto four = model::feature_wise_attention(wa, wb, ba, bb, inputs, mask, 4);
    auto one = model::feature_wise_attention(wa, wb, ba, bb, inputs, mask, 1);
    double diff = 0.0;
    for (size_t i = 0; i < d; ++i)
        diff = std::max(diff, std::abs(four.context[i] - one.context[i]));
    CHECK(diff > 1e-8);
}

TEST_CASE("forward pass structure") {
    Rng rng(2);
    auto p = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    auto c = model::forward(ex, p, {{4, 0}, {7, 3}});

    REQUIRE(c.scores.size() == 3);
    CHECK(c.candidates[0].first == ex.target);
    // score is the plain dot product with the candidate embedding
    for (size_t i = 0; i < 3; ++i) {
        auto emb = model::item_embedding(c.candidates[i].first,
                                         c.candidates[i].second, p);
        CHECK(c.scores[i] == doctest::Approx(linalg::dot(c.u_t, emb)));
    }
    // left padding: slot 0 masked, slots 1..2 carry the two long items
    CHECK(c.long_att.mask == std::vector<bool>{false, true, true});
    CHECK(c.decay[1] == doctest::Approx(0.2));
    CHECK(c.decay[2] == doctest::Approx(0.5));
    // u_t = u_e + short context
    for (size_t i = 0; i < c.u_t.size(); ++i)
        CHECK(c.u_t[i] ==
              doctest::Approx(c.user_ctx_emb[i] + c.short_att.context[i]));
}

TEST_CASE("history slots scale with gamma, decay and position weight") {
    Rng rng(4);
    auto p = ModelParams::init(small_hyper(), rng);
    p.gamma = 1.7;
    p.pos_weight(1, 2) = 0.6;
    auto ex = small_example();
    ex.long_items = {{3, 1, 4}};  // one item -> slot 2
    auto c = model::forward(ex, p, {});
    auto l = model::item_embedding(3, 1, p);
    double w = 1.7 * model::time_decay(4) * 0.6;
    for (size_t i = 0; i < l.size(); ++i)
        CHECK(c.long_att.inputs[2][i] == doctest::Approx(w * l[i]));
}

TEST_CASE("NoGamma pins gamma at one") {
    Rng rng(5);
    auto p = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    p.gamma = 5.0;
    auto pinned = model::forward(ex, p, {}, Ablation::NoGamma);
    p.gamma = 1.0;
    auto unit = model::forward(ex, p, {}, Ablation::Full);
    for (size_t i = 0; i < pinned.u_t.size(); ++i)
        CHECK(pinned.u_t[i] == doctest::Approx(unit.u_t[i]));
}

TEST_CASE("NoShort bypasses the short-term layer") {
    Rng rng(6);
    auto p = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    auto c = model::forward(ex, p, {}, Ablation::NoShort);
    CHECK(c.short_skipped);
    for (size_t i = 0; i < c.u_t.size(); ++i)
        CHECK(c.u_t[i] == doctest::Approx(c.user_ctx_emb[i] + c.u_prev[i]));
}

TEST_CASE("empty long history with a short session still works") {
    Rng rng(8);
    auto p = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    ex.long_items.clear();
    auto c = model::forward(ex, p, {});
    CHECK(c.long_empty);
    for (double v : c.u_prev) CHECK(v == 0.0);
    CHECK(std::isfinite(c.scores[0]));

    ex.short_items.clear();
    CHECK_THROWS_WITH(model::forward(ex, p, {}),
                      doctest::Contains("degenerate"));
}

TEST_CASE("consistent item relabeling leaves scores unchanged") {
    Rng rng(11);
    auto p = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    auto base = model::forward(ex, p, {});

    // swap item rows 3 <-> 5 and relabel the example accordingly
    auto q = p;
    for (uint32_t i = 0; i < p.hyper.d_f; ++i)
        std::swap(q.item_emb(3, i), q.item_emb(5, i));
    auto relabel = [](uint32_t x) { return x == 3 ? 5u : x == 5 ? 3u : x; };
    auto ex2 = ex;
    for (auto& li : ex2.long_items) li.item = relabel(li.item);
    for (auto& [item, cat] : ex2.short_items) item = relabel(item);
    ex2.target = relabel(ex2.target);
    auto swapped = model::forward(ex2, q, {});
    for (size_t i = 0; i < base.scores.size(); ++i)
        CHECK(base.scores[i] == doctest::Approx(swapped.scores[i]).epsilon(1e-15));
}

TEST_CASE("padding slots carry no attention weight") {
    Rng rng(12);
    auto p = ModelParams::init(small_hyper(8, 5, 2), rng);
    auto ex = small_example();
    ex.long_items = {{3, 1, 2}, {5, 2, 0}};  // 2 of 5 slots used
    auto c = model::forward(ex, p, {});
    for (size_t i = 0; i < c.long_att.weights.rows; ++i) {
        CHECK(c.long_att.weights(i, 0) == 0.0);
        CHECK(c.long_att.weights(i, 1) == 0.0);
        CHECK(c.long_att.weights(i, 2) == 0.0);
        double sum = c.long_att.weights(i, 3) + c.long_att.weights(i, 4);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}
