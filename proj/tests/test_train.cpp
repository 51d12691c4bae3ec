#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "tlsan/io.hpp"
#include "tlsan/train.hpp"

using namespace tlsan;

namespace {

HyperParams small_hyper() {
    HyperParams h;
    h.d_f = 4;
    h.long_seq_len = 3;
    h.heads = 2;
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

// tiny dataset: every user has two multi-item sessions plus a single-item
// tail, so each contributes one train and one test example
Dataset toy_dataset(uint32_t n_users, uint32_t n_items, uint64_t seed) {
    Dataset ds;
    ds.manifest.n_users = n_users;
    ds.manifest.n_items = n_items;
    ds.manifest.n_categories = 4;
    ds.manifest.long_seq_len = 4;
    ds.manifest.seed = seed;
    for (uint32_t u = 0; u < n_users; ++u) {
        ds.manifest.user_ids.push_back("u" + std::to_string(u));
    }
    for (uint32_t i = 0; i < n_items; ++i)
        ds.manifest.item_ids.push_back("i" + std::to_string(i));
    ds.manifest.category_labels = {kUnknownCategoryLabel, "a", "b", "c"};
    Rng rng(seed);
    ds.histories.resize(n_users);
    for (uint32_t u = 0; u < n_users; ++u) {
        auto& h = ds.histories[u];
        h.user = u;
        auto item = [&] { return static_cast<uint32_t>(rng.below(n_items)); };
        auto cat = [&] { return 1 + static_cast<uint32_t>(rng.below(3)); };
        Session s1{2, {}}, s2{5, {}}, s3{6, {}};
        for (int i = 0; i < 3; ++i) s1.items.emplace_back(item(), cat());
        for (int i = 0; i < 3; ++i) s2.items.emplace_back(item(), cat());
        s3.items.emplace_back(item(), cat());
        h.sessions = {s1, s2, s3};
    }
    ds.manifest.n_samples = n_users * 7;
    return ds;
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sample_loss matches the cross-entropy formula") {
    CHECK(train::sample_loss(0.0, 1) == doctest::Approx(std::log(2.0)));
    CHECK(train::sample_loss(0.0, 0) == doctest::Approx(std::log(2.0)));
    // saturation stays finite and behaves asymptotically
    CHECK(train::sample_loss(50.0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(train::sample_loss(50.0, 0) == doctest::Approx(50.0).epsilon(1e-6));
    CHECK(train::sample_loss(-1000.0, 1) == doctest::Approx(1000.0).epsilon(1e-6));
    CHECK(std::isfinite(train::sample_loss(-1000.0, 0)));
}

TEST_CASE("loss sums the samples and adds the touched-row penalty") {
    Rng rng(1);
    auto params = ModelParams::init(small_hyper(), rng);
    std::vector<train::Sample> samples = {{0.7, 1}, {-0.3, 0}};
    train::TouchedRows touched;
    touched.users = {1};
    touched.items = {2, 5};

    double data = train::sample_loss(0.7, 1) + train::sample_loss(-0.3, 0);
    CHECK(train::loss(samples, 0.0, params, touched) == doctest::Approx(data));

    double reg = 0.0;
    for (uint32_t i = 0; i < 4; ++i) {
        reg += params.user_emb(1, i) * params.user_emb(1, i);
        reg += params.item_emb(2, i) * params.item_emb(2, i);
        reg += params.item_emb(5, i) * params.item_emb(5, i);
    }
    for (const Mat* m : {&params.w1, &params.w2, &params.w3, &params.w4})
        for (double x : m->a) reg += x * x;
    for (const Vec* b : {&params.b1, &params.b2, &params.b3, &params.b4})
        for (double x : *b) reg += x * x;
    double l2 = 0.01;
    CHECK(train::loss(samples, l2, params, touched) ==
          doctest::Approx(data + l2 * reg));
}

TEST_CASE("analytic gradients agree with finite differences") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        auto rep = train::grad_check(small_hyper(), seed);
        INFO("seed ", seed, " max error ", rep.max_error);
        CHECK(rep.passed());
    }
}

TEST_CASE("grad_check notices a corrupted gradient") {
    auto rep = train::grad_check(small_hyper(), 1, 1e-5, [](Gradients& g) {
        g.dw1(0, 0) += 0.5;
    });
    CHECK_FALSE(rep.passed());
}

TEST_CASE("backward is linear: two identical samples double the gradient") {
    Rng rng(6);
    auto params = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    auto cache = model::forward(ex, params, {{4, 0}});
    std::vector<double> ds = {0.3, -0.7};

    auto g1 = train::backward(cache, ds, params);
    auto g2 = train::backward(cache, ds, params);
    g2.accumulate(train::backward(cache, ds, params));
    g1.scale(2.0);
    for (size_t i = 0; i < g1.dw1.a.size(); ++i)
        CHECK(g1.dw1.a[i] == doctest::Approx(g2.dw1.a[i]).epsilon(1e-12));
    CHECK(g1.dgamma == doctest::Approx(g2.dgamma).epsilon(1e-12));
    for (const auto& [row, v] : g1.ditem)
        for (size_t i = 0; i < v.size(); ++i)
            CHECK(v[i] == doctest::Approx(g2.ditem.at(row)[i]).epsilon(1e-12));
}

TEST_CASE("pure L2 step shrinks weights by exactly 1 - 2*lr*l2") {
    Rng rng(7);
    auto params = ModelParams::init(small_hyper(), rng);
    auto before = params;
    double l2 = 0.01, lr = 0.5;
    auto grads = Gradients::zeros(params.hyper);
    train::TouchedRows touched;
    touched.users = {0};
    touched.items = {3};
    train::add_l2_gradient(grads, params, l2, touched);
    train::sgd_step(params, grads, lr);

    double shrink = 1.0 - 2.0 * lr * l2;
    for (size_t i = 0; i < params.w1.a.size(); ++i)
        CHECK(params.w1.a[i] == doctest::Approx(before.w1.a[i] * shrink));
    for (uint32_t i = 0; i < 4; ++i) {
        CHECK(params.user_emb(0, i) == doctest::Approx(before.user_emb(0, i) * shrink));
        CHECK(params.item_emb(3, i) == doctest::Approx(before.item_emb(3, i) * shrink));
    }
    // untouched rows and excluded tensors stay bit-identical
    CHECK(params.user_emb(1, 0) == before.user_emb(1, 0));
    CHECK(params.item_emb(2, 2) == before.item_emb(2, 2));
    CHECK(params.cat_emb.a == before.cat_emb.a);
    CHECK(params.pos_weight.a == before.pos_weight.a);
    CHECK(params.gamma == before.gamma);
}

TEST_CASE("gamma and position weights receive nonzero gradients") {
    Rng rng(8);
    auto params = ModelParams::init(small_hyper(), rng);
    auto ex = small_example();
    auto cache = model::forward(ex, params, {});
    auto g = train::backward(cache, {1.0}, params);
    CHECK(g.dgamma != 0.0);
    REQUIRE(g.dpos.count(ex.user));
    double norm = 0.0;
    for (double x : g.dpos.at(ex.user)) norm += std::abs(x);
    CHECK(norm > 0.0);

    // NoGamma freezes gamma but keeps the rest flowing
    auto cg = model::forward(ex, params, {}, Ablation::NoGamma);
    auto gg = train::backward(cg, {1.0}, params, Ablation::NoGamma);
    CHECK(gg.dgamma == 0.0);
}

TEST_CASE("learning rate drops at 80 percent of the planned steps") {
    auto ds = toy_dataset(8, 10, 3);
    TrainConfig cfg;
    cfg.d_f = 4;
    cfg.heads = 2;
    cfg.long_seq_len = 4;
    cfg.batch = 2;
    cfg.epochs = 5;  // 8 users / batch 2 = 4 steps per epoch, 20 total
    cfg.seed = 11;
    HyperParams hyper = small_hyper();
    hyper.long_seq_len = 4;
    hyper.n_users = 8;
    hyper.n_items = 10;
    Rng rng(11);
    auto params = ModelParams::init(hyper, rng);

    std::vector<std::pair<uint64_t, double>> lrs;
    train::train_loop(ds, cfg, params, "",
                      [&](uint64_t step, uint32_t, double lr, double,
                          const ModelParams&) { lrs.emplace_back(step, lr); });
    REQUIRE(lrs.size() == 20);
    // drop index = floor(0.8 * 20) = 16 (1-based steps)
    for (const auto& [step, lr] : lrs) {
        if (step < 16)
            CHECK(lr == 1.0);
        else if (step > 16)
            CHECK(lr == 0.1);
    }
    CHECK(lrs.front().second == 1.0);
    CHECK(lrs.back().second == 0.1);
}

TEST_CASE("training is deterministic and reduces the loss") {
    auto ds = toy_dataset(12, 10, 5);
    TrainConfig cfg;
    cfg.d_f = 4;
    cfg.heads = 2;
    cfg.long_seq_len = 4;
    cfg.batch = 4;
    cfg.epochs = 30;
    cfg.seed = 21;

    HyperParams hyper = small_hyper();
    hyper.long_seq_len = 4;
    hyper.n_users = 12;
    hyper.n_items = 10;

    Rng r1(21), r2(21);
    auto p1 = ModelParams::init(hyper, r1);
    auto p2 = ModelParams::init(hyper, r2);
    auto path1 = tmp_path("train_det_1.ckpt");
    auto path2 = tmp_path("train_det_2.ckpt");
    auto rep1 = train::train_loop(ds, cfg, p1, path1);
    auto rep2 = train::train_loop(ds, cfg, p2, path2);

    CHECK(p1.user_emb.a == p2.user_emb.a);
    CHECK(p1.item_emb.a == p2.item_emb.a);
    CHECK(p1.w1.a == p2.w1.a);
    CHECK(p1.gamma == p2.gamma);
    CHECK(rep1.step_loss == rep2.step_loss);

    // first-epoch mean loss starts near ln 2 and the last epoch improves on it
    double first = rep1.step_loss.front();
    CHECK(first == doctest::Approx(std::log(2.0)).epsilon(0.25));
    CHECK(rep1.final_loss < first);

    std::remove(path1.c_str());
    std::remove(path2.c_str());
}
