#include "tlsan/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "tlsan/kernels.hpp"

namespace tlsan::eval {

double auc(const std::vector<ScoredUser>& users, size_t* excluded) {
    size_t skipped = 0;
    double sum = 0.0;
    size_t counted = 0;
    for (const auto& u : users) {
        if (u.pos_scores.empty() || u.neg_scores.empty()) {
            ++skipped;
            continue;
        }
        std::vector<double> negs = u.neg_scores;
        std::sort(negs.begin(), negs.end());
        size_t wins = 0;
        for (double p : u.pos_scores)
            wins += static_cast<size_t>(
                std::lower_bound(negs.begin(), negs.end(), p) - negs.begin());
        sum += static_cast<double>(wins) /
               (static_cast<double>(u.pos_scores.size()) *
                static_cast<double>(negs.size()));
        ++counted;
    }
    if (excluded) *excluded = skipped;
    if (counted == 0) throw std::invalid_argument("auc: no evaluable users");
    return sum / static_cast<double>(counted);
}

double auc_oracle(const std::vector<ScoredUser>& users, size_t* excluded) {
    size_t skipped = 0;
    double sum = 0.0;
    size_t counted = 0;
    for (const auto& u : users) {
        if (u.pos_scores.empty() || u.neg_scores.empty()) {
            ++skipped;
            continue;
        }
        size_t wins = 0;
        for (double p : u.pos_scores)
            for (double n : u.neg_scores)
                if (p > n) ++wins;
        sum += static_cast<double>(wins) /
               (static_cast<double>(u.pos_scores.size()) *
                static_cast<double>(u.neg_scores.size()));
        ++counted;
    }
    if (excluded) *excluded = skipped;
    if (counted == 0) throw std::invalid_argument("auc_oracle: no evaluable users");
    return sum / static_cast<double>(counted);
}

namespace {

std::vector<uint32_t> top_k(const std::vector<double>& scores,
                            const std::vector<bool>& eligible, uint32_t k_max) {
    std::vector<uint32_t> idx;
    for (uint32_t i = 0; i < scores.size(); ++i)
        if (eligible[i]) idx.push_back(i);
    auto cmp = [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    size_t k = std::min<size_t>(k_max, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), cmp);
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<uint32_t> rank_catalog(const Vec& u_t,
                                   const std::vector<uint32_t>& item_category,
                                   const ModelParams& params,
                                   const std::vector<uint32_t>& excluded_items,
                                   uint32_t k_max) {
    uint32_t d_f = params.hyper.d_f;
    uint32_t n = params.hyper.n_items;
    const auto& k = kernels::active();
    std::vector<double> scores(n);
    for (uint32_t i = 0; i < n; ++i)
        scores[i] = k.dot(u_t.data(), params.item_emb.row(i), d_f) +
                    k.dot(u_t.data() + d_f,
                          params.cat_emb.row(item_category[i]), d_f);
    std::vector<bool> eligible(n, true);
    for (uint32_t e : excluded_items) eligible[e] = false;
    return top_k(scores, eligible, k_max);
}

TopKMetrics precision_recall_at_k(
    const std::vector<std::vector<uint32_t>>& ranked,
    const std::vector<std::vector<uint32_t>>& truth,
    const std::vector<uint32_t>& ks) {
    if (ranked.size() != truth.size())
        throw std::invalid_argument("precision_recall: size mismatch");
    if (ranked.empty())
        throw std::invalid_argument("precision_recall: no users");
    TopKMetrics out;
    out.ks = ks;
    for (uint32_t k : ks) {
        double psum = 0.0, rsum = 0.0;
        for (size_t u = 0; u < ranked.size(); ++u) {
            size_t hits = 0;
            size_t upto = std::min<size_t>(k, ranked[u].size());
            for (size_t i = 0; i < upto; ++i)
                if (std::find(truth[u].begin(), truth[u].end(), ranked[u][i]) !=
                    truth[u].end())
                    ++hits;
            psum += static_cast<double>(hits) / static_cast<double>(k);
            rsum += static_cast<double>(hits) /
                    static_cast<double>(truth[u].size());
        }
        out.precision.push_back(psum / static_cast<double>(ranked.size()));
        out.recall.push_back(rsum / static_cast<double>(ranked.size()));
    }
    return out;
}

std::vector<double> popularity_counts(const Dataset& dataset) {
    std::vector<double> counts(dataset.manifest.n_items, 0.0);
    for (const auto& h : dataset.histories) {
        size_t n = h.sessions.size();
        bool holdout = n >= 2 && h.sessions.back().items.size() == 1;
        for (size_t s = 0; s + (holdout ? 1 : 0) < n; ++s)
            for (const auto& [item, cat] : h.sessions[s].items)
                counts[item] += 1.0;
    }
    return counts;
}

std::vector<uint32_t> popularity_ranking(const Dataset& dataset) {
    auto counts = popularity_counts(dataset);
    std::vector<bool> eligible(counts.size(), true);
    return top_k(counts, eligible, static_cast<uint32_t>(counts.size()));
}

std::vector<uint32_t> item_categories(const Dataset& dataset) {
    std::vector<uint32_t> out(dataset.manifest.n_items, kUnknownCategory);
    for (const auto& h : dataset.histories)
        for (const auto& s : h.sessions)
            for (const auto& [item, cat] : s.items) out[item] = cat;
    return out;
}

namespace {

template <typename RankFn>
EvalReport run_protocol(const Dataset& dataset, const std::vector<uint32_t>& ks,
                        uint64_t seed, RankFn&& rank_user) {
    Rng rng(seed);
    uint32_t n_items = dataset.manifest.n_items;
    uint32_t ls = dataset.manifest.long_seq_len;
    std::vector<ScoredUser> scored;
    std::vector<std::vector<uint32_t>> ranked, truth;
    for (const auto& h : dataset.histories) {
        auto pair = ingest::build_examples(h, ls, rng);
        if (!pair.test) continue;
        const Example& ex = *pair.test;
        auto seen = ingest::user_item_set(h);
        uint32_t neg = ingest::sample_negative(rng, seen, n_items);

        auto [pos_score, neg_score, top] = rank_user(ex, neg);
        scored.push_back({ex.user, {pos_score}, {neg_score}});
        ranked.push_back(std::move(top));
        truth.push_back({ex.target});
    }
    if (scored.empty())
        throw std::invalid_argument("evaluate: empty test set");

    EvalReport rep;
    rep.auc = auc(scored, &rep.excluded_users);
    auto m = precision_recall_at_k(ranked, truth, ks);
    rep.ks = ks;
    rep.precision_at_k = m.precision;
    rep.recall_at_k = m.recall;
    rep.user_count = scored.size();
    return rep;
}

}  // namespace

EvalReport evaluate(const Dataset& dataset, const ModelParams& params,
                    const std::vector<uint32_t>& ks, uint64_t seed,
                    Ablation ablation) {
    auto icat = item_categories(dataset);
    uint32_t k_max = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
    auto rank_user = [&](const Example& ex, uint32_t neg) {
        auto cache = model::forward(ex, params, {}, ablation);
        double pos = cache.scores[0];
        double negs = model::score(cache.u_t, neg, icat[neg], params);
        std::vector<uint32_t> excl;
        for (const auto& [item, cat] : ex.short_items) excl.push_back(item);
        auto top = rank_catalog(cache.u_t, icat, params, excl, k_max);
        return std::make_tuple(pos, negs, std::move(top));
    };
    return run_protocol(dataset, ks, seed, rank_user);
}

EvalReport evaluate_popularity(const Dataset& dataset,
                               const std::vector<uint32_t>& ks, uint64_t seed) {
    auto counts = popularity_counts(dataset);
    uint32_t k_max = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
    auto rank_user = [&](const Example& ex, uint32_t neg) {
        double pos = counts[ex.target];
        double negs = counts[neg];
        std::vector<bool> eligible(counts.size(), true);
        for (const auto& [item, cat] : ex.short_items) eligible[item] = false;
        auto top = top_k(counts, eligible, k_max);
        return std::make_tuple(pos, negs, std::move(top));
    };
    return run_protocol(dataset, ks, seed, rank_user);
}

}  // namespace tlsan::eval
