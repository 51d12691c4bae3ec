#pragma once

#include <cstdint>
#include <vector>

#include "tlsan/ingest.hpp"
#include "tlsan/model.hpp"

namespace tlsan {

struct ScoredUser {
    uint32_t user = 0;
    std::vector<double> pos_scores;
    std::vector<double> neg_scores;
};

struct EvalReport {
    double auc = 0.0;
    std::vector<uint32_t> ks;
    std::vector<double> precision_at_k;
    std::vector<double> recall_at_k;
    size_t user_count = 0;
    size_t excluded_users = 0;
};

namespace eval {

// Mean per-user fraction of strictly ordered (positive, negative) pairs.
// Ties count 0. Users lacking a positive or a negative are excluded.
double auc(const std::vector<ScoredUser>& users, size_t* excluded = nullptr);

// Independent naive double loop; must equal auc() exactly.
double auc_oracle(const std::vector<ScoredUser>& users,
                  size_t* excluded = nullptr);

// Scores every catalog item against u_t, excluding the items of the user's
// input short-term session, and returns the top k_max (score descending,
// ties by ascending item index).
std::vector<uint32_t> rank_catalog(const Vec& u_t,
                                   const std::vector<uint32_t>& item_category,
                                   const ModelParams& params,
                                   const std::vector<uint32_t>& excluded_items,
                                   uint32_t k_max);

struct TopKMetrics {
    std::vector<uint32_t> ks;
    std::vector<double> precision;
    std::vector<double> recall;
};

// One ground-truth item per user; recall uses the standard |pos(u)|
// denominator, so it is the hit rate here.
TopKMetrics precision_recall_at_k(
    const std::vector<std::vector<uint32_t>>& ranked,
    const std::vector<std::vector<uint32_t>>& truth,
    const std::vector<uint32_t>& ks);

// Items ranked by interaction count over the training portion (held-out
// test targets excluded), ties by ascending index.
std::vector<uint32_t> popularity_ranking(const Dataset& dataset);
std::vector<double> popularity_counts(const Dataset& dataset);

// Full evaluation protocol: AUC with one seeded uniform negative per test
// positive, precision/recall from full-catalog ranking.
EvalReport evaluate(const Dataset& dataset, const ModelParams& params,
                    const std::vector<uint32_t>& ks, uint64_t seed,
                    Ablation ablation = Ablation::Full);

// Same protocol with popularity counts as the scoring function.
EvalReport evaluate_popularity(const Dataset& dataset,
                               const std::vector<uint32_t>& ks, uint64_t seed);

// Item -> category lookup (categories are a function of the item).
std::vector<uint32_t> item_categories(const Dataset& dataset);

}  // namespace eval
}  // namespace tlsan
