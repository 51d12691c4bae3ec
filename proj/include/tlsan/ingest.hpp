#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tlsan/rng.hpp"

namespace tlsan {

// Reserved category row; always present in the dense category map.
inline constexpr uint32_t kUnknownCategory = 0;
inline constexpr const char* kUnknownCategoryLabel = "UNKNOWN";

struct RawReview {
    std::string user_ext;
    std::string item_ext;
    int64_t timestamp = 0;  // unix seconds, > 0
};

// One behavior record after ID-mapping.
struct Interaction {
    uint32_t user = 0;
    uint32_t item = 0;
    uint32_t category = 0;
    int64_t day = 0;  // floor(timestamp / 86400)
};

struct Session {
    int64_t day = 0;
    // (item, category) in timestamp order, ties by input order
    std::vector<std::pair<uint32_t, uint32_t>> items;
};

struct UserHistory {
    uint32_t user = 0;
    std::vector<Session> sessions;  // days strictly increasing
};

struct Example {
    struct LongItem {
        uint32_t item = 0;
        uint32_t category = 0;
        int64_t day_delta = 0;  // target-session day minus item day, >= 0
    };
    uint32_t user = 0;
    uint32_t user_category = kUnknownCategory;
    std::vector<LongItem> long_items;  // chronological, at most L_s
    std::vector<std::pair<uint32_t, uint32_t>> short_items;
    uint32_t target = 0;
    uint32_t target_category = 0;
    bool is_test = false;
};

struct DatasetManifest {
    uint32_t n_users = 0;
    uint32_t n_items = 0;
    uint32_t n_categories = 0;
    uint64_t n_samples = 0;  // interactions surviving the filters
    uint32_t long_seq_len = 0;
    uint64_t seed = 0;
    // dense index -> external id / label
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<std::string> category_labels;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<UserHistory> histories;  // indexed by dense user id
};

namespace ingest {

struct ParseResult {
    std::vector<RawReview> reviews;
    size_t skipped = 0;
};

// JSON-lines with fields reviewerID, asin, unixReviewTime. Malformed lines
// are skipped and counted; zero valid records is a hard error.
ParseResult parse_reviews(std::istream& in);

// JSON-lines metadata with fields asin, categories (list of label lists).
// Each item maps to the last label of its first path, or UNKNOWN.
std::map<std::string, std::string> parse_categories(std::istream& in);

struct FilterStats {
    size_t removed_users_min_interactions = 0;
    size_t removed_items_min_interactions = 0;
    size_t removed_users_count_bound = 0;
};

struct FilterResult {
    std::vector<Interaction> interactions;  // sorted by (user, time, input order)
    DatasetManifest manifest;
};

// Applies the dataset filters in order: (a) users with < 10 interactions and
// (b) items with < 8 interactions dropped in one simultaneous pass, then
// (c) each user truncated to the trailing 90 days, then (d) users whose
// remaining count n fails 4 < n < 90 dropped. Dense ids are assigned over
// the survivors (lexicographic external order; category 0 is UNKNOWN).
FilterResult filter_dataset(const std::vector<RawReview>& reviews,
                            const std::map<std::string, std::string>& categories,
                            uint32_t long_seq_len, uint64_t seed,
                            FilterStats* stats = nullptr);

// Groups a user's time-sorted interactions into one session per day.
std::vector<UserHistory> sessionize(const std::vector<Interaction>& sorted,
                                    uint32_t n_users);

// Modal category over sessions[0..upto_session] inclusive, optionally
// excluding one occurrence (session index, position). Ties break toward the
// most recently interacted category. Empty considered set -> UNKNOWN.
uint32_t extract_user_category(
    const UserHistory& history, size_t upto_session,
    std::optional<std::pair<size_t, size_t>> exclude = std::nullopt);

struct ExamplePair {
    std::optional<Example> train;
    std::optional<Example> test;
};

// Builds the training example (target drawn from the newest training
// session via rng) and, when the user's final session holds a single item,
// the test example targeting it. Histories with < 2 sessions yield neither.
ExamplePair build_examples(const UserHistory& history, uint32_t long_seq_len,
                           Rng& rng);

// Uniform over items the user never interacted with.
uint32_t sample_negative(Rng& rng, const std::unordered_set<uint32_t>& seen,
                         uint32_t n_items);

std::unordered_set<uint32_t> user_item_set(const UserHistory& history);

}  // namespace ingest
}  // namespace tlsan
