#include "tlsan/ingest.hpp"

#include <algorithm>
#include <istream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace tlsan::ingest {

using nlohmann::json;

ParseResult parse_reviews(std::istream& in) {
    ParseResult out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() ||
            !j.contains("reviewerID") || !j["reviewerID"].is_string() ||
            !j.contains("asin") || !j["asin"].is_string() ||
            !j.contains("unixReviewTime") ||
            !j["unixReviewTime"].is_number_integer()) {
            ++out.skipped;
            continue;
        }
        RawReview r;
        r.user_ext = j["reviewerID"].get<std::string>();
        r.item_ext = j["asin"].get<std::string>();
        r.timestamp = j["unixReviewTime"].get<int64_t>();
        if (r.user_ext.empty() || r.item_ext.empty() || r.timestamp <= 0) {
            ++out.skipped;
            continue;
        }
        out.reviews.push_back(std::move(r));
    }
    if (out.reviews.empty()) throw std::runtime_error("parse_reviews: no records");
    return out;
}

std::map<std::string, std::string> parse_categories(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("asin") ||
            !j["asin"].is_string())
            continue;
        std::string label = kUnknownCategoryLabel;
        if (j.contains("categories") && j["categories"].is_array() &&
            !j["categories"].empty()) {
            const auto& first_path = j["categories"][0];
            if (first_path.is_array() && !first_path.empty() &&
                first_path.back().is_string())
                label = first_path.back().get<std::string>();
        }
        out[j["asin"].get<std::string>()] = label;
    }
    return out;
}

FilterResult filter_dataset(const std::vector<RawReview>& reviews,
                            const std::map<std::string, std::string>& categories,
                            uint32_t long_seq_len, uint64_t seed,
                            FilterStats* stats) {
    FilterStats local;
    FilterStats& st = stats ? *stats : local;

    std::unordered_map<std::string, size_t> user_count, item_count;
    for (const auto& r : reviews) {
        ++user_count[r.user_ext];
        ++item_count[r.item_ext];
    }

    // (a) + (b): one simultaneous pass over the raw counts
    struct Rec {
        const RawReview* r;
        size_t order;
    };
    std::unordered_map<std::string, std::vector<Rec>> by_user;
    for (size_t i = 0; i < reviews.size(); ++i) {
        const auto& r = reviews[i];
        if (user_count[r.user_ext] < 10) continue;
        if (item_count[r.item_ext] < 8) continue;
        by_user[r.user_ext].push_back({&r, i});
    }
    st.removed_users_min_interactions = user_count.size() - by_user.size();

    // (c) trailing 90 days, (d) 4 < n < 90
    std::vector<std::pair<std::string, std::vector<Rec>>> kept;
    for (auto& [uid, recs] : by_user) {
        std::sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
            if (a.r->timestamp != b.r->timestamp)
                return a.r->timestamp < b.r->timestamp;
            return a.order < b.order;
        });
        int64_t last_day = recs.back().r->timestamp / 86400;
        std::vector<Rec> windowed;
        for (const auto& rec : recs)
            if (rec.r->timestamp / 86400 > last_day - 90) windowed.push_back(rec);
        size_t n = windowed.size();
        if (n > 4 && n < 90)
            kept.emplace_back(uid, std::move(windowed));
        else
            ++st.removed_users_count_bound;
    }
    if (kept.empty()) throw std::runtime_error("filter_dataset: empty result");

    // dense ids over survivors, lexicographic external order
    std::sort(kept.begin(), kept.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    auto item_label = [&](const std::string& item_ext) -> std::string {
        auto it = categories.find(item_ext);
        return it == categories.end() ? kUnknownCategoryLabel : it->second;
    };

    std::vector<std::string> item_ids;
    std::vector<std::string> labels;
    for (const auto& [uid, recs] : kept)
        for (const auto& rec : recs) {
            item_ids.push_back(rec.r->item_ext);
            labels.push_back(item_label(rec.r->item_ext));
        }
    std::sort(item_ids.begin(), item_ids.end());
    item_ids.erase(std::unique(item_ids.begin(), item_ids.end()), item_ids.end());
    labels.push_back(kUnknownCategoryLabel);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    // keep the reserved label at index 0
    auto unk = std::find(labels.begin(), labels.end(), kUnknownCategoryLabel);
    std::rotate(labels.begin(), unk, unk + 1);

    std::unordered_map<std::string, uint32_t> item_idx, label_idx;
    for (uint32_t i = 0; i < item_ids.size(); ++i) item_idx[item_ids[i]] = i;
    for (uint32_t i = 0; i < labels.size(); ++i) label_idx[labels[i]] = i;

    FilterResult out;
    out.manifest.n_users = static_cast<uint32_t>(kept.size());
    out.manifest.n_items = static_cast<uint32_t>(item_ids.size());
    out.manifest.n_categories = static_cast<uint32_t>(labels.size());
    out.manifest.long_seq_len = long_seq_len;
    out.manifest.seed = seed;
    out.manifest.item_ids = std::move(item_ids);
    out.manifest.category_labels = std::move(labels);
    for (uint32_t u = 0; u < kept.size(); ++u) {
        out.manifest.user_ids.push_back(kept[u].first);
        for (const auto& rec : kept[u].second) {
            Interaction it;
            it.user = u;
            it.item = item_idx[rec.r->item_ext];
            it.category = label_idx[item_label(rec.r->item_ext)];
            it.day = rec.r->timestamp / 86400;
            out.interactions.push_back(it);
        }
    }
    out.manifest.n_samples = out.interactions.size();
    return out;
}

std::vector<UserHistory> sessionize(const std::vector<Interaction>& sorted,
                                    uint32_t n_users) {
    std::vector<UserHistory> out(n_users);
    for (uint32_t u = 0; u < n_users; ++u) out[u].user = u;
    for (const auto& it : sorted) {
        auto& h = out.at(it.user);
        if (h.sessions.empty() || h.sessions.back().day != it.day) {
            if (!h.sessions.empty() && h.sessions.back().day > it.day)
                throw std::invalid_argument("sessionize: interactions not time-sorted");
            h.sessions.push_back({it.day, {}});
        }
        h.sessions.back().items.emplace_back(it.item, it.category);
    }
    return out;
}

uint32_t extract_user_category(const UserHistory& history, size_t upto_session,
                               std::optional<std::pair<size_t, size_t>> exclude) {
    if (upto_session >= history.sessions.size())
        throw std::out_of_range("extract_user_category: bad session index");
    std::unordered_map<uint32_t, std::pair<size_t, size_t>> tally;  // count, last seen
    size_t pos = 0;
    for (size_t s = 0; s <= upto_session; ++s) {
        const auto& items = history.sessions[s].items;
        for (size_t i = 0; i < items.size(); ++i, ++pos) {
            if (exclude && exclude->first == s && exclude->second == i) continue;
            auto& t = tally[items[i].second];
            ++t.first;
            t.second = pos;
        }
    }
    if (tally.empty()) return kUnknownCategory;
    uint32_t best = kUnknownCategory;
    std::pair<size_t, size_t> best_key{0, 0};
    bool first = true;
    for (const auto& [cat, key] : tally) {
        if (first || key > best_key) {
            best = cat;
            best_key = key;
            first = false;
        }
    }
    return best;
}

namespace {

std::vector<Example::LongItem> long_tail(const UserHistory& h, size_t end_session,
                                         uint32_t long_seq_len, int64_t anchor_day) {
    // chronologically last long_seq_len items of sessions [0, end_session)
    std::vector<Example::LongItem> rev;
    for (size_t s = end_session; s-- > 0;) {
        const auto& items = h.sessions[s].items;
        for (size_t i = items.size(); i-- > 0;) {
            if (rev.size() == long_seq_len) break;
            rev.push_back({items[i].first, items[i].second,
                           anchor_day - h.sessions[s].day});
        }
        if (rev.size() == long_seq_len) break;
    }
    return {rev.rbegin(), rev.rend()};
}

}  // namespace

ExamplePair build_examples(const UserHistory& history, uint32_t long_seq_len,
                           Rng& rng) {
    ExamplePair out;
    const auto& ss = history.sessions;
    size_t n = ss.size();
    if (n < 2) return out;

    // A final single-item session is held out as the test target; the session
    // before it is the newest session for both the train and test examples.
    bool has_test = ss[n - 1].items.size() == 1;
    size_t anchor = has_test ? n - 2 : n - 1;
    const Session& newest = ss[anchor];
    int64_t anchor_day = newest.day;

    Example tr;
    tr.user = history.user;
    std::optional<std::pair<size_t, size_t>> exclude;
    if (newest.items.size() >= 2) {
        size_t ti = static_cast<size_t>(rng.below(newest.items.size()));
        tr.target = newest.items[ti].first;
        tr.target_category = newest.items[ti].second;
        for (size_t i = 0; i < newest.items.size(); ++i)
            if (i != ti) tr.short_items.push_back(newest.items[i]);
        tr.long_items = long_tail(history, anchor, long_seq_len, anchor_day);
        exclude = {anchor, ti};
    } else if (anchor + 1 < n) {
        // single-item newest session: target is the first item of the
        // following session, the whole newest session stays short-term
        tr.target = ss[anchor + 1].items[0].first;
        tr.target_category = ss[anchor + 1].items[0].second;
        tr.short_items = newest.items;
        tr.long_items = long_tail(history, anchor, long_seq_len, anchor_day);
    } else {
        // no following session: the item itself is the target and the
        // previous session serves as the short-term session
        tr.target = newest.items[0].first;
        tr.target_category = newest.items[0].second;
        tr.short_items = ss[anchor - 1].items;
        tr.long_items = long_tail(history, anchor - 1, long_seq_len, anchor_day);
        exclude = {anchor, size_t{0}};
    }
    tr.user_category = extract_user_category(history, anchor, exclude);
    tr.is_test = false;
    out.train = std::move(tr);

    if (has_test) {
        Example te;
        te.user = history.user;
        te.target = ss[n - 1].items[0].first;
        te.target_category = ss[n - 1].items[0].second;
        te.short_items = newest.items;
        te.long_items = long_tail(history, anchor, long_seq_len, anchor_day);
        te.user_category = extract_user_category(history, anchor);
        te.is_test = true;
        out.test = std::move(te);
    }
    return out;
}

uint32_t sample_negative(Rng& rng, const std::unordered_set<uint32_t>& seen,
                         uint32_t n_items) {
    if (seen.size() >= n_items)
        throw std::invalid_argument("sample_negative: no eligible items");
    for (;;) {
        auto j = static_cast<uint32_t>(rng.below(n_items));
        if (!seen.count(j)) return j;
    }
}

std::unordered_set<uint32_t> user_item_set(const UserHistory& history) {
    std::unordered_set<uint32_t> out;
    for (const auto& s : history.sessions)
        for (const auto& [item, cat] : s.items) out.insert(item);
    return out;
}

}  // namespace tlsan::ingest
