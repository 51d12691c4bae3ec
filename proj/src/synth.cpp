#include "tlsan/synth.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "tlsan/rng.hpp"

namespace tlsan {

void SynthSpec::validate() const {
    if (n_categories == 0 || n_items % n_categories != 0)
        throw std::invalid_argument("synth: n_items must be divisible by n_categories");
    if (days < 10) throw std::invalid_argument("synth: days must be >= 10");
    if (n_items / n_categories < 6)
        throw std::invalid_argument("synth: need at least 6 items per category");
    if (n_users == 0) throw std::invalid_argument("synth: n_users must be positive");
    if (recent_drift_probability < 0.0 || recent_drift_probability > 1.0 ||
        long_affinity_strength < 0.0 || long_affinity_strength > 1.0)
        throw std::invalid_argument("synth: probabilities must be in [0,1]");
}

namespace synth {
namespace {

struct Event {
    uint32_t user;
    uint32_t item;
    int64_t ts;
};

std::string pad_id(char prefix, uint32_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return prefix + s;
}

}  // namespace

void generate_synthetic(const SynthSpec& spec, const std::string& reviews_path,
                        const std::string& metadata_path) {
    spec.validate();
    Rng rng(spec.seed);
    uint32_t per_cat = spec.n_items / spec.n_categories;
    auto draw_item = [&](uint32_t cat) {
        return cat + spec.n_categories * static_cast<uint32_t>(rng.below(per_cat));
    };

    std::vector<Event> events;
    std::vector<uint32_t> user_counts(spec.n_users, 0);
    std::vector<int64_t> first_day(spec.n_users, 0);
    std::vector<uint32_t> day_seq(spec.n_users, 0);

    for (uint32_t u = 0; u < spec.n_users; ++u) {
        auto primary = static_cast<uint32_t>(rng.below(spec.n_categories));
        bool drift = rng.uniform() < spec.recent_drift_probability;
        uint32_t focus = primary;
        if (drift && spec.n_categories > 1)
            focus = (primary + 1 +
                     static_cast<uint32_t>(rng.below(spec.n_categories - 1))) %
                    spec.n_categories;

        // a few clustered active days for the long-term record
        size_t n_days = 5 + rng.below(4);
        std::set<int64_t> days;
        while (days.size() < n_days)
            days.insert(1 + static_cast<int64_t>(rng.below(spec.days - 6)));
        first_day[u] = *days.begin();

        uint32_t seq = 0;
        for (int64_t d : days) {
            size_t n = 2 + rng.below(4);
            for (size_t i = 0; i < n; ++i) {
                uint32_t cat = rng.uniform() < spec.long_affinity_strength
                                   ? primary
                                   : static_cast<uint32_t>(rng.below(spec.n_categories));
                events.push_back({u, draw_item(cat), d * 86400 + ++seq});
                ++user_counts[u];
            }
        }

        // short-term session in the final days, dominated by the focus category
        int64_t short_day =
            static_cast<int64_t>(spec.days) - 4 + static_cast<int64_t>(rng.below(3));
        size_t n_short = 3 + rng.below(3);
        std::set<uint32_t> short_items;
        for (size_t i = 0; i < n_short; ++i) {
            uint32_t cat = rng.uniform() < spec.long_affinity_strength
                               ? focus
                               : static_cast<uint32_t>(rng.below(spec.n_categories));
            uint32_t item = draw_item(cat);
            short_items.insert(item);
            events.push_back({u, item, short_day * 86400 + ++seq});
            ++user_counts[u];
        }

        // held-out next item on its own day, from the focus category but not
        // re-using a short-session item
        uint32_t test_item = draw_item(focus);
        for (int tries = 0; short_items.count(test_item) && tries < 50; ++tries)
            test_item = draw_item(focus);
        events.push_back({u, test_item, (short_day + 1) * 86400 + ++seq});
        ++user_counts[u];
        day_seq[u] = seq;
    }

    // top up items below the 8-interaction filter threshold; extras land on
    // a user's earliest active day so the session structure stays intact
    std::vector<uint32_t> item_counts(spec.n_items, 0);
    for (const auto& e : events) ++item_counts[e.item];
    uint32_t cursor = 0;
    for (uint32_t i = 0; i < spec.n_items; ++i) {
        while (item_counts[i] < 8) {
            uint32_t guard = 0;
            while (user_counts[cursor] >= 80) {
                cursor = (cursor + 1) % spec.n_users;
                if (++guard > spec.n_users)
                    throw std::invalid_argument("synth: infeasible spec (no capacity)");
            }
            uint32_t u = cursor;
            events.push_back({u, i, first_day[u] * 86400 + ++day_seq[u]});
            ++user_counts[u];
            ++item_counts[i];
            cursor = (cursor + 1) % spec.n_users;
        }
    }

    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.user != b.user) return a.user < b.user;
        return a.ts < b.ts;
    });

    std::ofstream rf(reviews_path);
    if (!rf) throw std::runtime_error("cannot open " + reviews_path);
    for (const auto& e : events) {
        nlohmann::json j = {{"reviewerID", pad_id('U', e.user, 5)},
                            {"asin", pad_id('I', e.item, 5)},
                            {"unixReviewTime", e.ts}};
        rf << j.dump() << '\n';
    }

    std::ofstream mf(metadata_path);
    if (!mf) throw std::runtime_error("cannot open " + metadata_path);
    for (uint32_t i = 0; i < spec.n_items; ++i) {
        nlohmann::json path = nlohmann::json::array(
            {"Root", pad_id('C', i % spec.n_categories, 3)});
        nlohmann::json j = {{"asin", pad_id('I', i, 5)},
                            {"categories", nlohmann::json::array({path})}};
        mf << j.dump() << '\n';
    }
}

}  // namespace synth
}  // namespace tlsan
