#pragma once

#include <cstdint>
#include <string>

namespace tlsan {

// Planted-structure generator: each user has a primary category driving the
// long-term sessions, an optional drifted category dominating the final
// days, behaviors clustered on a few active days, and a held-out single-item
// final day whose item follows the drifted (else primary) category. Output
// survives the preprocessing filters by construction.
struct SynthSpec {
    uint32_t n_users = 200;
    uint32_t n_items = 400;
    uint32_t n_categories = 8;
    uint32_t days = 60;
    double long_affinity_strength = 0.9;
    double recent_drift_probability = 0.5;
    uint64_t seed = 1;

    void validate() const;
};

namespace synth {

// Writes raw-format review and metadata JSON-lines files; byte-identical
// for identical specs.
void generate_synthetic(const SynthSpec& spec, const std::string& reviews_path,
                        const std::string& metadata_path);

}  // namespace synth
}  // namespace tlsan
