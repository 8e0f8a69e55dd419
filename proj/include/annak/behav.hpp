#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace annak::behav {

// Per-subject integer ratings, one value per item, each in [1, 5].
struct RatingMatrix {
    std::vector<std::string> subjects;
    std::vector<std::string> items;
    std::vector<std::vector<int>> values;  // subject -> item vector

    void validate() const;
};

// One value per unordered dyad, indexed by (a, b) with a < b over a shared
// subject order. NaN marks dyads without a defined value.
struct SimilarityColumn {
    std::string name;
    std::vector<std::pair<int, int>> dyads;
    std::vector<double> values;
};

// s = 1 - d / max(d) with d the Euclidean distance across items; the max is
// taken over the given dyads, so values are relative to the active sample.
SimilarityColumn rating_similarity(const RatingMatrix& ratings,
                                   const std::vector<std::pair<int, int>>& dyads,
                                   const std::string& name);

// Mean of a subject's dyadic similarities over its partners; community-scoped
// variants mirror subject-level ISC semantics.
std::vector<double> subject_mean_similarity(const SimilarityColumn& col,
                                            std::size_t n_subjects,
                                            bool intra_community_only = false,
                                            const std::vector<std::string>* community = nullptr);

struct AttributeTable {
    std::vector<std::string> subjects;
    std::vector<double> age;                          // NaN = missing
    std::vector<std::string> gender;                  // empty = missing
    std::vector<std::string> home_country;            // empty = missing
    std::vector<std::set<std::string>> ethnicities;   // empty = missing
};

// age_sim = 1 - |age_a - age_b| / max over dyads; same_gender and
// same_home_country are exact-match indicators; shared_ethnicity = 1 iff the
// two sets intersect. Dyads touching a missing attribute are missing.
std::vector<SimilarityColumn> demographic_similarity(
    const AttributeTable& attributes, const std::vector<std::pair<int, int>>& dyads);

}  // namespace annak::behav
