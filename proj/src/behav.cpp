#include "annak/behav.hpp"

#include <algorithm>
#include <cmath>

#include "annak/common.hpp"

namespace annak::behav {

void RatingMatrix::validate() const {
    if (subjects.size() != values.size()) {
        throw input_error("ratings: subjects/values size mismatch");
    }
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        if (values[s].size() != items.size()) {
            throw input_error("ratings: incomplete vector for subject " + subjects[s]);
        }
        for (int v : values[s]) {
            if (v < 1 || v > 5) {
                throw input_error("ratings: value outside [1, 5] for subject " + subjects[s]);
            }
        }
    }
}

SimilarityColumn rating_similarity(const RatingMatrix& ratings,
                                   const std::vector<std::pair<int, int>>& dyads,
                                   const std::string& name) {
    ratings.validate();
    SimilarityColumn col;
    col.name = name;
    col.dyads = dyads;
    col.values.resize(dyads.size());

    std::vector<double> distance(dyads.size());
    double max_distance = 0.0;
    for (std::size_t d = 0; d < dyads.size(); ++d) {
        const auto [a, b] = dyads[d];
        double ss = 0.0;
        for (std::size_t i = 0; i < ratings.items.size(); ++i) {
            const double diff = ratings.values[a][i] - ratings.values[b][i];
            ss += diff * diff;
        }
        distance[d] = std::sqrt(ss);
        max_distance = std::max(max_distance, distance[d]);
    }
    if (max_distance == 0.0) {
        warn("rating similarity '" + name + "': all vectors identical, defining s = 1");
        std::fill(col.values.begin(), col.values.end(), 1.0);
        return col;
    }
    for (std::size_t d = 0; d < dyads.size(); ++d) {
        col.values[d] = 1.0 - distance[d] / max_distance;
    }
    return col;
}

std::vector<double> subject_mean_similarity(const SimilarityColumn& col,
                                            std::size_t n_subjects, bool intra_community_only,
                                            const std::vector<std::string>* community) {
    if (intra_community_only && !community) {
        throw input_error("subject_mean_similarity: community labels required");
    }
    std::vector<double> sums(n_subjects, 0.0);
    std::vector<std::size_t> counts(n_subjects, 0);
    for (std::size_t d = 0; d < col.dyads.size(); ++d) {
        const auto [a, b] = col.dyads[d];
        if (is_missing(col.values[d])) continue;
        if (intra_community_only && (*community)[a] != (*community)[b]) continue;
        sums[a] += col.values[d];
        ++counts[a];
        sums[b] += col.values[d];
        ++counts[b];
    }
    std::vector<double> means(n_subjects);
    for (std::size_t s = 0; s < n_subjects; ++s) {
        means[s] = counts[s] > 0 ? sums[s] / static_cast<double>(counts[s]) : missing();
    }
    return means;
}

std::vector<SimilarityColumn> demographic_similarity(
    const AttributeTable& attributes, const std::vector<std::pair<int, int>>& dyads) {
    const std::size_t n = attributes.subjects.size();
    if (attributes.age.size() != n || attributes.gender.size() != n ||
        attributes.home_country.size() != n || attributes.ethnicities.size() != n) {
        throw input_error("attributes: column length mismatch");
    }
    for (std::size_t s = 0; s < n; ++s) {
        if (is_missing(attributes.age[s]) || attributes.gender[s].empty() ||
            attributes.home_country[s].empty() || attributes.ethnicities[s].empty()) {
            warn("subject " + attributes.subjects[s] +
                 " has missing attributes; its dyads will be missing");
        }
    }

    SimilarityColumn age_sim{"age_sim", dyads, std::vector<double>(dyads.size(), missing())};
    SimilarityColumn same_gender{"same_gender", dyads,
                                 std::vector<double>(dyads.size(), missing())};
    SimilarityColumn shared_ethnicity{"shared_ethnicity", dyads,
                                      std::vector<double>(dyads.size(), missing())};
    SimilarityColumn same_home_country{"same_home_country", dyads,
                                       std::vector<double>(dyads.size(), missing())};

    double max_age_diff = 0.0;
    std::vector<double> age_diff(dyads.size(), missing());
    for (std::size_t d = 0; d < dyads.size(); ++d) {
        const auto [a, b] = dyads[d];
        if (!is_missing(attributes.age[a]) && !is_missing(attributes.age[b])) {
            age_diff[d] = std::fabs(attributes.age[a] - attributes.age[b]);
            max_age_diff = std::max(max_age_diff, age_diff[d]);
        }
    }
    for (std::size_t d = 0; d < dyads.size(); ++d) {
        const auto [a, b] = dyads[d];
        if (!is_missing(age_diff[d])) {
            age_sim.values[d] = max_age_diff > 0.0 ? 1.0 - age_diff[d] / max_age_diff : 1.0;
        }
        if (!attributes.gender[a].empty() && !attributes.gender[b].empty()) {
            same_gender.values[d] = attributes.gender[a] == attributes.gender[b] ? 1.0 : 0.0;
        }
        if (!attributes.ethnicities[a].empty() && !attributes.ethnicities[b].empty()) {
            bool shared = false;
            for (const auto& e : attributes.ethnicities[a]) {
                if (attributes.ethnicities[b].count(e)) {
                    shared = true;
                    break;
                }
            }
            shared_ethnicity.values[d] = shared ? 1.0 : 0.0;
        }
        if (!attributes.home_country[a].empty() && !attributes.home_country[b].empty()) {
            same_home_country.values[d] =
                attributes.home_country[a] == attributes.home_country[b] ? 1.0 : 0.0;
        }
    }
    return {age_sim, same_gender, shared_ethnicity, same_home_country};
}

}  // namespace annak::behav
