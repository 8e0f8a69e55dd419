#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "annak/behav.hpp"
#include "annak/graphnet.hpp"
#include "annak/isccore.hpp"

namespace annak::synthlab {

enum class Generator {
    // Common shared signal with per-subject coupling alpha: E r = a_i * a_j.
    SharedSignal,
    // Coupling decays with distance on the trait scale: E r = exp(-|p_i - p_j| / ell).
    NearestNeighbor,
};

struct PlantSpec {
    std::size_t n_subjects = 0;
    std::size_t n_regions = 0;
    std::set<std::size_t> planted_regions;
    long n_timepoints_per_run = 0;
    int n_runs = 1;
    std::vector<double> alpha;  // per subject, in [0, 1]
    double null_alpha = 0.0;
    std::uint64_t seed = 1;
    Generator generator = Generator::SharedSignal;
    double nn_length_scale = 0.3;

    void validate() const;
};

// Deterministic directed network whose in-degree sequence equals the profile
// (node i receives profile[i] distinct nominators).
graphnet::SocialGraph generate_network(const std::vector<int>& degree_profile,
                                       std::uint64_t seed, int n_communities = 1);

// Right-skewed in-degree profile built from quantiles of a truncated
// geometric distribution (median 2, maximum max_degree).
std::vector<int> skewed_degree_profile(std::size_t n, int max_degree = 9);

// alpha_i = alpha_min + (alpha_max - alpha_min) * rank(k_i) / (n - 1), with
// ordinal ranks (ties broken by subject order).
std::vector<double> alpha_from_in_degree(const std::vector<int>& in_degree, double alpha_min,
                                         double alpha_max);

// Unit-variance panel: in planted regions subject i's series is
// a_i * shared + sqrt(1 - a_i^2) * noise; non-planted regions use null_alpha
// for every subject. Generation is streamed per region so identical seeds
// give identical panels regardless of chunking.
isccore::TimeSeriesPanel generate_timeseries(const PlantSpec& spec,
                                             const std::vector<std::string>& subjects);

// Region-streamed variant for full-scale panels: fills only the given region
// rows (all series matrices must be pre-sized by make_panel_shell).
isccore::TimeSeriesPanel make_panel_shell(const PlantSpec& spec,
                                          const std::vector<std::string>& subjects,
                                          std::size_t n_region_rows);
void fill_region(const PlantSpec& spec, std::size_t region, std::size_t target_row,
                 isccore::TimeSeriesPanel& panel);

// Expected ISC under the generative model.
double expected_isc_oracle(const PlantSpec& spec, std::size_t region, std::size_t subject_a,
                           std::size_t subject_b);

// Ratings as a discretized mixture of a shared profile (weight alpha_i) and
// idiosyncratic noise, mapped to integers 1..5 by standard-normal quintiles.
behav::RatingMatrix generate_ratings(const std::vector<double>& alpha,
                                     const std::vector<std::string>& subjects,
                                     std::size_t n_items, std::uint64_t seed);

// Plausible demographic attributes for covariate exercises.
behav::AttributeTable generate_attributes(const std::vector<std::string>& subjects,
                                          std::uint64_t seed);

}  // namespace annak::synthlab
