#include "annak/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "annak/common.hpp"
#include "annak/rng.hpp"

namespace annak::synthlab {

namespace {
constexpr std::uint64_t kStreamSignal = 0xA11CE5ULL;
constexpr std::uint64_t kStreamNoise = 0xB0B1E5ULL;
constexpr std::uint64_t kStreamNetwork = 0x4E7ULL;
constexpr std::uint64_t kStreamRatingShared = 0x5EED1ULL;
constexpr std::uint64_t kStreamRatingNoise = 0x5EED2ULL;
constexpr std::uint64_t kStreamAttributes = 0xA77ULL;
}  // namespace

void PlantSpec::validate() const {
    if (n_subjects < 2) throw input_error("plant spec: need at least 2 subjects");
    if (alpha.size() != n_subjects) throw input_error("plant spec: alpha size mismatch");
    for (double a : alpha) {
        if (a < 0.0 || a > 1.0) throw input_error("plant spec: alpha outside [0, 1]");
    }
    if (null_alpha < 0.0 || null_alpha > 1.0) {
        throw input_error("plant spec: null_alpha outside [0, 1]");
    }
    for (std::size_t r : planted_regions) {
        if (r >= n_regions) throw input_error("plant spec: planted region out of range");
    }
    if (n_timepoints_per_run < 3 || n_runs < 1) {
        throw input_error("plant spec: need at least 1 run of 3+ time points");
    }
    if (nn_length_scale <= 0.0) throw input_error("plant spec: length scale must be positive");
}

graphnet::SocialGraph generate_network(const std::vector<int>& degree_profile,
                                       std::uint64_t seed, int n_communities) {
    const std::size_t n = degree_profile.size();
    if (n < 4) throw input_error("generate_network: need at least 4 nodes");
    if (n_communities < 1 || static_cast<std::size_t>(n_communities) > n) {
        throw input_error("generate_network: bad community count");
    }

    std::vector<std::string> nodes;
    std::map<std::string, std::string> community;
    std::vector<std::vector<std::size_t>> members(n_communities);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "S%03zu", i + 1);
        nodes.emplace_back(buf);
        const int c = static_cast<int>(i * n_communities / n);
        community[nodes.back()] = "C" + std::to_string(c + 1);
        members[c].push_back(i);
    }

    Rng rng(mix_seed(seed, kStreamNetwork));
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        const int want = degree_profile[i];
        if (want < 0) throw input_error("generate_network: negative degree");
        const int c = static_cast<int>(i * n_communities / n);
        std::vector<std::size_t> pool;
        for (std::size_t j : members[c]) {
            if (j != i) pool.push_back(j);
        }
        if (static_cast<std::size_t>(want) > pool.size()) {
            throw input_error("generate_network: infeasible degree " + std::to_string(want) +
                              " for node " + nodes[i]);
        }
        const auto picks = rng.sample_without_replacement(pool.size(),
                                                          static_cast<std::size_t>(want));
        for (std::size_t p : picks) edges.emplace_back(nodes[pool[p]], nodes[i]);
    }
    return graphnet::SocialGraph::build(std::move(nodes), edges, std::move(community));
}

std::vector<int> skewed_degree_profile(std::size_t n, int max_degree) {
    // Quantiles of a geometric(q = 0.75) distribution truncated at max_degree;
    // for n >= 5 the sample median lands on 2 and the top quantile on max.
    const double q = 0.75;
    const double norm = 1.0 - std::pow(q, max_degree + 1);
    std::vector<int> profile(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        int k = 0;
        while (k < max_degree && (1.0 - std::pow(q, k + 1)) / norm < u) ++k;
        profile[i] = k;
    }
    return profile;
}

std::vector<double> alpha_from_in_degree(const std::vector<int>& in_degree, double alpha_min,
                                         double alpha_max) {
    const std::size_t n = in_degree.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return in_degree[a] < in_degree[b];
    });
    std::vector<double> alpha(n);
    for (std::size_t rank = 0; rank < n; ++rank) {
        alpha[order[rank]] =
            alpha_min + (alpha_max - alpha_min) * static_cast<double>(rank) /
                            static_cast<double>(n - 1);
    }
    return alpha;
}

namespace {

// Trait positions for the nearest-neighbor generator: ordinal alpha ranks
// mapped to [0, 1].
std::vector<double> trait_positions(const std::vector<double>& alpha) {
    const std::size_t n = alpha.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return alpha[a] < alpha[b]; });
    std::vector<double> pos(n);
    for (std::size_t rank = 0; rank < n; ++rank) {
        pos[order[rank]] = static_cast<double>(rank) / static_cast<double>(n - 1);
    }
    return pos;
}

}  // namespace

isccore::TimeSeriesPanel make_panel_shell(const PlantSpec& spec,
                                          const std::vector<std::string>& subjects,
                                          std::size_t n_region_rows) {
    spec.validate();
    if (subjects.size() != spec.n_subjects) {
        throw input_error("make_panel_shell: subject list size mismatch");
    }
    isccore::TimeSeriesPanel panel;
    panel.subjects = subjects;
    const long total = spec.n_timepoints_per_run * spec.n_runs;
    for (int run = 1; run <= spec.n_runs; ++run) {
        panel.run_length[run] = spec.n_timepoints_per_run;
    }
    panel.series.resize(subjects.size());
    for (auto& s : panel.series) {
        s.data.resize(static_cast<long>(n_region_rows), total);
        for (int run = 1; run <= spec.n_runs; ++run) s.runs.push_back(run);
    }
    return panel;
}

void fill_region(const PlantSpec& spec, std::size_t region, std::size_t target_row,
                 isccore::TimeSeriesPanel& panel) {
    const long total = spec.n_timepoints_per_run * spec.n_runs;
    const bool planted = spec.planted_regions.count(region) > 0;

    Eigen::VectorXd shared(total);
    {
        Rng rng(mix_seed(spec.seed, kStreamSignal, region));
        for (long t = 0; t < total; ++t) shared[t] = rng.normal();
    }

    if (planted && spec.generator == Generator::NearestNeighbor) {
        // AR chain across subjects ordered by trait position; the correlation
        // between two subjects' series is exp(-|p_i - p_j| / ell) exactly.
        const std::vector<double> pos = trait_positions(spec.alpha);
        std::vector<std::size_t> order(spec.n_subjects);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return pos[a] < pos[b]; });
        Eigen::VectorXd prev;
        double prev_pos = 0.0;
        for (std::size_t idx = 0; idx < order.size(); ++idx) {
            const std::size_t s = order[idx];
            Rng rng(mix_seed(spec.seed, kStreamNoise, region, s));
            Eigen::VectorXd noise(total);
            for (long t = 0; t < total; ++t) noise[t] = rng.normal();
            Eigen::VectorXd x;
            if (idx == 0) {
                x = noise;
            } else {
                const double rho = std::exp(-(pos[s] - prev_pos) / spec.nn_length_scale);
                x = rho * prev + std::sqrt(1.0 - rho * rho) * noise;
            }
            panel.series[s].data.row(static_cast<long>(target_row)) = x.transpose();
            prev = std::move(x);
            prev_pos = pos[s];
        }
        return;
    }

    for (std::size_t s = 0; s < spec.n_subjects; ++s) {
        const double a = planted ? spec.alpha[s] : spec.null_alpha;
        const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
        Rng rng(mix_seed(spec.seed, kStreamNoise, region, s));
        auto row = panel.series[s].data.row(static_cast<long>(target_row));
        for (long t = 0; t < total; ++t) {
            row[t] = a * shared[t] + b * rng.normal();
        }
    }
}

isccore::TimeSeriesPanel generate_timeseries(const PlantSpec& spec,
                                             const std::vector<std::string>& subjects) {
    isccore::TimeSeriesPanel panel = make_panel_shell(spec, subjects, spec.n_regions);
    panel.regions.reserve(spec.n_regions);
    for (std::size_t r = 0; r < spec.n_regions; ++r) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "region_%03zu", r + 1);
        panel.regions.emplace_back(buf);
        fill_region(spec, r, r, panel);
    }
    return panel;
}

double expected_isc_oracle(const PlantSpec& spec, std::size_t region, std::size_t subject_a,
                           std::size_t subject_b) {
    if (subject_a == subject_b) throw input_error("expected_isc_oracle: identical subjects");
    if (!spec.planted_regions.count(region)) {
        return spec.null_alpha * spec.null_alpha;
    }
    if (spec.generator == Generator::NearestNeighbor) {
        const std::vector<double> pos = trait_positions(spec.alpha);
        return std::exp(-std::fabs(pos[subject_a] - pos[subject_b]) / spec.nn_length_scale);
    }
    return spec.alpha[subject_a] * spec.alpha[subject_b];
}

behav::RatingMatrix generate_ratings(const std::vector<double>& alpha,
                                     const std::vector<std::string>& subjects,
                                     std::size_t n_items, std::uint64_t seed) {
    if (alpha.size() != subjects.size()) throw input_error("generate_ratings: size mismatch");
    behav::RatingMatrix ratings;
    ratings.subjects = subjects;
    for (std::size_t i = 0; i < n_items; ++i) {
        ratings.items.push_back("item_" + std::to_string(i + 1));
    }

    Eigen::VectorXd shared(static_cast<long>(n_items));
    {
        Rng rng(mix_seed(seed, kStreamRatingShared));
        for (long j = 0; j < shared.size(); ++j) shared[j] = rng.normal();
    }

    // Standard-normal quintile cuts map the latent value to integers 1..5.
    static constexpr double kCuts[4] = {-0.8416212335729143, -0.2533471031357997,
                                        0.2533471031357997, 0.8416212335729143};

    ratings.values.resize(subjects.size());
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        Rng rng(mix_seed(seed, kStreamRatingNoise, s));
        const double a = alpha[s];
        const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
        ratings.values[s].resize(n_items);
        for (std::size_t j = 0; j < n_items; ++j) {
            const double v = a * shared[static_cast<long>(j)] + b * rng.normal();
            int rating = 1;
            for (double cut : kCuts) {
                if (v > cut) ++rating;
            }
            ratings.values[s][j] = rating;
        }
    }
    return ratings;
}

behav::AttributeTable generate_attributes(const std::vector<std::string>& subjects,
                                          std::uint64_t seed) {
    static const char* kCountries[] = {"USA", "USA", "USA", "USA", "China", "India", "Korea"};
    static const char* kEthnicities[] = {"Asian", "Black", "Hispanic", "White",
                                         "PacificIslander", "NativeAmerican"};

    behav::AttributeTable attrs;
    attrs.subjects = subjects;
    Rng rng(mix_seed(seed, kStreamAttributes));
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        attrs.age.push_back(18.0 + static_cast<double>(rng.integer(4)));
        attrs.gender.push_back(rng.uniform() < 0.55 ? "F" : "M");
        attrs.home_country.push_back(kCountries[rng.integer(std::size(kCountries))]);
        std::set<std::string> eth;
        eth.insert(kEthnicities[rng.integer(std::size(kEthnicities))]);
        if (rng.uniform() < 0.2) {
            eth.insert(kEthnicities[rng.integer(std::size(kEthnicities))]);
        }
        attrs.ethnicities.push_back(std::move(eth));
    }
    return attrs;
}

}  // namespace annak::synthlab
