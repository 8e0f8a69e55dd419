#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "annak/common.hpp"
#include "annak/graphnet.hpp"
#include "annak/isccore.hpp"
#include "annak/statkit.hpp"
#include "annak/synthlab.hpp"

using namespace annak;
using namespace annak::synthlab;
using annak::isccore::all_dyads;

namespace {

std::vector<std::string> subject_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("S" + std::to_string(i));
    return names;
}

PlantSpec basic_spec(std::size_t n, std::size_t regions, long t, std::uint64_t seed) {
    PlantSpec spec;
    spec.n_subjects = n;
    spec.n_regions = regions;
    spec.n_timepoints_per_run = t;
    spec.n_runs = 1;
    spec.alpha.assign(n, 0.5);
    spec.seed = seed;
    return spec;
}

double sample_corr(const isccore::TimeSeriesPanel& panel, std::size_t region, std::size_t a,
                   std::size_t b) {
    return isccore::pearson_corr(panel.series[a].data.row(region).transpose(),
                                 panel.series[b].data.row(region).transpose());
}

}  // namespace

TEST_CASE("identical seeds give bitwise-identical panels, networks, and ratings") {
    PlantSpec spec = basic_spec(8, 3, 50, 99);
    spec.planted_regions = {0};
    const auto names = subject_names(8);
    const auto p1 = generate_timeseries(spec, names);
    const auto p2 = generate_timeseries(spec, names);
    for (std::size_t s = 0; s < 8; ++s) {
        CHECK(p1.series[s].data == p2.series[s].data);
    }
    const auto g1 = generate_network({2, 2, 1, 1, 0, 0}, 7);
    const auto g2 = generate_network({2, 2, 1, 1, 0, 0}, 7);
    CHECK(g1.edges() == g2.edges());
    const auto r1 = generate_ratings({0.2, 0.5, 0.9, 1.0}, subject_names(4), 14, 5);
    const auto r2 = generate_ratings({0.2, 0.5, 0.9, 1.0}, subject_names(4), 14, 5);
    CHECK(r1.values == r2.values);
}

TEST_CASE("generate_network reproduces the requested in-degree profile") {
    const std::vector<int> profile{2, 2, 1, 1, 0, 0};
    const auto g = generate_network(profile, 11);
    const auto deg = graphnet::in_degree_centrality(g);
    for (std::size_t i = 0; i < profile.size(); ++i) {
        CHECK(deg[i] == profile[i]);
    }
}

TEST_CASE("generate_network: all-zero profile gives an empty edge set") {
    const auto g = generate_network({0, 0, 0, 0, 0}, 1);
    CHECK(g.edges().empty());
}

TEST_CASE("generate_network: infeasible degree sequence is an error") {
    CHECK_THROWS_WITH_AS(generate_network({5, 0, 0, 0}, 1), doctest::Contains("infeasible"),
                         input_error);
}

TEST_CASE("generate_network respects community boundaries") {
    std::vector<int> profile(20, 2);
    const auto g = generate_network(profile, 3, 2);
    for (const auto& [from, to] : g.edges()) {
        CHECK(g.community_of(from) == g.community_of(to));
    }
    const auto labels = g.community_labels();
    CHECK(labels == std::vector<std::string>{"C1", "C2"});
}

TEST_CASE("skewed degree profile: median 2, max at the cap, splits at 2") {
    for (const std::size_t n : {63u, 40u, 100u}) {
        const auto profile = skewed_degree_profile(n);
        CHECK(profile.size() == n);
        CHECK(*std::max_element(profile.begin(), profile.end()) == 9);
        const auto split = graphnet::median_split(profile, graphnet::SplitMode::MedianSplit);
        CHECK(split.median == doctest::Approx(2.0));
    }
}

TEST_CASE("alpha_from_in_degree is monotone with the requested range") {
    const std::vector<int> deg{0, 4, 2, 9, 2};
    const auto alpha = alpha_from_in_degree(deg, 0.3, 0.8);
    CHECK(alpha[0] == doctest::Approx(0.3));
    CHECK(alpha[3] == doctest::Approx(0.8));
    for (std::size_t i = 0; i < deg.size(); ++i) {
        for (std::size_t j = 0; j < deg.size(); ++j) {
            if (deg[i] < deg[j]) CHECK(alpha[i] < alpha[j] + 1e-12);
        }
    }
}

TEST_CASE("alpha = 1 everywhere makes planted series identical") {
    PlantSpec spec = basic_spec(5, 2, 40, 3);
    spec.planted_regions = {1};
    spec.alpha.assign(5, 1.0);
    const auto panel = generate_timeseries(spec, subject_names(5));
    for (std::size_t s = 1; s < 5; ++s) {
        CHECK((panel.series[s].data.row(1) - panel.series[0].data.row(1)).norm() == 0.0);
    }
}

TEST_CASE("alpha = 0 gives near-zero mean ISC") {
    const long t = 4000;
    PlantSpec spec = basic_spec(10, 1, t, 17);
    spec.planted_regions = {0};
    spec.alpha.assign(10, 0.0);
    const auto panel = generate_timeseries(spec, subject_names(10));
    double sum = 0.0;
    int count = 0;
    for (const auto& [a, b] : all_dyads(10)) {
        sum += sample_corr(panel, 0, a, b);
        ++count;
    }
    CHECK(std::fabs(sum / count) < 3.0 / std::sqrt(static_cast<double>(t)));
}

TEST_CASE("expected ISC oracle: product form and null regions") {
    PlantSpec spec = basic_spec(4, 3, 50, 1);
    spec.planted_regions = {0};
    spec.alpha = {1.0, 0.0, 0.9, 0.6};
    spec.null_alpha = 0.2;
    CHECK(expected_isc_oracle(spec, 0, 0, 2) == doctest::Approx(0.9));
    CHECK(expected_isc_oracle(spec, 0, 1, 2) == doctest::Approx(0.0));
    CHECK(expected_isc_oracle(spec, 0, 2, 3) == doctest::Approx(0.54));
    CHECK(expected_isc_oracle(spec, 1, 2, 3) == doctest::Approx(0.04));
    CHECK_THROWS_AS(expected_isc_oracle(spec, 0, 1, 1), input_error);
}

TEST_CASE("alpha (0.8, 0.5) at T = 10000 lands within 0.40 +/- 0.02") {
    PlantSpec spec = basic_spec(2, 1, 10000, 23);
    spec.planted_regions = {0};
    spec.alpha = {0.8, 0.5};
    const auto panel = generate_timeseries(spec, subject_names(2));
    const double r = sample_corr(panel, 0, 0, 1);
    CHECK(std::fabs(r - 0.40) < 0.02);
}

TEST_CASE("sample ISC converges to the oracle at the 4/sqrt(T) rate") {
    const long t = 2500;
    PlantSpec spec = basic_spec(20, 2, t, 31);
    spec.planted_regions = {0};
    spec.null_alpha = 0.3;
    for (std::size_t s = 0; s < 20; ++s) {
        spec.alpha[s] = 0.3 + 0.5 * static_cast<double>(s) / 19.0;
    }
    const auto panel = generate_timeseries(spec, subject_names(20));
    const double bound = 4.0 / std::sqrt(static_cast<double>(t));
    std::size_t within = 0, total = 0;
    for (std::size_t region = 0; region < 2; ++region) {
        for (const auto& [a, b] : all_dyads(20)) {
            const double r = sample_corr(panel, region, a, b);
            const double expected = expected_isc_oracle(spec, region, a, b);
            if (std::fabs(r - expected) < bound) ++within;
            ++total;
        }
    }
    CHECK(static_cast<double>(within) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("AnnaK ordering: group-mean sample ISC has HH > LH > LL at T = 5000") {
    const std::size_t n = 24;
    PlantSpec spec = basic_spec(n, 1, 5000, 41);
    spec.planted_regions = {0};
    std::vector<int> deg(n);
    for (std::size_t i = 0; i < n; ++i) deg[i] = static_cast<int>(i % 6);
    spec.alpha = alpha_from_in_degree(deg, 0.3, 0.8);
    const auto panel = generate_timeseries(spec, subject_names(n));
    const auto split = graphnet::median_split(deg, graphnet::SplitMode::MedianSplit);

    std::map<graphnet::DyadCategory, std::pair<double, int>> acc;
    for (const auto& [a, b] : all_dyads(n)) {
        const auto cat = graphnet::dyad_category(split.group[a], split.group[b]);
        acc[cat].first += sample_corr(panel, 0, a, b);
        acc[cat].second += 1;
    }
    const double hh = acc[graphnet::DyadCategory::HighHigh].first /
                      acc[graphnet::DyadCategory::HighHigh].second;
    const double lh = acc[graphnet::DyadCategory::LowHigh].first /
                      acc[graphnet::DyadCategory::LowHigh].second;
    const double ll = acc[graphnet::DyadCategory::LowLow].first /
                      acc[graphnet::DyadCategory::LowLow].second;
    CHECK(hh > lh);
    CHECK(lh > ll);
}

TEST_CASE("ratings: alpha = 1 gives identical vectors and similarity 1") {
    const auto ratings = generate_ratings({1.0, 1.0, 1.0}, subject_names(3), 14, 9);
    CHECK(ratings.values[0] == ratings.values[1]);
    CHECK(ratings.values[1] == ratings.values[2]);
    const auto col = behav::rating_similarity(ratings, all_dyads(3), "s");
    for (double v : col.values) CHECK(v == 1.0);
}

TEST_CASE("ratings: monotone alpha gradient drives subject-mean similarity (200 seeds)") {
    const std::size_t n = 60;
    std::vector<double> alpha(n);
    for (std::size_t i = 0; i < n; ++i) {
        alpha[i] = 0.2 + 0.7 * static_cast<double>(i) / (n - 1);
    }
    const auto names = subject_names(n);
    const auto dyads = all_dyads(n);
    double rho_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const auto ratings = generate_ratings(alpha, names, 14, seed);
        const auto col = behav::rating_similarity(ratings, dyads, "s");
        const auto means = behav::subject_mean_similarity(col, n);
        const auto [rho, p] = statkit::spearman_rho(alpha, means);
        rho_sum += rho;
    }
    CHECK(rho_sum / 200.0 > 0.6);
}

TEST_CASE("nearest-neighbor generator: correlation decays with trait distance") {
    const std::size_t n = 12;
    PlantSpec spec = basic_spec(n, 1, 6000, 77);
    spec.planted_regions = {0};
    spec.generator = Generator::NearestNeighbor;
    spec.nn_length_scale = 0.3;
    for (std::size_t i = 0; i < n; ++i) {
        spec.alpha[i] = static_cast<double>(i) / (n - 1);
    }
    const auto panel = generate_timeseries(spec, subject_names(n));
    for (const auto& [a, b] : all_dyads(n)) {
        const double r = sample_corr(panel, 0, a, b);
        const double expected = expected_isc_oracle(spec, 0, a, b);
        CHECK(std::fabs(r - expected) < 0.08);
    }
}

TEST_CASE("nearest-neighbor panels attenuate HH-LL but keep HH-LH positive") {
    const std::size_t n = 24;
    std::vector<int> deg(n);
    for (std::size_t i = 0; i < n; ++i) deg[i] = static_cast<int>(i % 6);
    const auto split = graphnet::median_split(deg, graphnet::SplitMode::MedianSplit);

    auto group_means = [&](Generator gen) {
        PlantSpec spec = basic_spec(n, 1, 5000, 83);
        spec.planted_regions = {0};
        spec.generator = gen;
        spec.alpha = alpha_from_in_degree(deg, 0.3, 0.8);
        const auto panel = generate_timeseries(spec, subject_names(n));
        std::map<graphnet::DyadCategory, std::pair<double, int>> acc;
        for (const auto& [a, b] : all_dyads(n)) {
            const auto cat = graphnet::dyad_category(split.group[a], split.group[b]);
            acc[cat].first += sample_corr(panel, 0, a, b);
            acc[cat].second += 1;
        }
        std::map<graphnet::DyadCategory, double> means;
        for (auto& [cat, sums] : acc) means[cat] = sums.first / sums.second;
        return means;
    };

    const auto annak = group_means(Generator::SharedSignal);
    const auto nn = group_means(Generator::NearestNeighbor);
    using graphnet::DyadCategory;
    const double annak_hh_ll = annak.at(DyadCategory::HighHigh) - annak.at(DyadCategory::LowLow);
    const double nn_hh_ll = nn.at(DyadCategory::HighHigh) - nn.at(DyadCategory::LowLow);
    const double nn_hh_lh = nn.at(DyadCategory::HighHigh) - nn.at(DyadCategory::LowHigh);
    CHECK(nn_hh_lh > 0.0);
    CHECK(nn_hh_ll < 0.5 * annak_hh_ll);
}

TEST_CASE("plant spec validation") {
    PlantSpec spec = basic_spec(4, 2, 50, 1);
    spec.alpha[2] = 1.5;
    CHECK_THROWS_AS(spec.validate(), input_error);
    spec = basic_spec(4, 2, 50, 1);
    spec.planted_regions = {5};
    CHECK_THROWS_AS(spec.validate(), input_error);
    spec = basic_spec(4, 2, 2, 1);
    CHECK_THROWS_AS(spec.validate(), input_error);
}
