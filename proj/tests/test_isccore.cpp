#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "annak/common.hpp"
#include "annak/isccore.hpp"
#include "annak/rng.hpp"

using namespace annak;
using namespace annak::isccore;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<long>(values.size()));
    long i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

// Panel with every subject holding the same runs; series filled by callback.
TimeSeriesPanel make_panel(std::size_t n_subjects, std::size_t n_regions,
                           const std::vector<long>& run_lengths,
                           const std::function<double(std::size_t, std::size_t, long)>& fill) {
    TimeSeriesPanel panel;
    long total = 0;
    for (std::size_t r = 0; r < run_lengths.size(); ++r) {
        panel.run_length[static_cast<int>(r + 1)] = run_lengths[r];
        total += run_lengths[r];
    }
    for (std::size_t s = 0; s < n_subjects; ++s) {
        panel.subjects.push_back("S" + std::to_string(s));
    }
    for (std::size_t r = 0; r < n_regions; ++r) {
        panel.regions.push_back("R" + std::to_string(r));
    }
    panel.series.resize(n_subjects);
    for (std::size_t s = 0; s < n_subjects; ++s) {
        auto& series = panel.series[s];
        for (std::size_t r = 0; r < run_lengths.size(); ++r) {
            series.runs.push_back(static_cast<int>(r + 1));
        }
        series.data.resize(static_cast<long>(n_regions), total);
        for (std::size_t r = 0; r < n_regions; ++r) {
            for (long t = 0; t < total; ++t) {
                series.data(static_cast<long>(r), t) = fill(s, r, t);
            }
        }
    }
    return panel;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pearson

TEST_CASE("pearson: identical series correlate at 1, reversal at -1") {
    CHECK(pearson_corr(vec({1, 2, 3}), vec({1, 2, 3})) == doctest::Approx(1.0));
    CHECK(pearson_corr(vec({1, 2, 3}), vec({3, 2, 1})) == doctest::Approx(-1.0));
}

TEST_CASE("pearson hand-oracle value: r = 9 / sqrt(84)") {
    const double r = pearson_corr(vec({1, 2, 3}), vec({1, 2, 4}));
    CHECK(r == doctest::Approx(9.0 / std::sqrt(84.0)).epsilon(1e-14));
}

TEST_CASE("pearson: constant input is missing, mismatched lengths are an error") {
    CHECK(is_missing(pearson_corr(vec({2, 2, 2}), vec({1, 2, 3}))));
    CHECK_THROWS_AS(pearson_corr(vec({1, 2}), vec({1, 2, 3})), input_error);
    CHECK_THROWS_AS(pearson_corr(vec({1, 2}), vec({1, 2})), input_error);
}

TEST_CASE("pearson is invariant under positive affine transforms to 1e-12") {
    Rng rng(7);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 10 + static_cast<int>(rng.integer(50));
        Eigen::VectorXd x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = 0.5 * x[i] + rng.normal();
        }
        const double base = pearson_corr(x, y);
        const double a = 0.1 + 5.0 * rng.uniform();
        const double b = 10.0 * (rng.uniform() - 0.5);
        const double scaled = pearson_corr((a * x.array() + b).matrix(), y);
        CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
    }
}

// ---------------------------------------------------------------------------
// Alignment

TEST_CASE("align_dyad: equal run sets use everything") {
    const auto panel = make_panel(2, 1, {5, 5, 5, 5}, [](auto s, auto, long t) {
        return static_cast<double>(s + 1) * t;
    });
    const auto align = align_dyad(panel, 0, 1, PartialRunPolicy::Exclude);
    CHECK_FALSE(align.excluded);
    CHECK(align.shared_runs == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("align_dyad: a subset run set restricts both sides to the intersection") {
    auto panel = make_panel(2, 1, {4, 4, 4, 4}, [](auto, auto, long t) {
        return std::sin(0.7 * t);
    });
    // Subject 0 keeps only runs {1, 2, 3}.
    panel.series[0].runs = {1, 2, 3};
    panel.series[0].data.conservativeResize(1, 12);
    panel.validate();

    const auto align = align_dyad(panel, 0, 1, PartialRunPolicy::Exclude);
    CHECK_FALSE(align.excluded);
    CHECK(align.shared_runs == std::vector<int>{1, 2, 3});
    const auto xa = aligned_series(panel, 0, 0, align.shared_runs);
    const auto xb = aligned_series(panel, 1, 0, align.shared_runs);
    CHECK(xa.size() == xb.size());
    CHECK(xa.size() == 12);
}

TEST_CASE("align_dyad: crossed run sets follow the policy flag") {
    auto panel = make_panel(2, 1, {4, 4, 4, 4}, [](auto s, auto, long t) {
        return std::cos(0.3 * t + s);
    });
    panel.series[0].runs = {1, 2, 3};
    panel.series[0].data.conservativeResize(1, 12);
    panel.series[1].runs = {2, 3, 4};
    panel.series[1].data.conservativeResize(1, 12);
    panel.validate();

    const auto excluded = align_dyad(panel, 0, 1, PartialRunPolicy::Exclude);
    CHECK(excluded.excluded);
    const auto intersected = align_dyad(panel, 0, 1, PartialRunPolicy::Intersect);
    CHECK_FALSE(intersected.excluded);
    CHECK(intersected.shared_runs == std::vector<int>{2, 3});
}

TEST_CASE("align_dyad: empty intersection always excludes") {
    auto panel = make_panel(2, 1, {4, 4}, [](auto, auto, long t) {
        return static_cast<double>(t * t % 7);
    });
    panel.series[0].runs = {1};
    panel.series[0].data.conservativeResize(1, 4);
    panel.series[1].runs = {2};
    panel.series[1].data.conservativeResize(1, 4);
    panel.validate();
    CHECK(align_dyad(panel, 0, 1, PartialRunPolicy::Intersect).excluded);
    CHECK(align_dyad(panel, 0, 1, PartialRunPolicy::Exclude).excluded);
}

// ---------------------------------------------------------------------------
// ISC table

TEST_CASE("isc_table: 3 subjects and 2 regions give a 2 x 3 table") {
    Rng rng(5);
    std::vector<double> buf(3 * 2 * 30);
    for (auto& v : buf) v = rng.normal();
    const auto panel = make_panel(3, 2, {30}, [&](auto s, auto r, long t) {
        return buf[(s * 2 + r) * 30 + static_cast<std::size_t>(t)];
    });
    const auto table = isc_table(panel, all_dyads(3));
    CHECK(table.values.rows() == 2);
    CHECK(table.values.cols() == 3);
    CHECK(table.stage == Stage::RawR);
    CHECK(table.dyads == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}});
}

TEST_CASE("isc_table: identical subject series give r = 1 everywhere") {
    const auto panel = make_panel(4, 2, {20}, [](auto, auto r, long t) {
        return std::sin(0.3 * t + r);
    });
    const auto table = isc_table(panel, all_dyads(4));
    for (long i = 0; i < table.values.rows(); ++i) {
        for (long j = 0; j < table.values.cols(); ++j) {
            CHECK(table.values(i, j) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("isc_table symmetry: (a, b) equals (b, a)") {
    Rng rng(9);
    std::vector<double> buf(2 * 40);
    for (auto& v : buf) v = rng.normal();
    const auto panel = make_panel(2, 1, {40}, [&](auto s, auto, long t) {
        return buf[s * 40 + static_cast<std::size_t>(t)];
    });
    const auto fwd = isc_table(panel, {{0, 1}});
    const auto xa = aligned_series(panel, 1, 0, {1});
    const auto xb = aligned_series(panel, 0, 0, {1});
    CHECK(fwd.values(0, 0) == doctest::Approx(pearson_corr(xa, xb)).epsilon(1e-15));
}

TEST_CASE("isc_table: excluded dyads are missing across all regions") {
    auto panel = make_panel(3, 2, {8, 8}, [](auto s, auto r, long t) {
        return std::sin(0.2 * t + s) + 0.1 * r;
    });
    panel.series[0].runs = {1};
    panel.series[0].data.conservativeResize(2, 8);
    panel.series[1].runs = {2};
    panel.series[1].data.conservativeResize(2, 8);
    panel.validate();
    const auto table = isc_table(panel, all_dyads(3), PartialRunPolicy::Intersect);
    CHECK(is_missing(table.values(0, 0)));
    CHECK(is_missing(table.values(1, 0)));
    CHECK_FALSE(is_missing(table.values(0, 1)));
}

TEST_CASE("isc_table: affine rescaling of one subject leaves values unchanged") {
    Rng rng(77);
    std::vector<double> buf(3 * 50);
    for (auto& v : buf) v = rng.normal();
    const auto panel = make_panel(3, 1, {50}, [&](auto s, auto, long t) {
        return buf[s * 50 + static_cast<std::size_t>(t)];
    });
    auto scaled = panel;
    scaled.series[1].data = (3.5 * scaled.series[1].data.array() - 11.0).matrix();
    const auto t1 = isc_table(panel, all_dyads(3));
    const auto t2 = isc_table(scaled, all_dyads(3));
    for (long j = 0; j < t1.values.cols(); ++j) {
        CHECK(t2.values(0, j) == doctest::Approx(t1.values(0, j)).epsilon(1e-12));
    }
}

TEST_CASE("isc_table: a region failing for too many dyads aborts") {
    // Region 0 is constant for subject 0, which touches 3 of 6 dyads (50%).
    const auto panel = make_panel(4, 1, {20}, [](auto s, auto, long t) {
        return s == 0 ? 1.0 : std::sin(0.4 * t + s);
    });
    CHECK_THROWS_WITH_AS(isc_table(panel, all_dyads(4)), doctest::Contains("R0"), data_error);
    // With a permissive threshold the same panel yields missing values.
    const auto table = isc_table(panel, all_dyads(4), PartialRunPolicy::Exclude, 1, 0.9);
    CHECK(is_missing(table.values(0, 0)));
    CHECK_FALSE(is_missing(table.values(0, 5)));
}

// ---------------------------------------------------------------------------
// Fisher z

TEST_CASE("fisher_z: frozen values") {
    IscTable table;
    table.regions = {"R0"};
    table.dyads = {{0, 1}, {0, 2}, {1, 2}};
    table.values.resize(1, 3);
    table.values << 0.0, 0.5, 1.0;
    const auto z = fisher_z(table);
    CHECK(z.stage == Stage::FisherZ);
    CHECK(z.values(0, 0) == 0.0);
    CHECK(z.values(0, 1) == doctest::Approx(0.5493061443340549).epsilon(1e-12));
    // Clamped at 1 - 1e-7: atanh(1 - 1e-7) = 0.5 ln((2 - 1e-7) / 1e-7).
    CHECK(z.values(0, 2) ==
          doctest::Approx(0.5 * std::log((2.0 - 1e-7) / 1e-7)).epsilon(1e-9));
    CHECK(z.values(0, 2) == doctest::Approx(8.4056212).epsilon(1e-7));
    CHECK(std::isfinite(z.values(0, 2)));
}

TEST_CASE("fisher_z of tanh is the identity on [-5, 5]") {
    IscTable table;
    table.regions = {"R0"};
    const int n = 101;
    table.values.resize(1, n);
    for (int i = 0; i < n; ++i) {
        const double z = -5.0 + 10.0 * i / (n - 1);
        table.values(0, i) = std::tanh(z);
        table.dyads.emplace_back(0, i + 1);
    }
    const auto z = fisher_z(table);
    for (int i = 0; i < n; ++i) {
        const double expected = -5.0 + 10.0 * i / (n - 1);
        CHECK(z.values(0, i) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("fisher_z requires a raw table") {
    IscTable table;
    table.regions = {"R0"};
    table.dyads = {{0, 1}};
    table.values.resize(1, 1);
    table.values << 0.3;
    const auto z = fisher_z(table);
    CHECK_THROWS_AS(fisher_z(z), input_error);
}

// ---------------------------------------------------------------------------
// Standardization

namespace {

IscTable z_table(std::vector<double> row) {
    IscTable t;
    t.regions = {"R0"};
    t.stage = Stage::FisherZ;
    t.values.resize(1, static_cast<long>(row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) {
        t.values(0, static_cast<long>(i)) = row[i];
        t.dyads.emplace_back(0, static_cast<int>(i) + 1);
    }
    return t;
}

}  // namespace

TEST_CASE("standardize_within_region: [1, 2, 3] becomes [-1, 0, 1]") {
    const auto out = standardize_within_region(z_table({1, 2, 3}));
    CHECK(out.stage == Stage::FisherZStandardized);
    CHECK(out.values(0, 0) == doctest::Approx(-1.0));
    CHECK(out.values(0, 1) == doctest::Approx(0.0));
    CHECK(out.values(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("standardize_within_region is idempotent to 1e-10 and rank preserving") {
    Rng rng(12);
    std::vector<double> row(40);
    for (auto& v : row) v = rng.normal() * 0.4 + 0.2;
    const auto t = z_table(row);
    const auto once = standardize_within_region(t);
    auto again_input = once;
    again_input.stage = Stage::FisherZ;
    const auto twice = standardize_within_region(again_input);
    for (int i = 0; i < 40; ++i) {
        CHECK(twice.values(0, i) == doctest::Approx(once.values(0, i)).epsilon(1e-10));
        for (int j = 0; j < 40; ++j) {
            if (t.values(0, i) < t.values(0, j)) {
                CHECK(once.values(0, i) < once.values(0, j));
            }
        }
    }
    // Row moments: mean 0, sample SD 1 to 1e-10.
    double mean = 0.0;
    for (int i = 0; i < 40; ++i) mean += once.values(0, i);
    mean /= 40;
    double ss = 0.0;
    for (int i = 0; i < 40; ++i) ss += (once.values(0, i) - mean) * (once.values(0, i) - mean);
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(std::fabs(std::sqrt(ss / 39) - 1.0) < 1e-10);
}

TEST_CASE("standardize_within_region: missing entries are preserved, stats use the rest") {
    auto t = z_table({1, 2, 3, 0});
    t.values(0, 3) = missing();
    const auto out = standardize_within_region(t);
    CHECK(is_missing(out.values(0, 3)));
    CHECK(out.values(0, 0) == doctest::Approx(-1.0));
    CHECK(out.values(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("standardize_within_region: zero variance names the region") {
    CHECK_THROWS_WITH_AS(standardize_within_region(z_table({0.7, 0.7, 0.7})),
                         doctest::Contains("R0"), data_error);
}

// ---------------------------------------------------------------------------
// Subject means

TEST_CASE("subject_mean_isc: simple mean over a subject's dyads") {
    auto t = z_table({0.1, 0.3, 0.5});
    t.dyads = {{0, 1}, {0, 2}, {1, 2}};
    const auto means = subject_mean_isc(t, 3);
    CHECK(means(0, 0) == doctest::Approx(0.2));  // (0.1 + 0.3) / 2
    CHECK(means(1, 0) == doctest::Approx(0.3));  // (0.1 + 0.5) / 2
    CHECK(means(2, 0) == doctest::Approx(0.4));  // (0.3 + 0.5) / 2
}

TEST_CASE("subject_mean_isc: constant table gives every subject the same mean") {
    auto t = z_table({0.25, 0.25, 0.25});
    t.dyads = {{0, 1}, {0, 2}, {1, 2}};
    const auto means = subject_mean_isc(t, 3);
    for (int s = 0; s < 3; ++s) CHECK(means(s, 0) == doctest::Approx(0.25));
}

TEST_CASE("subject_mean_isc: intra-community scope with no partner is missing") {
    auto t = z_table({0.1, 0.3, 0.5});
    t.dyads = {{0, 1}, {0, 2}, {1, 2}};
    const std::vector<std::string> community{"C1", "C1", "C2"};
    const auto means = subject_mean_isc(t, 3, MeanScope::IntraCommunityOnly, &community);
    CHECK(means(0, 0) == doctest::Approx(0.1));
    CHECK(means(1, 0) == doctest::Approx(0.1));
    CHECK(is_missing(means(2, 0)));  // C2 has a single member
}

TEST_CASE("subject_mean_isc: rejects raw tables") {
    auto t = z_table({0.1, 0.2, 0.3});
    t.stage = Stage::RawR;
    CHECK_THROWS_AS(subject_mean_isc(t, 3), input_error);
}

TEST_CASE("subject means audit against brute force on random small panels") {
    Rng rng(2025);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 4 + rng.integer(3);
        std::vector<double> buf(n * 60);
        for (auto& v : buf) v = rng.normal();
        const auto panel = make_panel(n, 1, {60}, [&](auto s, auto, long t) {
            return buf[s * 60 + static_cast<std::size_t>(t)];
        });
        const auto dyads = all_dyads(n);
        const auto z = fisher_z(isc_table(panel, dyads));
        const auto means = subject_mean_isc(z, n);

        double total_of_means = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            double sum = 0.0;
            int count = 0;
            for (std::size_t d = 0; d < dyads.size(); ++d) {
                if (static_cast<std::size_t>(dyads[d].first) == s ||
                    static_cast<std::size_t>(dyads[d].second) == s) {
                    sum += z.values(0, static_cast<long>(d));
                    ++count;
                }
            }
            CHECK(means(static_cast<long>(s), 0) ==
                  doctest::Approx(sum / count).epsilon(1e-12));
            total_of_means += means(static_cast<long>(s), 0);
        }
        // Each dyad feeds exactly two subject means with weight 1/(n-1), so
        // the average of subject means equals the region's dyad mean.
        const double table_mean = z.values.row(0).mean();
        CHECK(total_of_means / static_cast<double>(n) ==
              doctest::Approx(table_mean).epsilon(1e-12));
    }
}

TEST_CASE("panel validation catches broken invariants") {
    auto panel = make_panel(2, 1, {10}, [](auto, auto, long t) {
        return static_cast<double>(t);
    });
    auto bad = panel;
    bad.series[1].data.conservativeResize(1, 7);
    CHECK_THROWS_AS(bad.validate(), input_error);
    auto bad2 = panel;
    bad2.series[0].runs = {1, 1};
    CHECK_THROWS_AS(bad2.validate(), input_error);
    auto bad3 = panel;
    bad3.series[0].runs = {3};
    CHECK_THROWS_AS(bad3.validate(), input_error);
}
