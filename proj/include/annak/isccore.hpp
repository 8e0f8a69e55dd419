#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace annak::isccore {

enum class Stage { RawR, FisherZ, FisherZStandardized };
enum class PartialRunPolicy { Exclude, Intersect };
enum class MeanScope { All, IntraCommunityOnly };

std::string to_string(Stage s);

// Per-subject region x time matrices. Every subject shares the region list
// and the per-run time-point count; a subject's matrix holds only its usable
// runs, concatenated in run order.
struct TimeSeriesPanel {
    struct SubjectSeries {
        Eigen::MatrixXd data;   // region x time (usable runs only)
        std::vector<int> runs;  // usable run ids, ascending
    };

    std::vector<std::string> subjects;
    std::vector<std::string> regions;
    std::map<int, long> run_length;  // run id -> time points, shared across subjects
    std::vector<SubjectSeries> series;

    void validate() const;  // throws input_error on any broken invariant

    // Column offset of a run inside a subject's concatenated matrix.
    long run_offset(std::size_t subject, int run) const;
    int subject_index(const std::string& name) const;
};

// Pearson correlation; constant input yields NaN (the caller decides whether
// that is tolerable), length mismatch or fewer than 3 points is an error.
double pearson_corr(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct DyadAlignment {
    std::vector<int> shared_runs;  // ascending; empty when excluded
    bool excluded = false;
};

// Restricts two subjects to the runs they share. With the Exclude policy a
// dyad whose usable sets are crossed (neither contains the other) is
// excluded; one set containing the other always computes on the
// intersection, and an empty intersection always excludes.
DyadAlignment align_dyad(const TimeSeriesPanel& panel, std::size_t a, std::size_t b,
                         PartialRunPolicy policy);

// Concatenated series of one subject restricted to the given runs.
Eigen::VectorXd aligned_series(const TimeSeriesPanel& panel, std::size_t subject,
                               std::size_t region, const std::vector<int>& runs);

struct IscTable {
    std::vector<std::string> regions;
    std::vector<std::pair<int, int>> dyads;  // subject index pairs, a < b
    Eigen::MatrixXd values;                  // region x dyad, NaN = missing
    Stage stage = Stage::RawR;
};

std::vector<std::pair<int, int>> all_dyads(std::size_t n_subjects);

// Raw Pearson ISC per (region, dyad). Excluded dyads are missing across all
// regions. A region whose correlations fail (constant series) for more than
// max_failure_fraction of the computable dyads aborts with a data error.
IscTable isc_table(const TimeSeriesPanel& panel, const std::vector<std::pair<int, int>>& dyads,
                   PartialRunPolicy policy = PartialRunPolicy::Exclude, int threads = 1,
                   double max_failure_fraction = 0.10);

// Streaming core: fills values for regions [region_begin, region_end) only.
// `values` must be (region_end - region_begin) x dyads. Used by the pipeline
// to keep full-scale panels out of memory.
void isc_fill_rows(const TimeSeriesPanel& panel, const std::vector<std::pair<int, int>>& dyads,
                   const std::vector<DyadAlignment>& alignments, std::size_t region_begin,
                   std::size_t region_end, Eigen::Ref<Eigen::MatrixXd> values);

// Elementwise atanh after clamping |r| to 1 - clamp_eps.
IscTable fisher_z(const IscTable& table, double clamp_eps = 1e-7);

// Z-scores each region row over its non-missing entries (n-1 denominator).
IscTable standardize_within_region(const IscTable& table);

// Mean over all non-missing dyads containing each subject; under
// IntraCommunityOnly only same-community partners count. Result is
// subject x region, NaN where a subject has no eligible dyad.
Eigen::MatrixXd subject_mean_isc(const IscTable& table, std::size_t n_subjects,
                                 MeanScope scope = MeanScope::All,
                                 const std::vector<std::string>* community = nullptr);

}  // namespace annak::isccore
