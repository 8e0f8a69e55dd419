#include "annak/isccore.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "annak/common.hpp"
#include "annak/parallel.hpp"

namespace annak::isccore {

std::string to_string(Stage s) {
    switch (s) {
        case Stage::RawR: return "RawR";
        case Stage::FisherZ: return "FisherZ";
        default: return "FisherZStandardized";
    }
}

void TimeSeriesPanel::validate() const {
    if (subjects.size() != series.size()) {
        throw input_error("panel: subjects/series size mismatch");
    }
    if (regions.empty()) throw input_error("panel: no regions");
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        const auto& ss = series[s];
        if (ss.data.rows() != static_cast<long>(regions.size())) {
            throw input_error("panel: region count mismatch for subject " + subjects[s]);
        }
        if (!std::is_sorted(ss.runs.begin(), ss.runs.end()) ||
            std::adjacent_find(ss.runs.begin(), ss.runs.end()) != ss.runs.end()) {
            throw input_error("panel: runs must be strictly increasing for subject " +
                              subjects[s]);
        }
        long total = 0;
        for (int run : ss.runs) {
            auto it = run_length.find(run);
            if (it == run_length.end()) {
                throw input_error("panel: unknown run " + std::to_string(run) +
                                  " for subject " + subjects[s]);
            }
            total += it->second;
        }
        if (ss.data.cols() != total) {
            throw input_error("panel: time-point count mismatch for subject " + subjects[s] +
                              ": have " + std::to_string(ss.data.cols()) + ", expected " +
                              std::to_string(total));
        }
    }
}

long TimeSeriesPanel::run_offset(std::size_t subject, int run) const {
    long offset = 0;
    for (int r : series[subject].runs) {
        if (r == run) return offset;
        offset += run_length.at(r);
    }
    throw input_error("run " + std::to_string(run) + " not usable for subject " +
                      subjects[subject]);
}

int TimeSeriesPanel::subject_index(const std::string& name) const {
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (subjects[i] == name) return static_cast<int>(i);
    }
    throw input_error("unknown subject: " + name);
}

double pearson_corr(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw input_error("pearson_corr: length mismatch");
    if (x.size() < 3) throw input_error("pearson_corr: need at least 3 points");
    const double n = static_cast<double>(x.size());
    const double mx = x.mean();
    const double my = y.mean();
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (long i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (void)n;
    if (sxx <= 0.0 || syy <= 0.0) return missing();
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

DyadAlignment align_dyad(const TimeSeriesPanel& panel, std::size_t a, std::size_t b,
                         PartialRunPolicy policy) {
    if (a == b) throw input_error("align_dyad: identical subjects");
    const auto& ra = panel.series[a].runs;
    const auto& rb = panel.series[b].runs;
    DyadAlignment out;
    std::set_intersection(ra.begin(), ra.end(), rb.begin(), rb.end(),
                          std::back_inserter(out.shared_runs));
    if (out.shared_runs.empty()) {
        out.excluded = true;
        return out;
    }
    if (policy == PartialRunPolicy::Exclude) {
        const bool a_in_b = out.shared_runs.size() == ra.size();
        const bool b_in_a = out.shared_runs.size() == rb.size();
        if (!a_in_b && !b_in_a) {
            out.excluded = true;
            out.shared_runs.clear();
        }
    }
    return out;
}

Eigen::VectorXd aligned_series(const TimeSeriesPanel& panel, std::size_t subject,
                               std::size_t region, const std::vector<int>& runs) {
    long total = 0;
    for (int run : runs) total += panel.run_length.at(run);
    Eigen::VectorXd out(total);
    long pos = 0;
    for (int run : runs) {
        const long len = panel.run_length.at(run);
        const long offset = panel.run_offset(subject, run);
        out.segment(pos, len) =
            panel.series[subject].data.row(static_cast<long>(region)).segment(offset, len);
        pos += len;
    }
    return out;
}

std::vector<std::pair<int, int>> all_dyads(std::size_t n_subjects) {
    std::vector<std::pair<int, int>> dyads;
    dyads.reserve(n_subjects * (n_subjects - 1) / 2);
    for (std::size_t a = 0; a < n_subjects; ++a) {
        for (std::size_t b = a + 1; b < n_subjects; ++b) {
            dyads.emplace_back(static_cast<int>(a), static_cast<int>(b));
        }
    }
    return dyads;
}

void isc_fill_rows(const TimeSeriesPanel& panel, const std::vector<std::pair<int, int>>& dyads,
                   const std::vector<DyadAlignment>& alignments, std::size_t region_begin,
                   std::size_t region_end, Eigen::Ref<Eigen::MatrixXd> values) {
    const std::size_t n_subj = panel.subjects.size();

    // Unit-normalized full series per subject for the fast path (dyads whose
    // usable run sets are identical); sliced dyads re-standardize per pair.
    std::vector<Eigen::VectorXd> unit(n_subj);
    std::vector<char> unit_ok(n_subj, 0);

    for (std::size_t r = region_begin; r < region_end; ++r) {
        for (std::size_t s = 0; s < n_subj; ++s) {
            const auto row = panel.series[s].data.row(static_cast<long>(r));
            Eigen::VectorXd v = row.transpose();
            const double mean = v.mean();
            v.array() -= mean;
            const double norm = v.norm();
            if (norm > 0.0) {
                v /= norm;
                unit[s] = std::move(v);
                unit_ok[s] = 1;
            } else {
                unit_ok[s] = 0;
            }
        }
        for (std::size_t d = 0; d < dyads.size(); ++d) {
            const auto [a, b] = dyads[d];
            const auto& align = alignments[d];
            double value = missing();
            if (!align.excluded) {
                if (panel.series[a].runs == panel.series[b].runs) {
                    if (unit_ok[a] && unit_ok[b]) {
                        value = std::clamp(unit[a].dot(unit[b]), -1.0, 1.0);
                    }
                } else {
                    const Eigen::VectorXd xa =
                        aligned_series(panel, a, r, align.shared_runs);
                    const Eigen::VectorXd xb =
                        aligned_series(panel, b, r, align.shared_runs);
                    value = pearson_corr(xa, xb);
                }
            }
            values(static_cast<long>(r - region_begin), static_cast<long>(d)) = value;
        }
    }
}

IscTable isc_table(const TimeSeriesPanel& panel, const std::vector<std::pair<int, int>>& dyads,
                   PartialRunPolicy policy, int threads, double max_failure_fraction) {
    panel.validate();
    IscTable table;
    table.regions = panel.regions;
    table.dyads = dyads;
    table.stage = Stage::RawR;
    table.values.resize(static_cast<long>(panel.regions.size()),
                        static_cast<long>(dyads.size()));

    std::vector<DyadAlignment> alignments(dyads.size());
    std::size_t n_computable = 0;
    for (std::size_t d = 0; d < dyads.size(); ++d) {
        alignments[d] = align_dyad(panel, dyads[d].first, dyads[d].second, policy);
        if (!alignments[d].excluded) ++n_computable;
    }

    parallel_for(panel.regions.size(), threads, [&](std::size_t r) {
        isc_fill_rows(panel, dyads, alignments, r, r + 1,
                      table.values.block(static_cast<long>(r), 0, 1,
                                         static_cast<long>(dyads.size())));
    });

    // Constant-series failures are tolerated per dyad but a region failing
    // for a large share of its computable dyads signals an ingestion bug.
    if (n_computable > 0) {
        for (std::size_t r = 0; r < panel.regions.size(); ++r) {
            std::size_t failed = 0;
            for (std::size_t d = 0; d < dyads.size(); ++d) {
                if (alignments[d].excluded) continue;
                if (is_missing(table.values(static_cast<long>(r), static_cast<long>(d)))) {
                    ++failed;
                }
            }
            const double fraction =
                static_cast<double>(failed) / static_cast<double>(n_computable);
            if (fraction > max_failure_fraction) {
                throw data_error("region " + panel.regions[r] + ": " +
                                 std::to_string(failed) + "/" +
                                 std::to_string(n_computable) +
                                 " dyads failed (constant series)");
            }
            if (failed > 0) {
                warn("region " + panel.regions[r] + ": " + std::to_string(failed) +
                     " dyad(s) with constant series set to missing");
            }
        }
    }
    return table;
}

IscTable fisher_z(const IscTable& table, double clamp_eps) {
    if (table.stage != Stage::RawR) throw input_error("fisher_z: table must be RawR");
    IscTable out = table;
    out.stage = Stage::FisherZ;
    const double limit = 1.0 - clamp_eps;
    for (long i = 0; i < out.values.rows(); ++i) {
        for (long j = 0; j < out.values.cols(); ++j) {
            const double r = out.values(i, j);
            if (is_missing(r)) continue;
            out.values(i, j) = std::atanh(std::clamp(r, -limit, limit));
        }
    }
    return out;
}

IscTable standardize_within_region(const IscTable& table) {
    if (table.stage != Stage::FisherZ) {
        throw input_error("standardize_within_region: table must be FisherZ");
    }
    IscTable out = table;
    out.stage = Stage::FisherZStandardized;
    for (long r = 0; r < out.values.rows(); ++r) {
        double sum = 0.0;
        long count = 0;
        for (long j = 0; j < out.values.cols(); ++j) {
            const double v = out.values(r, j);
            if (is_missing(v)) continue;
            sum += v;
            ++count;
        }
        if (count < 2) {
            throw data_error("region " + table.regions[static_cast<std::size_t>(r)] +
                             ": fewer than 2 non-missing dyads");
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (long j = 0; j < out.values.cols(); ++j) {
            const double v = out.values(r, j);
            if (is_missing(v)) continue;
            ss += (v - mean) * (v - mean);
        }
        const double sd = std::sqrt(ss / static_cast<double>(count - 1));
        if (sd <= 1e-12 * std::max(1.0, std::fabs(mean))) {
            throw data_error("region " + table.regions[static_cast<std::size_t>(r)] +
                             ": zero variance across dyads");
        }
        for (long j = 0; j < out.values.cols(); ++j) {
            if (!is_missing(out.values(r, j))) {
                out.values(r, j) = (out.values(r, j) - mean) / sd;
            }
        }
    }
    return out;
}

Eigen::MatrixXd subject_mean_isc(const IscTable& table, std::size_t n_subjects,
                                 MeanScope scope, const std::vector<std::string>* community) {
    if (table.stage == Stage::RawR) {
        throw input_error("subject_mean_isc: table must be Fisher z (optionally standardized)");
    }
    if (scope == MeanScope::IntraCommunityOnly && !community) {
        throw input_error("subject_mean_isc: IntraCommunityOnly needs community labels");
    }
    const long n_regions = table.values.rows();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<long>(n_subjects), n_regions);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<long>(n_subjects), n_regions);

    for (std::size_t d = 0; d < table.dyads.size(); ++d) {
        const auto [a, b] = table.dyads[d];
        if (scope == MeanScope::IntraCommunityOnly && (*community)[a] != (*community)[b]) {
            continue;
        }
        for (long r = 0; r < n_regions; ++r) {
            const double v = table.values(r, static_cast<long>(d));
            if (is_missing(v)) continue;
            sums(a, r) += v;
            counts(a, r) += 1.0;
            sums(b, r) += v;
            counts(b, r) += 1.0;
        }
    }

    Eigen::MatrixXd means(static_cast<long>(n_subjects), n_regions);
    std::vector<char> warned(n_subjects, 0);
    for (long s = 0; s < static_cast<long>(n_subjects); ++s) {
        for (long r = 0; r < n_regions; ++r) {
            if (counts(s, r) > 0.0) {
                means(s, r) = sums(s, r) / counts(s, r);
            } else {
                means(s, r) = missing();
                if (!warned[static_cast<std::size_t>(s)]) {
                    warn("subject index " + std::to_string(s) +
                         ": no eligible dyads for mean ISC");
                    warned[static_cast<std::size_t>(s)] = 1;
                }
            }
        }
    }
    return means;
}

}  // namespace annak::isccore
