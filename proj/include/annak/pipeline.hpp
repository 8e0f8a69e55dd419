#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "annak/behav.hpp"
#include "annak/graphnet.hpp"
#include "annak/isccore.hpp"
#include "annak/statkit.hpp"
#include "annak/synthlab.hpp"

namespace annak::pipeline {

enum class Scope { All, IntraCommunityOnly };
enum class CovariateSet { None, Demographics, DemographicsSocialDistance, Friendship,
                          Preferences };

std::string to_string(Scope s);
std::string to_string(CovariateSet c);

struct AnalysisConfig {
    // Input files. A panel comes either from manifest + series_dir or from a
    // single long-format CSV.
    std::string edges_path;
    std::string communities_path;
    std::string manifest_path;
    std::string series_dir;
    std::string long_path;
    std::string ratings_path;
    std::string attributes_path;
    std::string exclusions_path;
    std::string model_spec_path;  // declarative dyad-level model (JSON)
    std::string out_dir;

    Scope scope = Scope::All;
    graphnet::SplitMode split = graphnet::SplitMode::MedianSplit;
    isccore::PartialRunPolicy partial_run_policy = isccore::PartialRunPolicy::Exclude;
    isccore::Stage subject_stage = isccore::Stage::FisherZ;
    isccore::Stage dyad_stage = isccore::Stage::FisherZStandardized;
    CovariateSet covariates = CovariateSet::None;
    double fdr_alpha_subject = 0.05;
    double fdr_alpha_dyad = 0.001;
    double clamp_eps = 1e-7;
    int threads = 0;  // 0 = hardware concurrency
    std::uint64_t seed = 1;
    bool one_sided = false;
    bool equal_tau = false;
    bool preference_models = false;  // also fit ISC ~ preference similarity variants

    // Coerces the scope when social distance is demanded and validates that
    // referenced files exist. Throws config_error.
    void resolve(bool need_panel, bool need_ratings, bool need_attributes);

    nlohmann::json to_json() const;
    static AnalysisConfig from_json(const nlohmann::json& j);
};

struct Inputs {
    graphnet::SocialGraph graph;
    isccore::TimeSeriesPanel panel;
    bool has_panel = false;
    behav::RatingMatrix enjoyment;
    behav::RatingMatrix interest;
    bool has_ratings = false;
    behav::AttributeTable attributes;
    bool has_attributes = false;
    std::vector<std::string> excluded_subjects;
    std::vector<std::pair<std::string, std::string>> excluded_dyads;
};

Inputs load_inputs(const AnalysisConfig& config, bool need_panel, bool need_ratings,
                   bool need_attributes);

// The resolved analysis sample: subject order, centrality profile, dyad list
// with centrality/friendship/distance columns. EqualGroups median subjects
// and explicitly excluded subjects are already dropped.
struct Sample {
    std::vector<std::string> subjects;
    std::vector<int> graph_index;          // into graph nodes
    std::vector<std::string> community;    // per subject
    graphnet::CentralityProfile profile;   // over `subjects`
    std::vector<std::pair<int, int>> dyads;  // indices into `subjects`
    std::vector<graphnet::DyadRow> dyad_rows;
    std::vector<double> friendship;
    std::vector<double> social_dist;       // NaN for cross-community dyads
    std::size_t n_excluded_dyads = 0;      // dropped via the exclusion list
};

Sample build_sample(const Inputs& inputs, const AnalysisConfig& config);

struct RunResult {
    std::vector<statkit::RegionStats> rows;
    nlohmann::json summary;
    // name -> file content; written under out_dir when set, always available
    // in memory for determinism checks.
    std::vector<std::pair<std::string, std::string>> files;
};

RunResult run_network(const Inputs& inputs, const AnalysisConfig& config);
RunResult run_isc(const Inputs& inputs, const AnalysisConfig& config);
RunResult run_subject_level(const Inputs& inputs, const AnalysisConfig& config);
RunResult run_dyad_level(const Inputs& inputs, const AnalysisConfig& config);
RunResult run_behavioral(const Inputs& inputs, const AnalysisConfig& config);

// Declarative dyad-level model: response, terms, covariates, optional
// contrast factor + contrasts, FDR alpha. Parsed from the JSON block the
// --model-spec flag points at.
struct ModelSpec {
    std::string name = "custom";
    statkit::DesignSpec design;
    std::string factor;  // empty = no planned contrasts
    std::vector<statkit::Contrast> contrasts;
    double alpha = 0.05;
};

ModelSpec model_spec_from_json(const nlohmann::json& j);

// Machine-readable self-check suite; returns the number of failed checks.
int run_validate(const AnalysisConfig& config, nlohmann::json& report);

// ---------------------------------------------------------------------------
// Synthetic dataset construction (in memory; the CLI writes it to files).

struct SynthConfig {
    std::size_t n_subjects = 60;
    std::size_t n_regions = 20;
    std::size_t n_planted = 5;
    long timepoints_per_run = 1250;
    int runs = 4;
    double alpha_min = 0.3;
    double alpha_max = 0.8;
    double null_alpha = 0.2;
    std::size_t n_items = 14;
    std::uint64_t seed = 1;
    synthlab::Generator generator = synthlab::Generator::SharedSignal;
    int n_communities = 1;
    int max_degree = 9;
};

struct SynthData {
    Inputs inputs;
    synthlab::PlantSpec plant;
    nlohmann::json truth;
};

SynthData synthesize(const SynthConfig& config);

// Writes edges/communities/manifest/series/ratings/attributes/truth.json
// in the formats the analysis commands read back.
void write_synth_dataset(const SynthData& data, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Shared helpers.

isccore::IscTable staged_isc_table(const Inputs& inputs, const Sample& sample,
                                   const AnalysisConfig& config, isccore::Stage stage);
std::string results_csv(const std::vector<statkit::RegionStats>& rows);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace annak::pipeline
