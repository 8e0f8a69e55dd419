// annak: inter-subject correlation / social-network analysis pipeline.
//
// Subcommands mirror the analysis stages: network, isc, subject-level,
// dyad-level, behav, synth, validate. Exit codes: 0 ok, 2 config error,
// 3 data-quality abort, 4 validation failure.

#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "annak/common.hpp"
#include "annak/pipeline.hpp"

namespace {

using annak::pipeline::AnalysisConfig;
using annak::pipeline::Inputs;
using annak::pipeline::RunResult;

struct CommonFlags {
    std::string scope = "all";
    std::string split = "median";
    std::string partial_run_policy = "exclude";
    std::string covariates = "none";
    std::string subject_stage = "fisherz";
    std::string dyad_stage = "fisherz-std";
    double alpha_subject = 0.05;
    double alpha_dyad = 0.001;
    int threads = 0;
    std::uint64_t seed = 1;
    bool one_sided = false;
    bool equal_tau = false;
    bool preference_models = false;
};

void add_input_options(CLI::App* cmd, AnalysisConfig& config, bool with_panel,
                       bool with_ratings) {
    cmd->add_option("--edges", config.edges_path, "edge list CSV (nominator,nominee)");
    cmd->add_option("--communities", config.communities_path,
                    "community CSV (subject,community)");
    if (with_panel) {
        cmd->add_option("--manifest", config.manifest_path,
                        "run manifest CSV (subject,run,usable,n_timepoints)");
        cmd->add_option("--series-dir", config.series_dir,
                        "directory of per-subject series CSVs");
        cmd->add_option("--long", config.long_path,
                        "long-format CSV (subject,run,t,region,value)");
    }
    if (with_ratings) {
        cmd->add_option("--ratings", config.ratings_path,
                        "ratings CSV (subject,item,enjoyment,interest)");
        cmd->add_option("--attributes", config.attributes_path,
                        "attributes CSV (subject,age,gender,home_country,ethnicities)");
    }
    cmd->add_option("--exclusions", config.exclusions_path,
                    "exclusions CSV (kind,subject_a,subject_b)");
    cmd->add_option("--out-dir", config.out_dir, "output directory");
}

void add_analysis_options(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--scope", flags.scope, "all | intra")->capture_default_str();
    cmd->add_option("--split", flags.split, "median | equal")->capture_default_str();
    cmd->add_option("--partial-run-policy", flags.partial_run_policy,
                    "exclude | intersect")
        ->capture_default_str();
    cmd->add_option("--covariates", flags.covariates,
                    "none | demographics | demographics+social_distance | friendship | "
                    "preferences")
        ->capture_default_str();
    cmd->add_option("--stage", flags.dyad_stage, "rawr | fisherz | fisherz-std")
        ->capture_default_str();
    cmd->add_option("--subject-stage", flags.subject_stage, "fisherz | fisherz-std")
        ->capture_default_str();
    cmd->add_option("--alpha", flags.alpha_subject, "subject-level FDR alpha")
        ->capture_default_str();
    cmd->add_option("--alpha-dyad", flags.alpha_dyad, "dyad-level FDR alpha")
        ->capture_default_str();
    cmd->add_option("--threads", flags.threads, "worker threads (0 = hardware)")
        ->capture_default_str();
    cmd->add_option("--seed", flags.seed, "seed for seeded utilities")->capture_default_str();
    cmd->add_flag("--one-sided", flags.one_sided, "one-sided contrast p-values");
    cmd->add_flag("--equal-tau", flags.equal_tau,
                  "constrain the two random-intercept variances to be equal");
    cmd->add_flag("--preference-models", flags.preference_models,
                  "also fit ISC ~ preference-similarity dyad models");
}

void apply_flags(AnalysisConfig& config, const CommonFlags& flags) {
    config.scope = flags.scope == "intra" || flags.scope == "intra_community_only"
                       ? annak::pipeline::Scope::IntraCommunityOnly
                       : annak::pipeline::Scope::All;
    if (flags.scope != "all" && flags.scope != "intra" &&
        flags.scope != "intra_community_only") {
        throw annak::config_error("unknown scope: " + flags.scope);
    }
    if (flags.split == "median") {
        config.split = annak::graphnet::SplitMode::MedianSplit;
    } else if (flags.split == "equal") {
        config.split = annak::graphnet::SplitMode::EqualGroups;
    } else {
        throw annak::config_error("unknown split: " + flags.split);
    }
    if (flags.partial_run_policy == "exclude") {
        config.partial_run_policy = annak::isccore::PartialRunPolicy::Exclude;
    } else if (flags.partial_run_policy == "intersect") {
        config.partial_run_policy = annak::isccore::PartialRunPolicy::Intersect;
    } else {
        throw annak::config_error("unknown partial-run policy: " + flags.partial_run_policy);
    }
    nlohmann::json j = config.to_json();
    j["covariates"] = flags.covariates;
    j["subject_stage"] = flags.subject_stage;
    j["dyad_stage"] = flags.dyad_stage;
    AnalysisConfig parsed = AnalysisConfig::from_json(j);
    config.covariates = parsed.covariates;
    config.subject_stage = parsed.subject_stage;
    config.dyad_stage = parsed.dyad_stage;
    config.fdr_alpha_subject = flags.alpha_subject;
    config.fdr_alpha_dyad = flags.alpha_dyad;
    config.threads = flags.threads;
    config.seed = flags.seed;
    config.one_sided = flags.one_sided;
    config.equal_tau = flags.equal_tau;
    config.preference_models = flags.preference_models;
}

int dispatch(const std::string& command, AnalysisConfig& config) {
    const bool need_panel = command == "isc" || command == "subject-level" ||
                            command == "dyad-level";
    const bool need_ratings = command == "behav" ||
                              (config.covariates == annak::pipeline::CovariateSet::Preferences) ||
                              config.preference_models;
    const bool need_attributes =
        config.covariates == annak::pipeline::CovariateSet::Demographics ||
        config.covariates == annak::pipeline::CovariateSet::DemographicsSocialDistance;
    config.resolve(need_panel, need_ratings, need_attributes);
    const Inputs inputs = load_inputs(config, need_panel, need_ratings, need_attributes);

    RunResult result;
    if (command == "network") {
        result = run_network(inputs, config);
    } else if (command == "isc") {
        result = run_isc(inputs, config);
    } else if (command == "subject-level") {
        result = run_subject_level(inputs, config);
    } else if (command == "dyad-level") {
        result = run_dyad_level(inputs, config);
    } else {
        result = run_behavioral(inputs, config);
    }
    std::printf("%s\n", result.summary.dump(2).c_str());
    return annak::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"annak: ISC / social-network analysis pipeline"};
    app.require_subcommand(1);

    AnalysisConfig config;
    CommonFlags flags;

    CLI::App* network = app.add_subcommand("network", "centrality and dyad tables");
    add_input_options(network, config, false, false);
    add_analysis_options(network, flags);

    CLI::App* isc = app.add_subcommand("isc", "inter-subject correlation table");
    add_input_options(isc, config, true, false);
    add_analysis_options(isc, flags);

    CLI::App* subject = app.add_subcommand("subject-level", "mean-ISC models per region");
    add_input_options(subject, config, true, true);
    add_analysis_options(subject, flags);

    CLI::App* dyad = app.add_subcommand("dyad-level", "dyadic LMM + contrasts per region");
    add_input_options(dyad, config, true, true);
    add_analysis_options(dyad, flags);
    dyad->add_option("--model-spec", config.model_spec_path,
                     "declarative model JSON (response, terms, covariates, contrasts, alpha)");

    CLI::App* behav = app.add_subcommand("behav", "preference-similarity models");
    add_input_options(behav, config, false, true);
    add_analysis_options(behav, flags);

    annak::pipeline::SynthConfig synth_config;
    std::string synth_out, synth_generator = "annak";
    CLI::App* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
    synth->add_option("--subjects", synth_config.n_subjects)->capture_default_str();
    synth->add_option("--regions", synth_config.n_regions)->capture_default_str();
    synth->add_option("--planted", synth_config.n_planted)->capture_default_str();
    synth->add_option("--timepoints", synth_config.timepoints_per_run,
                      "time points per run")
        ->capture_default_str();
    synth->add_option("--runs", synth_config.runs)->capture_default_str();
    synth->add_option("--alpha-min", synth_config.alpha_min)->capture_default_str();
    synth->add_option("--alpha-max", synth_config.alpha_max)->capture_default_str();
    synth->add_option("--null-alpha", synth_config.null_alpha)->capture_default_str();
    synth->add_option("--items", synth_config.n_items)->capture_default_str();
    synth->add_option("--seed", synth_config.seed)->capture_default_str();
    synth->add_option("--generator", synth_generator, "annak | nearest")
        ->capture_default_str();
    synth->add_option("--n-communities", synth_config.n_communities)->capture_default_str();
    synth->add_option("--out-dir", synth_out)->required();

    std::string validate_out;
    std::uint64_t validate_seed = 1;
    int validate_threads = 0;
    CLI::App* validate = app.add_subcommand("validate", "oracle and determinism self-checks");
    validate->add_option("--out", validate_out, "write the JSON report here");
    validate->add_option("--seed", validate_seed)->capture_default_str();
    validate->add_option("--threads", validate_threads)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            if (synth_generator == "nearest") {
                synth_config.generator = annak::synthlab::Generator::NearestNeighbor;
            } else if (synth_generator != "annak") {
                throw annak::config_error("unknown generator: " + synth_generator);
            }
            const auto data = annak::pipeline::synthesize(synth_config);
            annak::pipeline::write_synth_dataset(data, synth_out);
            std::printf("wrote synthetic dataset to %s\n", synth_out.c_str());
            return annak::kExitOk;
        }
        if (validate->parsed()) {
            AnalysisConfig vconfig;
            vconfig.seed = validate_seed;
            vconfig.threads = validate_threads;
            nlohmann::json report;
            const int failures = annak::pipeline::run_validate(vconfig, report);
            const std::string text = report.dump(2) + "\n";
            if (!validate_out.empty()) {
                annak::pipeline::write_text_file(validate_out, text);
            }
            std::printf("%s", text.c_str());
            return failures == 0 ? annak::kExitOk : annak::kExitValidation;
        }
        for (CLI::App* cmd : {network, isc, subject, dyad, behav}) {
            if (cmd->parsed()) {
                apply_flags(config, flags);
                return dispatch(cmd->get_name(), config);
            }
        }
        std::fprintf(stderr, "no subcommand given\n");
        return annak::kExitConfig;
    } catch (const annak::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return annak::kExitConfig;
    } catch (const annak::input_error& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return annak::kExitConfig;
    } catch (const annak::data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return annak::kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return annak::kExitData;
    }
}
