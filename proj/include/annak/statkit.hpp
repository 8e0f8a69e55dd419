#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace annak::statkit {

// ---------------------------------------------------------------------------
// Small column-oriented frame feeding the model builders.

struct Column {
    bool categorical = false;
    std::vector<double> num;
    std::vector<std::string> cat;

    std::size_t size() const { return categorical ? cat.size() : num.size(); }
};

class Dataset {
public:
    std::size_t n_rows() const { return n_rows_; }
    const std::vector<std::string>& names() const { return names_; }

    void add_numeric(const std::string& name, std::vector<double> values);
    void add_categorical(const std::string& name, std::vector<std::string> values);
    bool has(const std::string& name) const;
    const Column& col(const std::string& name) const;

    Dataset subset(const std::vector<std::size_t>& rows) const;

private:
    void check_length(std::size_t len, const std::string& name);

    std::size_t n_rows_ = 0;
    bool empty_ = true;
    std::vector<std::string> names_;
    std::vector<Column> cols_;
};

// ---------------------------------------------------------------------------
// Design matrices.

struct DesignSpec {
    std::string response;
    std::vector<std::string> fixed_terms;
    std::vector<std::string> covariates;
    bool standardize = true;
    // Optional reference level per categorical term; default = first level
    // in lexicographic order.
    std::map<std::string, std::string> reference;
};

struct FactorCoding {
    std::string term;
    std::vector<std::string> levels;  // including the reference
    std::string reference;
    std::map<std::string, int> level_column;  // non-reference level -> X column
};

struct Design {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;  // first column = intercept
    std::vector<std::string> col_names;
    std::vector<FactorCoding> factors;
    std::size_t n = 0, k = 0;
};

// Builds y and X from the dataset. With spec.standardize, the response and
// every numeric predictor (including 0/1 indicators) are z-scored with the
// n-1 standard deviation; factor dummy columns are left as 0/1. When
// stats_rows is given, standardization statistics are computed over that row
// subset only (used for role-doubled data, where moments must come from the
// unique rows).
Design build_design(const Dataset& data, const DesignSpec& spec,
                    std::optional<std::size_t> stats_rows = std::nullopt);

// ---------------------------------------------------------------------------
// Fits.

struct TermStat {
    std::string term;
    double estimate = 0.0;
    double se = 0.0;
    double df = 0.0;
    double p = 1.0;
};

struct OlsFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov_beta;
    double sigma2 = 0.0;
    double rss = 0.0;
    std::size_t n = 0, k = 0;
    Design design;

    std::vector<TermStat> term_stats() const;  // all non-intercept columns
};

OlsFit ols_fit(const Dataset& data, const DesignSpec& spec);

// Spearman rank correlation with average ranks for ties; p from the
// t approximation with df = n - 2.
std::pair<double, double> spearman_rho(std::span<const double> x, std::span<const double> y);

// Benjamini-Hochberg step-up adjusted p-values, original order preserved.
std::vector<double> bh_fdr(const std::vector<double>& p);

// ---------------------------------------------------------------------------
// Crossed-random-effects LMM on role-doubled dyadic data.

struct DoubledData {
    Dataset data;               // 2N rows: originals first, then role-swapped copies
    std::vector<int> subj1;     // subject index per doubled row
    std::vector<int> subj2;
    std::size_t n_unique = 0;   // N
    int n_subjects = 0;
};

// Emits each unordered dyad twice, as (a, b) and (b, a); every dyad-level
// column is copied verbatim onto both rows.
DoubledData double_dyads(const Dataset& unique_frame, const std::vector<int>& subject_a,
                         const std::vector<int>& subject_b, int n_subjects);

struct LmmOptions {
    bool equal_variance_ratios = false;  // constrain tau1^2 = tau2^2
    double tol = 1e-8;                   // convergence tolerance on the REML criterion
    int max_evals = 500;                 // optimizer evaluation budget (per stage)
};

struct LmmFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov_beta;
    double sigma2 = 0.0;
    double tau2_1 = 0.0, tau2_2 = 0.0;
    std::size_t n_unique = 0, n_rows = 0, k = 0;
    double reml_deviance = 0.0;  // log|V| + log|X'V^-1X| + r'V^-1r at the optimum
    bool converged = false;
    Design design;

    double df() const { return static_cast<double>(n_unique) - static_cast<double>(k); }
};

// REML fit of y = X beta + u_subj1 + u_subj2 + e with independent random
// intercepts per subject within each role. Variance ratios are profiled
// against sigma^2 and optimized by bounded derivative-free search; boundary
// estimates (tau^2 = 0) are valid results.
LmmFit lmm_fit_crossed(const DoubledData& doubled, const DesignSpec& spec,
                       const LmmOptions& options = {});

struct Contrast {
    std::string name;
    std::map<std::string, double> weights;  // level -> weight, sums to 0
};

// Contrasts over estimated marginal means of one categorical term. Because
// every cell shares the covariate means and weights sum to zero, the induced
// coefficient combination touches only the factor's dummy columns.
std::vector<TermStat> planned_contrasts(const LmmFit& fit, const std::string& factor,
                                        const std::vector<Contrast>& contrasts,
                                        bool one_sided = false);

// ---------------------------------------------------------------------------
// Region sweep: independent per-region fits, then BH across regions within
// each term/contrast family.

struct RegionStats {
    std::string region;
    std::string model;
    std::string term;
    double B = 0.0;
    double SE = 0.0;
    double df = 0.0;
    double p_raw = 1.0;
    double p_fdr = 1.0;
    std::size_t n = 0;
};

struct SweepFailure {
    std::string region;
    std::string message;
};

struct SweepResult {
    std::vector<RegionStats> rows;  // sorted by (region, term)
    std::vector<SweepFailure> failures;
};

// Applies BH within each (model, term) family in place.
void apply_fdr_families(std::vector<RegionStats>& rows);

using RegionResponse = std::vector<double>;  // one value per dataset row

SweepResult region_sweep_ols(const std::vector<std::string>& regions,
                             const std::vector<RegionResponse>& responses,
                             const Dataset& base, const DesignSpec& spec,
                             const std::string& model_name, int threads = 1);

SweepResult region_sweep_spearman(const std::vector<std::string>& regions,
                                  const std::vector<RegionResponse>& responses,
                                  const std::vector<double>& predictor,
                                  const std::string& model_name, int threads = 1);

SweepResult region_sweep_lmm(const std::vector<std::string>& regions,
                             const std::vector<RegionResponse>& responses,
                             const Dataset& unique_frame, const std::vector<int>& subject_a,
                             const std::vector<int>& subject_b, int n_subjects,
                             const DesignSpec& spec, const std::string& contrast_factor,
                             const std::vector<Contrast>& contrasts,
                             const std::string& model_name, const LmmOptions& options = {},
                             bool one_sided = false, int threads = 1);

}  // namespace annak::statkit
