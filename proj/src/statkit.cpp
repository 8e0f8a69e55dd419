#include "annak/statkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "annak/common.hpp"
#include "annak/parallel.hpp"
#include "annak/stats_math.hpp"

namespace annak::statkit {

// ---------------------------------------------------------------------------
// Dataset

void Dataset::check_length(std::size_t len, const std::string& name) {
    if (empty_) {
        n_rows_ = len;
        empty_ = false;
    } else if (len != n_rows_) {
        throw input_error("column length mismatch for '" + name + "': " + std::to_string(len) +
                          " vs " + std::to_string(n_rows_));
    }
    if (has(name)) throw input_error("duplicate column: " + name);
}

void Dataset::add_numeric(const std::string& name, std::vector<double> values) {
    check_length(values.size(), name);
    names_.push_back(name);
    Column c;
    c.categorical = false;
    c.num = std::move(values);
    cols_.push_back(std::move(c));
}

void Dataset::add_categorical(const std::string& name, std::vector<std::string> values) {
    check_length(values.size(), name);
    names_.push_back(name);
    Column c;
    c.categorical = true;
    c.cat = std::move(values);
    cols_.push_back(std::move(c));
}

bool Dataset::has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Column& Dataset::col(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return cols_[i];
    }
    throw input_error("unknown column: " + name);
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (cols_[i].categorical) {
            std::vector<std::string> v;
            v.reserve(rows.size());
            for (std::size_t r : rows) v.push_back(cols_[i].cat[r]);
            out.add_categorical(names_[i], std::move(v));
        } else {
            std::vector<double> v;
            v.reserve(rows.size());
            for (std::size_t r : rows) v.push_back(cols_[i].num[r]);
            out.add_numeric(names_[i], std::move(v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Design construction

namespace {

struct Moments {
    double mean = 0.0;
    double sd = 1.0;
};

Moments column_moments(const std::vector<double>& v, std::size_t stats_rows) {
    Moments m;
    double sum = 0.0;
    for (std::size_t i = 0; i < stats_rows; ++i) {
        if (!std::isfinite(v[i])) throw input_error("non-finite value in design column");
        sum += v[i];
    }
    m.mean = sum / static_cast<double>(stats_rows);
    double ss = 0.0;
    for (std::size_t i = 0; i < stats_rows; ++i) {
        const double d = v[i] - m.mean;
        ss += d * d;
    }
    m.sd = stats_rows > 1 ? std::sqrt(ss / static_cast<double>(stats_rows - 1)) : 0.0;
    if (m.sd <= 1e-12 * std::max(1.0, std::fabs(m.mean))) m.sd = 0.0;
    return m;
}

}  // namespace

Design build_design(const Dataset& data, const DesignSpec& spec,
                    std::optional<std::size_t> stats_rows_opt) {
    const std::size_t n = data.n_rows();
    const std::size_t stats_rows = stats_rows_opt.value_or(n);
    if (stats_rows == 0 || stats_rows > n) throw input_error("invalid stats_rows");

    Design design;
    design.n = n;

    {
        const Column& rc = data.col(spec.response);
        if (rc.categorical) throw input_error("response must be numeric: " + spec.response);
        design.y = Eigen::Map<const Eigen::VectorXd>(rc.num.data(), static_cast<long>(n));
        if (spec.standardize) {
            const Moments m = column_moments(rc.num, stats_rows);
            if (m.sd <= 0.0) throw data_error("degenerate response: zero variance");
            design.y = (design.y.array() - m.mean) / m.sd;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(rc.num[i])) throw input_error("non-finite response value");
            }
        }
    }

    std::vector<std::string> all_terms = spec.fixed_terms;
    all_terms.insert(all_terms.end(), spec.covariates.begin(), spec.covariates.end());
    {
        std::set<std::string> seen;
        for (const auto& t : all_terms) {
            if (!seen.insert(t).second) throw input_error("duplicate model term: " + t);
            if (t == spec.response) throw input_error("response used as predictor: " + t);
        }
    }

    std::vector<Eigen::VectorXd> columns;
    design.col_names.push_back("(Intercept)");
    columns.push_back(Eigen::VectorXd::Ones(static_cast<long>(n)));

    for (const auto& term : all_terms) {
        const Column& c = data.col(term);
        if (c.categorical) {
            std::set<std::string> level_set(c.cat.begin(), c.cat.begin() + stats_rows);
            if (level_set.size() < 2) {
                throw data_error("factor with a single level: " + term);
            }
            std::string reference;
            if (auto it = spec.reference.find(term); it != spec.reference.end()) {
                if (!level_set.count(it->second)) {
                    throw input_error("reference level '" + it->second +
                                      "' absent from factor " + term);
                }
                reference = it->second;
            } else {
                reference = *level_set.begin();
            }
            FactorCoding coding;
            coding.term = term;
            coding.reference = reference;
            coding.levels.assign(level_set.begin(), level_set.end());
            for (const auto& level : coding.levels) {
                if (level == reference) continue;
                Eigen::VectorXd dummy(static_cast<long>(n));
                for (std::size_t i = 0; i < n; ++i) {
                    if (!level_set.count(c.cat[i])) {
                        throw input_error("unseen factor level in " + term + ": " + c.cat[i]);
                    }
                    dummy[static_cast<long>(i)] = c.cat[i] == level ? 1.0 : 0.0;
                }
                coding.level_column[level] = static_cast<int>(columns.size());
                design.col_names.push_back(term + "=" + level);
                columns.push_back(std::move(dummy));
            }
            design.factors.push_back(std::move(coding));
        } else {
            Eigen::VectorXd col =
                Eigen::Map<const Eigen::VectorXd>(c.num.data(), static_cast<long>(n));
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(c.num[i])) {
                    throw input_error("non-finite value in predictor " + term);
                }
            }
            if (spec.standardize) {
                const Moments m = column_moments(c.num, stats_rows);
                if (m.sd <= 0.0) throw data_error("zero-variance column: " + term);
                col = (col.array() - m.mean) / m.sd;
            }
            design.col_names.push_back(term);
            columns.push_back(std::move(col));
        }
    }

    design.k = columns.size();
    design.X.resize(static_cast<long>(n), static_cast<long>(design.k));
    for (std::size_t j = 0; j < design.k; ++j) {
        design.X.col(static_cast<long>(j)) = columns[j];
    }
    return design;
}

namespace {

void check_full_rank(const Design& design) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.X);
    qr.setThreshold(1e-10);
    const long rank = qr.rank();
    if (rank < static_cast<long>(design.k)) {
        const auto perm = qr.colsPermutation().indices();
        std::string cols;
        for (long i = rank; i < static_cast<long>(design.k); ++i) {
            if (!cols.empty()) cols += ", ";
            cols += design.col_names[static_cast<std::size_t>(perm[i])];
        }
        throw data_error("design matrix is rank deficient; collinear columns: " + cols);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// OLS

OlsFit ols_fit(const Dataset& data, const DesignSpec& spec) {
    Design design = build_design(data, spec);
    if (design.n < design.k + 2) {
        throw input_error("too few rows: need at least k + 2 = " +
                          std::to_string(design.k + 2));
    }
    check_full_rank(design);

    OlsFit fit;
    fit.beta = design.X.householderQr().solve(design.y);
    const Eigen::VectorXd resid = design.y - design.X * fit.beta;
    fit.rss = resid.squaredNorm();
    fit.n = design.n;
    fit.k = design.k;
    fit.sigma2 = fit.rss / static_cast<double>(fit.n - fit.k);
    const Eigen::MatrixXd xtx = design.X.transpose() * design.X;
    fit.cov_beta = fit.sigma2 *
                   xtx.llt().solve(Eigen::MatrixXd::Identity(static_cast<long>(fit.k),
                                                             static_cast<long>(fit.k)));
    fit.design = std::move(design);
    return fit;
}

std::vector<TermStat> OlsFit::term_stats() const {
    std::vector<TermStat> stats;
    const double dof = static_cast<double>(n - k);
    for (std::size_t j = 1; j < k; ++j) {
        TermStat s;
        s.term = design.col_names[j];
        s.estimate = beta[static_cast<long>(j)];
        s.se = std::sqrt(cov_beta(static_cast<long>(j), static_cast<long>(j)));
        s.df = dof;
        s.p = t_two_sided_p(s.estimate / s.se, dof);
        stats.push_back(std::move(s));
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Spearman

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson_of(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw data_error("constant vector in correlation");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

std::pair<double, double> spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw input_error("spearman: length mismatch");
    const std::size_t n = x.size();
    if (n < 4) throw input_error("spearman: need at least 4 observations");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw input_error("spearman: non-finite value");
        }
    }
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double rho = pearson_of(rx, ry);
    const double df = static_cast<double>(n - 2);
    double p = 0.0;
    if (std::fabs(rho) < 1.0) {
        const double t = rho * std::sqrt(df / (1.0 - rho * rho));
        p = t_two_sided_p(t, df);
    }
    return {rho, p};
}

// ---------------------------------------------------------------------------
// Benjamini-Hochberg

std::vector<double> bh_fdr(const std::vector<double>& p) {
    const std::size_t m = p.size();
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw input_error("bh_fdr: p-value outside [0, 1]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return p[a] != p[b] ? p[a] < p[b] : a < b;
    });
    std::vector<double> adjusted(m, 0.0);
    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        const double scaled =
            p[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
        running = std::min(running, scaled);
        adjusted[order[i]] = running;
    }
    return adjusted;
}

// ---------------------------------------------------------------------------
// Dyad doubling

DoubledData double_dyads(const Dataset& unique_frame, const std::vector<int>& subject_a,
                         const std::vector<int>& subject_b, int n_subjects) {
    const std::size_t n = unique_frame.n_rows();
    if (subject_a.size() != n || subject_b.size() != n) {
        throw input_error("double_dyads: subject index length mismatch");
    }
    std::vector<std::size_t> rows(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = i;
        rows[n + i] = i;
    }
    DoubledData out;
    out.data = unique_frame.subset(rows);
    out.n_unique = n;
    out.n_subjects = n_subjects;
    out.subj1.reserve(2 * n);
    out.subj2.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out.subj1.push_back(subject_a[i]);
        out.subj2.push_back(subject_b[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.subj1.push_back(subject_b[i]);
        out.subj2.push_back(subject_a[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Crossed-random-effects REML

namespace {

// Profiled REML pieces for one (gamma1, gamma2). Uses the Woodbury identity
// with A = I_q + S Z'Z S, q = 2 * n_subjects, so each evaluation costs
// O(q^3) instead of O(n^3).
struct RemlWorkspace {
    Eigen::MatrixXd ZtZ;  // q x q
    Eigen::MatrixXd ZtX;  // q x k
    Eigen::VectorXd Zty;  // q
    Eigen::MatrixXd XtX;  // k x k
    Eigen::VectorXd Xty;  // k
    double yty = 0.0;
    std::size_t n = 0, k = 0;
    int n_subjects = 0;

    RemlWorkspace(const Design& design, const std::vector<int>& subj1,
                  const std::vector<int>& subj2, int n_subjects_in) {
        n = design.n;
        k = design.k;
        n_subjects = n_subjects_in;
        const long q = 2L * n_subjects;
        ZtZ = Eigen::MatrixXd::Zero(q, q);
        ZtX = Eigen::MatrixXd::Zero(q, static_cast<long>(k));
        Zty = Eigen::VectorXd::Zero(q);
        for (std::size_t i = 0; i < n; ++i) {
            const long r1 = subj1[i];
            const long r2 = n_subjects + subj2[i];
            ZtZ(r1, r1) += 1.0;
            ZtZ(r2, r2) += 1.0;
            ZtZ(r1, r2) += 1.0;
            ZtZ(r2, r1) += 1.0;
            ZtX.row(r1) += design.X.row(static_cast<long>(i));
            ZtX.row(r2) += design.X.row(static_cast<long>(i));
            Zty[r1] += design.y[static_cast<long>(i)];
            Zty[r2] += design.y[static_cast<long>(i)];
        }
        XtX = design.X.transpose() * design.X;
        Xty = design.X.transpose() * design.y;
        yty = design.y.squaredNorm();
    }

    struct Eval {
        double criterion = 0.0;
        double sigma2 = 0.0;
        Eigen::VectorXd beta;
        Eigen::MatrixXd xtwinvx;
        bool ok = false;
    };

    Eval evaluate(double gamma1, double gamma2) const {
        Eval ev;
        const long q = ZtZ.rows();
        Eigen::VectorXd s(q);
        for (long i = 0; i < q; ++i) {
            s[i] = std::sqrt(i < n_subjects ? gamma1 : gamma2);
        }
        Eigen::MatrixXd a = ZtZ;
        for (long i = 0; i < q; ++i) {
            for (long j = 0; j < q; ++j) a(i, j) *= s[i] * s[j];
        }
        a.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt_a(a);
        if (llt_a.info() != Eigen::Success) return ev;

        const Eigen::MatrixXd szx = s.asDiagonal() * ZtX;
        const Eigen::VectorXd szy = s.asDiagonal() * Zty;
        const Eigen::MatrixXd a_szx = llt_a.solve(szx);
        const Eigen::VectorXd a_szy = llt_a.solve(szy);

        ev.xtwinvx = XtX - szx.transpose() * a_szx;
        const Eigen::VectorXd xtwinvy = Xty - szx.transpose() * a_szy;
        const double ytwinvy = yty - szy.dot(a_szy);

        Eigen::LLT<Eigen::MatrixXd> llt_x(ev.xtwinvx);
        if (llt_x.info() != Eigen::Success) return ev;
        ev.beta = llt_x.solve(xtwinvy);

        const double rwr = std::max(ytwinvy - ev.beta.dot(xtwinvy), 1e-300);
        const double dof = static_cast<double>(n - k);
        ev.sigma2 = rwr / dof;

        double logdet_a = 0.0;
        const Eigen::MatrixXd& la = llt_a.matrixLLT();
        for (long i = 0; i < q; ++i) logdet_a += std::log(la(i, i));
        logdet_a *= 2.0;

        double logdet_x = 0.0;
        const Eigen::MatrixXd& lx = llt_x.matrixLLT();
        for (long i = 0; i < static_cast<long>(k); ++i) logdet_x += std::log(lx(i, i));
        logdet_x *= 2.0;

        ev.criterion = dof * std::log(ev.sigma2) + logdet_a + logdet_x + dof;
        ev.ok = std::isfinite(ev.criterion);
        return ev;
    }
};

// Bounded Nelder-Mead over theta = sqrt(variance ratio); negative proposals
// clamp to the tau^2 = 0 boundary.
class ThetaOptimizer {
public:
    ThetaOptimizer(const RemlWorkspace& ws, bool equal_ratios, int max_evals)
        : ws_(ws), equal_(equal_ratios), max_evals_(max_evals) {}

    double operator()(const Eigen::VectorXd& theta) {
        ++evals_;
        const double t1 = std::max(0.0, std::min(theta[0], kThetaMax));
        const double t2 = equal_ ? t1 : std::max(0.0, std::min(theta[1], kThetaMax));
        const auto ev = ws_.evaluate(t1 * t1, t2 * t2);
        return ev.ok ? ev.criterion : 1e30;
    }

    int evals() const { return evals_; }
    bool budget_exhausted() const { return evals_ >= max_evals_; }

    static constexpr double kThetaMax = 256.0;

private:
    const RemlWorkspace& ws_;
    bool equal_;
    int max_evals_;
    int evals_ = 0;
};

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      int iterations) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iterations; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
    }
    return (a + b) / 2.0;
}

}  // namespace

LmmFit lmm_fit_crossed(const DoubledData& doubled, const DesignSpec& spec,
                       const LmmOptions& options) {
    if (doubled.n_unique == 0) throw input_error("lmm_fit_crossed: empty data");
    Design design = build_design(doubled.data, spec, doubled.n_unique);
    check_full_rank(design);
    if (design.n <= design.k) throw input_error("lmm_fit_crossed: n <= k");

    RemlWorkspace ws(design, doubled.subj1, doubled.subj2, doubled.n_subjects);
    ThetaOptimizer objective(ws, options.equal_variance_ratios, options.max_evals);
    const int dim = options.equal_variance_ratios ? 1 : 2;

    // Coarse grid to locate the basin; the grid includes the 0 boundary.
    const double grid[] = {0.0, 0.1, 0.3, 0.7, 1.2, 2.0, 4.0, 16.0};
    Eigen::VectorXd best_theta = Eigen::VectorXd::Zero(dim);
    double best_f = std::numeric_limits<double>::infinity();
    if (dim == 1) {
        for (double t : grid) {
            Eigen::VectorXd th(1);
            th << t;
            const double f = objective(th);
            if (f < best_f) {
                best_f = f;
                best_theta = th;
            }
        }
    } else {
        for (double t1 : grid) {
            for (double t2 : grid) {
                Eigen::VectorXd th(2);
                th << t1, t2;
                const double f = objective(th);
                if (f < best_f) {
                    best_f = f;
                    best_theta = th;
                }
            }
        }
    }

    // Nelder-Mead from the grid winner.
    std::vector<Eigen::VectorXd> simplex;
    std::vector<double> fvals;
    simplex.push_back(best_theta);
    fvals.push_back(best_f);
    for (int d = 0; d < dim; ++d) {
        Eigen::VectorXd v = best_theta;
        v[d] += std::max(0.25, 0.25 * v[d]);
        simplex.push_back(v);
        fvals.push_back(objective(v));
    }

    bool converged = false;
    while (!objective.budget_exhausted()) {
        std::vector<std::size_t> order(simplex.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fvals[a] < fvals[b]; });
        std::vector<Eigen::VectorXd> sx;
        std::vector<double> sf;
        for (std::size_t i : order) {
            sx.push_back(simplex[i]);
            sf.push_back(fvals[i]);
        }
        simplex = sx;
        fvals = sf;

        if (fvals.back() - fvals.front() < options.tol * (1.0 + std::fabs(fvals.front()))) {
            converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
        centroid /= static_cast<double>(simplex.size() - 1);

        const Eigen::VectorXd reflected = centroid + (centroid - simplex.back());
        const double fr = objective(reflected);
        if (fr < fvals.front()) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex.back());
            const double fe = objective(expanded);
            if (fe < fr) {
                simplex.back() = expanded;
                fvals.back() = fe;
            } else {
                simplex.back() = reflected;
                fvals.back() = fr;
            }
        } else if (fr < fvals[fvals.size() - 2]) {
            simplex.back() = reflected;
            fvals.back() = fr;
        } else {
            const Eigen::VectorXd contracted = centroid + 0.5 * (simplex.back() - centroid);
            const double fc = objective(contracted);
            if (fc < fvals.back()) {
                simplex.back() = contracted;
                fvals.back() = fc;
            } else {
                for (std::size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                    fvals[i] = objective(simplex[i]);
                }
            }
        }
    }

    best_theta = simplex[0];
    best_f = fvals[0];
    for (std::size_t i = 1; i < simplex.size(); ++i) {
        if (fvals[i] < best_f) {
            best_f = fvals[i];
            best_theta = simplex[i];
        }
    }

    if (!converged) {
        // Forward-difference gradient as the convergence diagnostic.
        double grad_norm = 0.0;
        const double h = 1e-5;
        for (int d = 0; d < dim; ++d) {
            Eigen::VectorXd th = best_theta;
            th[d] += h;
            ThetaOptimizer probe(ws, options.equal_variance_ratios, 4);
            const double g = (probe(th) - best_f) / h;
            grad_norm += g * g;
        }
        throw data_error("LMM REML did not converge within evaluation budget; |grad| = " +
                         std::to_string(std::sqrt(grad_norm)));
    }

    // Coordinate golden-section polish, then a shrinking pattern search;
    // together they pin the optimum well below the oracle tolerance.
    ThetaOptimizer polish(ws, options.equal_variance_ratios, 1 << 20);
    for (int round = 0; round < 3; ++round) {
        for (int d = 0; d < dim; ++d) {
            const double center = best_theta[d];
            const double half = std::max(0.05, 0.1 * center);
            const double lo = std::max(0.0, center - half);
            const double hi = std::min(ThetaOptimizer::kThetaMax, center + half);
            const double refined = golden_section(
                [&](double t) {
                    Eigen::VectorXd th = best_theta;
                    th[d] = t;
                    return polish(th);
                },
                lo, hi, 48);
            Eigen::VectorXd th = best_theta;
            th[d] = refined;
            const double f = polish(th);
            if (f <= best_f) {
                best_theta = th;
                best_f = f;
            }
        }
    }
    for (double step = 1e-2; step > 1e-9; step *= 0.5) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (int d = 0; d < dim; ++d) {
                for (const double delta : {step, -step}) {
                    Eigen::VectorXd th = best_theta;
                    th[d] = std::max(0.0, th[d] + delta);
                    const double f = polish(th);
                    if (f < best_f) {
                        best_theta = th;
                        best_f = f;
                        improved = true;
                    }
                }
            }
        }
    }

    // Snap near-zero ratios to the boundary when that does not hurt.
    for (int d = 0; d < dim; ++d) {
        if (best_theta[d] > 0.0 && best_theta[d] < 1e-4) {
            Eigen::VectorXd th = best_theta;
            th[d] = 0.0;
            const double f0 = polish(th);
            if (f0 <= best_f + options.tol) {
                best_theta = th;
                best_f = f0;
            }
        }
    }

    const double theta1 = best_theta[0];
    const double theta2 = dim == 1 ? theta1 : best_theta[1];
    const auto ev = ws.evaluate(theta1 * theta1, theta2 * theta2);
    if (!ev.ok) throw data_error("LMM REML evaluation failed at the optimum");

    LmmFit fit;
    fit.beta = ev.beta;
    fit.sigma2 = ev.sigma2;
    fit.tau2_1 = theta1 * theta1 * ev.sigma2;
    fit.tau2_2 = theta2 * theta2 * ev.sigma2;
    fit.cov_beta =
        ev.sigma2 * ev.xtwinvx.llt().solve(Eigen::MatrixXd::Identity(
                        static_cast<long>(design.k), static_cast<long>(design.k)));
    fit.n_unique = doubled.n_unique;
    fit.n_rows = design.n;
    fit.k = design.k;
    fit.reml_deviance = ev.criterion;
    fit.converged = true;
    fit.design = std::move(design);
    return fit;
}

// ---------------------------------------------------------------------------
// Planned contrasts over estimated marginal means

std::vector<TermStat> planned_contrasts(const LmmFit& fit, const std::string& factor,
                                        const std::vector<Contrast>& contrasts,
                                        bool one_sided) {
    const FactorCoding* coding = nullptr;
    for (const auto& f : fit.design.factors) {
        if (f.term == factor) coding = &f;
    }
    if (!coding) throw input_error("no categorical term named " + factor + " in the fit");

    std::vector<TermStat> stats;
    for (const auto& contrast : contrasts) {
        double weight_sum = 0.0;
        Eigen::VectorXd L = Eigen::VectorXd::Zero(static_cast<long>(fit.k));
        for (const auto& [level, weight] : contrast.weights) {
            if (std::find(coding->levels.begin(), coding->levels.end(), level) ==
                coding->levels.end()) {
                throw input_error("missing factor level: " + level);
            }
            weight_sum += weight;
            if (level != coding->reference) {
                L[coding->level_column.at(level)] = weight;
            }
        }
        if (std::fabs(weight_sum) > 1e-12) {
            throw input_error("contrast weights must sum to 0: " + contrast.name);
        }
        TermStat s;
        s.term = contrast.name;
        s.estimate = L.dot(fit.beta);
        s.se = std::sqrt(L.dot(fit.cov_beta * L));
        s.df = fit.df();
        const double t = s.estimate / s.se;
        s.p = one_sided ? t_upper_p(t, s.df) : t_two_sided_p(t, s.df);
        stats.push_back(std::move(s));
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Region sweeps

void apply_fdr_families(std::vector<RegionStats>& rows) {
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> families;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        families[{rows[i].model, rows[i].term}].push_back(i);
    }
    for (const auto& [key, idx] : families) {
        std::vector<double> p;
        p.reserve(idx.size());
        for (std::size_t i : idx) p.push_back(rows[i].p_raw);
        const std::vector<double> adj = bh_fdr(p);
        for (std::size_t j = 0; j < idx.size(); ++j) rows[idx[j]].p_fdr = adj[j];
    }
}

namespace {

void sort_rows(std::vector<RegionStats>& rows) {
    std::sort(rows.begin(), rows.end(), [](const RegionStats& a, const RegionStats& b) {
        if (a.region != b.region) return a.region < b.region;
        if (a.model != b.model) return a.model < b.model;
        return a.term < b.term;
    });
}

std::vector<std::size_t> finite_rows(const RegionResponse& response) {
    std::vector<std::size_t> rows;
    rows.reserve(response.size());
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (std::isfinite(response[i])) rows.push_back(i);
    }
    return rows;
}

}  // namespace

SweepResult region_sweep_ols(const std::vector<std::string>& regions,
                             const std::vector<RegionResponse>& responses,
                             const Dataset& base, const DesignSpec& spec,
                             const std::string& model_name, int threads) {
    if (regions.size() != responses.size()) {
        throw input_error("region_sweep_ols: regions/responses mismatch");
    }
    std::vector<std::vector<RegionStats>> per_region(regions.size());
    std::vector<std::string> errors(regions.size());
    parallel_for(regions.size(), threads, [&](std::size_t r) {
        try {
            const auto rows = finite_rows(responses[r]);
            Dataset d = base.subset(rows);
            std::vector<double> y;
            y.reserve(rows.size());
            for (std::size_t i : rows) y.push_back(responses[r][i]);
            d.add_numeric(spec.response, std::move(y));
            const OlsFit fit = ols_fit(d, spec);
            for (const auto& s : fit.term_stats()) {
                per_region[r].push_back({regions[r], model_name, s.term, s.estimate, s.se,
                                         s.df, s.p, 1.0, fit.n});
            }
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    });

    SweepResult result;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        if (!errors[r].empty()) {
            warn("region " + regions[r] + " excluded from " + model_name + ": " + errors[r]);
            result.failures.push_back({regions[r], errors[r]});
        } else {
            result.rows.insert(result.rows.end(), per_region[r].begin(), per_region[r].end());
        }
    }
    apply_fdr_families(result.rows);
    sort_rows(result.rows);
    return result;
}

SweepResult region_sweep_spearman(const std::vector<std::string>& regions,
                                  const std::vector<RegionResponse>& responses,
                                  const std::vector<double>& predictor,
                                  const std::string& model_name, int threads) {
    if (regions.size() != responses.size()) {
        throw input_error("region_sweep_spearman: regions/responses mismatch");
    }
    std::vector<RegionStats> per_region(regions.size());
    std::vector<char> ok(regions.size(), 0);
    std::vector<std::string> errors(regions.size());
    parallel_for(regions.size(), threads, [&](std::size_t r) {
        try {
            const auto rows = finite_rows(responses[r]);
            std::vector<double> y, x;
            y.reserve(rows.size());
            x.reserve(rows.size());
            for (std::size_t i : rows) {
                y.push_back(responses[r][i]);
                x.push_back(predictor[i]);
            }
            const auto [rho, p] = spearman_rho(y, x);
            per_region[r] = {regions[r],
                             model_name,
                             "spearman_rho",
                             rho,
                             missing(),
                             static_cast<double>(rows.size() - 2),
                             p,
                             1.0,
                             rows.size()};
            ok[r] = 1;
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    });

    SweepResult result;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        if (!ok[r]) {
            warn("region " + regions[r] + " excluded from " + model_name + ": " + errors[r]);
            result.failures.push_back({regions[r], errors[r]});
        } else {
            result.rows.push_back(per_region[r]);
        }
    }
    apply_fdr_families(result.rows);
    sort_rows(result.rows);
    return result;
}

SweepResult region_sweep_lmm(const std::vector<std::string>& regions,
                             const std::vector<RegionResponse>& responses,
                             const Dataset& unique_frame, const std::vector<int>& subject_a,
                             const std::vector<int>& subject_b, int n_subjects,
                             const DesignSpec& spec, const std::string& contrast_factor,
                             const std::vector<Contrast>& contrasts,
                             const std::string& model_name, const LmmOptions& options,
                             bool one_sided, int threads) {
    if (regions.size() != responses.size()) {
        throw input_error("region_sweep_lmm: regions/responses mismatch");
    }
    std::vector<std::vector<RegionStats>> per_region(regions.size());
    std::vector<std::string> errors(regions.size());
    parallel_for(regions.size(), threads, [&](std::size_t r) {
        try {
            const auto rows = finite_rows(responses[r]);
            Dataset d = unique_frame.subset(rows);
            std::vector<double> y;
            std::vector<int> sa, sb;
            y.reserve(rows.size());
            sa.reserve(rows.size());
            sb.reserve(rows.size());
            for (std::size_t i : rows) {
                y.push_back(responses[r][i]);
                sa.push_back(subject_a[i]);
                sb.push_back(subject_b[i]);
            }
            d.add_numeric(spec.response, std::move(y));
            const DoubledData doubled = double_dyads(d, sa, sb, n_subjects);
            const LmmFit fit = lmm_fit_crossed(doubled, spec, options);
            if (!contrast_factor.empty()) {
                for (const auto& s :
                     planned_contrasts(fit, contrast_factor, contrasts, one_sided)) {
                    per_region[r].push_back({regions[r], model_name, s.term, s.estimate, s.se,
                                             s.df, s.p, 1.0, fit.n_unique});
                }
            }
            // Continuous / covariate terms, reported with the corrected df.
            const double dof = fit.df();
            for (std::size_t j = 1; j < fit.k; ++j) {
                if (!contrast_factor.empty() &&
                    fit.design.col_names[j].rfind(contrast_factor + "=", 0) == 0) {
                    continue;
                }
                const double est = fit.beta[static_cast<long>(j)];
                const double se =
                    std::sqrt(fit.cov_beta(static_cast<long>(j), static_cast<long>(j)));
                const double t = est / se;
                per_region[r].push_back({regions[r], model_name, fit.design.col_names[j], est,
                                         se, dof,
                                         one_sided ? t_upper_p(t, dof)
                                                   : t_two_sided_p(t, dof),
                                         1.0, fit.n_unique});
            }
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    });

    SweepResult result;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        if (!errors[r].empty()) {
            warn("region " + regions[r] + " excluded from " + model_name + ": " + errors[r]);
            result.failures.push_back({regions[r], errors[r]});
        } else {
            result.rows.insert(result.rows.end(), per_region[r].begin(), per_region[r].end());
        }
    }
    apply_fdr_families(result.rows);
    sort_rows(result.rows);
    return result;
}

}  // namespace annak::statkit
