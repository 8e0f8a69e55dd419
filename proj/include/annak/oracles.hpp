#pragma once

// Reference implementations used by the validation suite and the test
// oracles. Each deliberately takes a different algorithmic route from the
// production code it cross-checks: dense-matrix GLS with explicit inverses
// instead of the Woodbury path, literal step-up FDR, Floyd-Warshall instead
// of per-source BFS, counting ranks instead of sort-based ranking.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace annak::oracles {

inline Eigen::VectorXd ols_normal_equations(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& y) {
    const Eigen::MatrixXd xtx = X.transpose() * X;
    return xtx.inverse() * (X.transpose() * y);
}

inline std::vector<double> bh_step_up(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> sorted_adj(m);
    for (std::size_t i = 0; i < m; ++i) {
        sorted_adj[i] = p[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
    }
    for (std::size_t i = m; i-- > 1;) {
        sorted_adj[i - 1] = std::min(sorted_adj[i - 1], sorted_adj[i]);
    }
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        out[order[i]] = std::min(1.0, sorted_adj[i]);
    }
    return out;
}

// All-pairs shortest paths on an undirected unweighted graph given as an
// adjacency matrix; unreachable pairs stay at `infinity`.
inline std::vector<std::vector<int>> floyd_warshall(const std::vector<std::vector<char>>& adj,
                                                    int infinity) {
    const std::size_t n = adj.size();
    std::vector<std::vector<int>> d(n, std::vector<int>(n, infinity));
    for (std::size_t i = 0; i < n; ++i) {
        d[i][i] = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (adj[i][j]) d[i][j] = 1;
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (d[i][k] < infinity && d[k][j] < infinity) {
                    d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
                }
            }
        }
    }
    return d;
}

// Average ranks by counting, O(n^2).
inline std::vector<double> counting_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t below = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (v[j] < v[i]) ++below;
            if (v[j] == v[i] && j != i) ++equal;
        }
        ranks[i] = 1.0 + static_cast<double>(below) + static_cast<double>(equal) / 2.0;
    }
    return ranks;
}

// Dense-matrix REML for the crossed-random-intercept model on doubled data.
// Builds V explicitly and grid-refines the variance ratios.
struct DenseRemlOracle {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<int> subj1, subj2;

    struct Eval {
        double criterion = 0.0;
        double sigma2 = 0.0;
        Eigen::VectorXd beta;
    };

    Eval evaluate(double gamma1, double gamma2) const {
        const long n = y.size();
        const long k = X.cols();
        Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n);
        for (long i = 0; i < n; ++i) {
            for (long j = 0; j < n; ++j) {
                if (subj1[i] == subj1[j]) w(i, j) += gamma1;
                if (subj2[i] == subj2[j]) w(i, j) += gamma2;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(w);
        const Eigen::MatrixXd winv_x = llt.solve(X);
        const Eigen::VectorXd winv_y = llt.solve(y);
        const Eigen::MatrixXd xtwinvx = X.transpose() * winv_x;
        Eval ev;
        ev.beta = xtwinvx.inverse() * (X.transpose() * winv_y);
        const Eigen::VectorXd r = y - X * ev.beta;
        const double rwr = r.dot(llt.solve(r));
        const double dof = static_cast<double>(n - k);
        ev.sigma2 = rwr / dof;
        double logdet_w = 0.0;
        const Eigen::MatrixXd& lw = llt.matrixLLT();
        for (long i = 0; i < n; ++i) logdet_w += std::log(lw(i, i));
        logdet_w *= 2.0;
        const double logdet_x = std::log(xtwinvx.determinant());
        ev.criterion = dof * std::log(ev.sigma2) + logdet_w + logdet_x + dof;
        return ev;
    }

    struct Result {
        double gamma1 = 0.0, gamma2 = 0.0;
        double sigma2 = 0.0, tau2_1 = 0.0, tau2_2 = 0.0;
        double criterion = 0.0;
        Eigen::VectorXd beta;
    };

    Result grid_search(bool equal_ratios) const {
        std::vector<double> coarse{0.0};
        for (int i = 0; i <= 14; ++i) {
            coarse.push_back(std::pow(10.0, -3.0 + 5.5 * i / 14.0));
        }
        double best_g1 = 0.0, best_g2 = 0.0;
        double best_f = std::numeric_limits<double>::infinity();
        for (double g1 : coarse) {
            for (double g2 : equal_ratios ? std::vector<double>{g1} : coarse) {
                const double f = evaluate(g1, g2).criterion;
                if (f < best_f) {
                    best_f = f;
                    best_g1 = g1;
                    best_g2 = g2;
                }
            }
        }
        double step1 = std::max(0.5, best_g1);
        double step2 = std::max(0.5, best_g2);
        for (int round = 0; round < 22; ++round) {
            double round_g1 = best_g1, round_g2 = best_g2;
            const int points = 9;
            for (int i = 0; i < points; ++i) {
                const double g1 =
                    std::max(0.0, best_g1 + step1 * (i - points / 2) / (points / 2.0));
                if (equal_ratios) {
                    const double f = evaluate(g1, g1).criterion;
                    if (f < best_f) {
                        best_f = f;
                        round_g1 = g1;
                        round_g2 = g1;
                    }
                    continue;
                }
                for (int j = 0; j < points; ++j) {
                    const double g2 =
                        std::max(0.0, best_g2 + step2 * (j - points / 2) / (points / 2.0));
                    const double f = evaluate(g1, g2).criterion;
                    if (f < best_f) {
                        best_f = f;
                        round_g1 = g1;
                        round_g2 = g2;
                    }
                }
            }
            best_g1 = round_g1;
            best_g2 = round_g2;
            step1 *= 0.35;
            step2 *= 0.35;
        }
        const Eval ev = evaluate(best_g1, best_g2);
        Result result;
        result.gamma1 = best_g1;
        result.gamma2 = best_g2;
        result.sigma2 = ev.sigma2;
        result.tau2_1 = best_g1 * ev.sigma2;
        result.tau2_2 = best_g2 * ev.sigma2;
        result.criterion = ev.criterion;
        result.beta = ev.beta;
        return result;
    }
};

}  // namespace annak::oracles
