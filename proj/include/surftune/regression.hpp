#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surftune/error.hpp"
#include "surftune/parameter_space.hpp"
#include "surftune/random.hpp"

namespace surftune {

using exponents = std::vector<int>;

/// All monomials in k variables of total degree <= order, constant term
/// first, then by increasing degree; within a degree, exponent vectors in
/// descending lexicographic order ({1, x1, x2, x1^2, x1*x2, x2^2} for k=2).
class PolynomialBasis {
public:
    PolynomialBasis() = default;
    PolynomialBasis(std::size_t k, int order) : k_(k), order_(order) {
        if (k < 1) throw tuning_error("polynomial basis needs k >= 1");
        if (order < 0) throw tuning_error("polynomial order must be >= 0");
        exponents e(k, 0);
        for (int d = 0; d <= order; ++d) enumerate(e, 0, d);
    }

    std::size_t dimension() const { return k_; }
    int order() const { return order_; }
    std::size_t size() const { return terms_.size(); }
    const std::vector<exponents>& terms() const { return terms_; }
    const exponents& term(std::size_t t) const { return terms_[t]; }

    std::size_t index_of(const exponents& e) const {
        auto it = std::find(terms_.begin(), terms_.end(), e);
        if (it == terms_.end()) throw tuning_error("term not in basis");
        return static_cast<std::size_t>(it - terms_.begin());
    }

    int degree(std::size_t t) const { return std::accumulate(terms_[t].begin(), terms_[t].end(), 0); }

    friend bool operator==(const PolynomialBasis& a, const PolynomialBasis& b) {
        return a.k_ == b.k_ && a.order_ == b.order_;
    }

private:
    void enumerate(exponents& e, std::size_t l, int remaining) {
        if (l + 1 == k_) {
            e[l] = remaining;
            terms_.push_back(e);
            e[l] = 0;
            return;
        }
        for (int p = remaining; p >= 0; --p) {
            e[l] = p;
            enumerate(e, l + 1, remaining - p);
        }
        e[l] = 0;
    }

    std::size_t k_ = 0;
    int order_ = 0;
    std::vector<exponents> terms_;
};

/// "x1*x2^2"-style rendering of term t; "1" for the constant.
inline std::string term_name(const PolynomialBasis& basis, std::size_t t, const std::vector<std::string>& names) {
    std::string s;
    const auto& e = basis.term(t);
    for (std::size_t l = 0; l < e.size(); ++l) {
        if (e[l] == 0) continue;
        if (!s.empty()) s += "*";
        s += names[l];
        if (e[l] > 1) s += "^" + std::to_string(e[l]);
    }
    return s.empty() ? "1" : s;
}

inline std::vector<std::string> default_names(std::size_t k) {
    std::vector<std::string> n;
    for (std::size_t l = 0; l < k; ++l) n.push_back("x" + std::to_string(l + 1));
    return n;
}

/// Values of every basis monomial at `x`, constant term included.
inline std::vector<double> expand_basis(std::span<const double> x, const PolynomialBasis& basis) {
    if (x.size() != basis.dimension()) throw tuning_error("point dimension does not match basis");
    // powers[l][p] = x[l]^p
    std::vector<std::vector<double>> powers(x.size(), std::vector<double>(basis.order() + 1, 1.0));
    for (std::size_t l = 0; l < x.size(); ++l)
        for (int p = 1; p <= basis.order(); ++p) powers[l][p] = powers[l][p - 1] * x[l];
    std::vector<double> f(basis.size());
    for (std::size_t t = 0; t < basis.size(); ++t) {
        double v = 1.0;
        const auto& e = basis.term(t);
        for (std::size_t l = 0; l < e.size(); ++l) v *= powers[l][e[l]];
        f[t] = v;
    }
    return f;
}

/// n x (size-1) matrix of non-constant features, one row per point.
inline Eigen::MatrixXd design_matrix(const PolynomialBasis& basis, const std::vector<point>& points) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(basis.size() - 1));
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto f = expand_basis(points[i], basis);
        for (std::size_t t = 1; t < f.size(); ++t)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t - 1)) = f[t];
    }
    return X;
}

enum class Penalty { lasso = 1, ridge = 2 };

inline constexpr double support_threshold = 1e-9;

struct RegressionModel {
    PolynomialBasis basis;
    double intercept = 0.0;
    std::vector<double> coefficients;     // aligned with basis terms 1..size-1
    std::vector<double> standard_errors;  // same shape; 0 off the support
    double intercept_standard_error = 0.0;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;  // 0 marks a dropped zero-variance column
    double lambda = 0.0;
    Penalty penalty = Penalty::lasso;
    /// Leave-one-out refits (rows) over [intercept, coefficients...]; empty
    /// until loo_standard_errors has run.
    Eigen::MatrixXd loo_samples;

    std::size_t support_size() const {
        return static_cast<std::size_t>(std::count_if(coefficients.begin(), coefficients.end(),
                                                      [](double c) { return std::abs(c) > support_threshold; }));
    }
    std::vector<std::size_t> support() const {
        std::vector<std::size_t> s;
        for (std::size_t t = 0; t < coefficients.size(); ++t)
            if (std::abs(coefficients[t]) > support_threshold) s.push_back(t);
        return s;
    }
};

inline double predict(const RegressionModel& model, std::span<const double> x) {
    const auto f = expand_basis(x, model.basis);
    double y = model.intercept;
    for (std::size_t t = 1; t < f.size(); ++t) y += model.coefficients[t - 1] * f[t];
    return y;
}

/// Coefficient-wise sum; predict is linear in the coefficients, so
/// predict(a + b, x) == predict(a, x) + predict(b, x).
inline RegressionModel operator+(const RegressionModel& a, const RegressionModel& b) {
    if (!(a.basis == b.basis)) throw tuning_error("cannot add models over different bases");
    RegressionModel r = a;
    r.intercept += b.intercept;
    for (std::size_t t = 0; t < r.coefficients.size(); ++t) r.coefficients[t] += b.coefficients[t];
    r.loo_samples.resize(0, 0);
    return r;
}

struct FitOptions {
    long max_sweeps = 100000;
    double tolerance = 1e-7;  // max standardized coefficient change per sweep
    std::vector<double>* objective_trace = nullptr;
};

namespace detail {

/// Standardized problem: centered response, features scaled to zero mean and
/// unit (population) standard deviation, zero-variance columns removed.
struct StandardizedProblem {
    std::vector<Eigen::Index> columns;  // retained feature columns
    Eigen::VectorXd mean, scale;        // over all feature columns
    double y_mean = 0.0;
    double yy = 0.0;                    // sum (y - ybar)^2 / n
    Eigen::MatrixXd gram;               // Xs^T Xs / n
    Eigen::VectorXd xty;                // Xs^T (y - ybar) / n
    Eigen::Index n = 0;
};

inline StandardizedProblem standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    StandardizedProblem p;
    p.n = X.rows();
    const double n = static_cast<double>(p.n);
    p.y_mean = y.mean();
    const Eigen::VectorXd yc = y.array() - p.y_mean;
    p.yy = yc.squaredNorm() / n;
    p.mean = X.colwise().mean().transpose();
    p.scale = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double sd = std::sqrt((X.col(j).array() - p.mean(j)).square().sum() / n);
        if (sd > 1e-12 * std::max(1.0, std::abs(p.mean(j)))) {
            p.scale(j) = sd;
            p.columns.push_back(j);
        }
    }
    Eigen::MatrixXd Xs(p.n, static_cast<Eigen::Index>(p.columns.size()));
    for (std::size_t a = 0; a < p.columns.size(); ++a) {
        const auto j = p.columns[a];
        Xs.col(static_cast<Eigen::Index>(a)) = (X.col(j).array() - p.mean(j)) / p.scale(j);
    }
    p.gram = Xs.transpose() * Xs / n;
    p.xty = Xs.transpose() * yc / n;
    return p;
}

inline double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

/// (1/2n) ||yc - Xs b||^2 + penalty, evaluated through the Gram form.
inline double objective(const StandardizedProblem& p, const Eigen::VectorXd& b, double lambda, Penalty pen) {
    const double rss_half = 0.5 * (p.yy - 2.0 * p.xty.dot(b) + b.dot(p.gram * b));
    const double penalty = pen == Penalty::lasso ? lambda * b.lpNorm<1>() : lambda * b.squaredNorm();
    return rss_half + penalty;
}

inline double kkt_violation(const StandardizedProblem& p, double lambda, Penalty pen, const Eigen::VectorXd& b,
                            Eigen::Index* worst_inactive = nullptr) {
    const Eigen::VectorXd grad = p.xty - p.gram * b;
    double worst = 0.0, worst_zero = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        double v;
        if (pen == Penalty::ridge) {
            v = std::abs(grad(j) - 2.0 * lambda * b(j));
        } else if (b(j) != 0.0) {
            v = std::abs(grad(j) - lambda * (b(j) > 0 ? 1.0 : -1.0));
        } else {
            v = std::max(0.0, std::abs(grad(j)) - lambda);
            if (worst_inactive && v > worst_zero) {
                worst_zero = v;
                *worst_inactive = j;
            }
        }
        worst = std::max(worst, v);
    }
    return worst;
}

/// Active-set refinement between coordinate-descent sweeps. Solves the
/// stationarity equations exactly on the current active set and sign
/// pattern, steps to the best point on the segment towards that solution
/// (stopping at sign changes), and adds the worst inactive violator. Every
/// accepted step lowers the objective. Returns true once b satisfies the
/// optimality conditions.
inline bool polish_active_set(const StandardizedProblem& p, double lambda, Penalty pen, Eigen::VectorXd& b) {
    const Eigen::Index m = b.size();
    if (m == 0) return true;
    const double tol = 1e-10 * std::max(1.0, p.xty.cwiseAbs().maxCoeff());
    if (pen == Penalty::ridge) {
        Eigen::MatrixXd A = p.gram;
        A.diagonal().array() += 2.0 * lambda;
        const Eigen::VectorXd cand = A.ldlt().solve(p.xty);
        if (!cand.allFinite() || kkt_violation(p, lambda, pen, cand) > tol) return false;
        b = cand;
        return true;
    }

    std::vector<double> sign(static_cast<std::size_t>(m), 0.0);
    for (Eigen::Index j = 0; j < m; ++j) sign[static_cast<std::size_t>(j)] = b(j) > 0 ? 1.0 : (b(j) < 0 ? -1.0 : 0.0);
    double f_b = objective(p, b, lambda, pen);
    for (Eigen::Index iter = 0; iter < 2 * m + 10; ++iter) {
        std::vector<Eigen::Index> active;
        for (Eigen::Index j = 0; j < m; ++j)
            if (sign[static_cast<std::size_t>(j)] != 0.0) active.push_back(j);
        Eigen::VectorXd cand = Eigen::VectorXd::Zero(m);
        if (!active.empty()) {
            Eigen::VectorXd rhs = p.xty(active);
            for (std::size_t a = 0; a < active.size(); ++a)
                rhs(static_cast<Eigen::Index>(a)) -= lambda * sign[static_cast<std::size_t>(active[a])];
            const Eigen::VectorXd sol = p.gram(active, active).ldlt().solve(rhs);
            if (!sol.allFinite()) return false;
            for (std::size_t a = 0; a < active.size(); ++a) cand(active[a]) = sol(static_cast<Eigen::Index>(a));
        }
        // best of the candidate and the sign-change points along b -> cand
        Eigen::VectorXd best = cand;
        double f_best = objective(p, cand, lambda, pen);
        for (auto j : active) {
            if (b(j) == 0.0 || (cand(j) > 0) == (b(j) > 0)) continue;
            const double t = b(j) / (b(j) - cand(j));
            Eigen::VectorXd pt = b + t * (cand - b);
            pt(j) = 0.0;
            const double f_pt = objective(p, pt, lambda, pen);
            if (f_pt < f_best) {
                f_best = f_pt;
                best = pt;
            }
        }
        if (f_best > f_b) return false;
        b = best;
        f_b = f_best;
        for (Eigen::Index j = 0; j < m; ++j) sign[static_cast<std::size_t>(j)] = b(j) > 0 ? 1.0 : (b(j) < 0 ? -1.0 : 0.0);
        Eigen::Index worst = -1;
        if (kkt_violation(p, lambda, pen, b, &worst) <= tol) return true;
        if (worst >= 0) {
            const double g = p.xty(worst) - p.gram.row(worst).dot(b);
            sign[static_cast<std::size_t>(worst)] = g > 0 ? 1.0 : -1.0;
        }
    }
    return false;
}

/// Cyclic coordinate descent on the standardized problem, warm-started from
/// b. Stops when the largest coefficient change in a sweep falls below the
/// tolerance, when the sweep limit is reached, or as soon as an exact
/// active-set solve satisfies the optimality conditions.
inline long coordinate_descent(const StandardizedProblem& p, double lambda, Penalty pen, Eigen::VectorXd& b,
                               const FitOptions& opts) {
    const Eigen::Index m = b.size();
    Eigen::VectorXd grad = p.xty - p.gram * b;  // (Xs^T r) / n
    std::vector<signed char> pattern(static_cast<std::size_t>(m)), last_pattern;
    long sweep = 0;
    while (sweep < opts.max_sweeps) {
        ++sweep;
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double gjj = p.gram(j, j);
            const double old = b(j);
            const double rho = grad(j) + gjj * old;
            const double updated =
                pen == Penalty::lasso ? soft_threshold(rho, lambda) / gjj : rho / (gjj + 2.0 * lambda);
            const double delta = updated - old;
            if (delta != 0.0) {
                b(j) = updated;
                grad -= p.gram.col(j) * delta;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        for (Eigen::Index j = 0; j < m; ++j) pattern[static_cast<std::size_t>(j)] = static_cast<signed char>((b(j) > 0) - (b(j) < 0));
        const bool stable = pattern == last_pattern;
        last_pattern = pattern;
        if (max_delta < opts.tolerance || (stable && sweep % 4 == 0)) {
            if (polish_active_set(p, lambda, pen, b)) {
                if (opts.objective_trace) opts.objective_trace->push_back(objective(p, b, lambda, pen));
                break;
            }
            grad = p.xty - p.gram * b;
        }
        if (opts.objective_trace) opts.objective_trace->push_back(objective(p, b, lambda, pen));
        if (max_delta < opts.tolerance) break;
    }
    return sweep;
}

inline RegressionModel unstandardize(const PolynomialBasis& basis, const StandardizedProblem& p,
                                     const Eigen::VectorXd& b, double lambda, Penalty pen) {
    RegressionModel model;
    model.basis = basis;
    model.lambda = lambda;
    model.penalty = pen;
    const auto nf = static_cast<std::size_t>(p.mean.size());
    model.coefficients.assign(nf, 0.0);
    model.standard_errors.assign(nf, 0.0);
    model.feature_mean.assign(p.mean.data(), p.mean.data() + nf);
    model.feature_scale.assign(p.scale.data(), p.scale.data() + nf);
    double intercept = p.y_mean;
    for (std::size_t a = 0; a < p.columns.size(); ++a) {
        const auto j = static_cast<std::size_t>(p.columns[a]);
        double beta = b(static_cast<Eigen::Index>(a)) / p.scale(p.columns[a]);
        if (std::abs(beta) <= support_threshold) beta = 0.0;
        model.coefficients[j] = beta;
        intercept -= beta * p.mean(p.columns[a]);
    }
    model.intercept = intercept;
    return model;
}

}  // namespace detail

/// Smallest lambda at which the lasso keeps no non-constant term:
/// max_t |sum_i xs_it (y_i - ybar)| / n over standardized features.
inline double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const auto p = detail::standardize(X, y);
    return p.xty.size() == 0 ? 0.0 : p.xty.cwiseAbs().maxCoeff();
}

/// Penalized least squares over the non-constant columns of X:
///   (1/2n) sum (y - b0 - X beta)^2 + lambda * ||beta||_1      (lasso)
///   (1/2n) sum (y - b0 - X beta)^2 + lambda * ||beta||_2^2    (ridge)
/// with the penalty applied to standardized coefficients and the intercept
/// unpenalized. Coefficients are returned in the original feature scale.
inline RegressionModel fit_model(const PolynomialBasis& basis, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 double lambda, Penalty penalty = Penalty::lasso, const FitOptions& opts = {}) {
    if (X.rows() < 2) throw tuning_error("fit_model needs at least 2 rows");
    if (X.rows() != y.size()) throw tuning_error("design and response lengths differ");
    if (static_cast<std::size_t>(X.cols()) + 1 != basis.size())
        throw tuning_error("design columns do not match basis");
    if (lambda < 0.0) throw tuning_error("lambda must be >= 0");
    const auto p = detail::standardize(X, y);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.columns.size()));
    detail::coordinate_descent(p, lambda, penalty, b, opts);
    return detail::unstandardize(basis, p, b, lambda, penalty);
}

/// Descending geometric grid from lmax to lmax * ratio.
inline std::vector<double> lambda_grid(double lmax, std::size_t count = 50, double ratio = 1e-4) {
    std::vector<double> g;
    if (count == 0) return g;
    if (count == 1) return {lmax};
    for (std::size_t i = 0; i < count; ++i)
        g.push_back(lmax * std::pow(ratio, static_cast<double>(i) / static_cast<double>(count - 1)));
    return g;
}

struct CvResult {
    double lambda = 0.0;
    std::size_t index = 0;
    std::vector<double> grid;
    std::vector<double> mean_error;  // mean held-out squared error per grid point
    int folds = 0;
};

/// k-fold cross validation over `grid` (row i goes to fold i mod folds).
/// Returns the grid value with the smallest mean held-out squared error;
/// ties go to the larger lambda.
inline CvResult select_lambda_cv(const PolynomialBasis& basis, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 int folds, Penalty penalty, std::vector<double> grid) {
    if (grid.empty()) throw tuning_error("empty lambda grid");
    if (folds < 2) throw tuning_error("cross validation needs at least 2 folds");
    const auto n = X.rows();
    if (n < 2) throw tuning_error("cross validation needs at least 2 rows");
    if (n < folds) {
        warn("only " + std::to_string(n) + " rows for " + std::to_string(folds) +
             "-fold cross validation; using leave-one-out");
        folds = static_cast<int>(n);
    }
    CvResult res;
    res.grid = std::move(grid);
    res.folds = folds;
    res.mean_error.assign(res.grid.size(), 0.0);
    if (res.grid.size() == 1) {
        res.lambda = res.grid.front();
        return res;
    }

    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
        if (train.size() < 2) continue;
        const Eigen::MatrixXd Xtr = X(train, Eigen::all);
        const Eigen::VectorXd ytr = y(train);
        const auto p = detail::standardize(Xtr, ytr);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.columns.size()));
        for (std::size_t g = 0; g < res.grid.size(); ++g) {
            detail::coordinate_descent(p, res.grid[g], penalty, b, {});
            const auto m = detail::unstandardize(basis, p, b, res.grid[g], penalty);
            double sse = 0.0;
            for (auto i : test) {
                double pred = m.intercept;
                for (Eigen::Index j = 0; j < X.cols(); ++j) pred += m.coefficients[static_cast<std::size_t>(j)] * X(i, j);
                sse += (y(i) - pred) * (y(i) - pred);
            }
            res.mean_error[g] += sse / static_cast<double>(n);
        }
    }
    res.index = 0;
    for (std::size_t g = 1; g < res.grid.size(); ++g)
        if (res.mean_error[g] < res.mean_error[res.index]) res.index = g;
    res.lambda = res.grid[res.index];
    return res;
}

inline CvResult select_lambda_cv(const PolynomialBasis& basis, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 int folds = 5, Penalty penalty = Penalty::lasso) {
    const double lmax = lambda_max(X, y);
    if (lmax <= 0.0) {
        CvResult res;
        res.grid = {0.0};
        res.mean_error = {0.0};
        res.folds = folds;
        return res;
    }
    return select_lambda_cv(basis, X, y, folds, penalty, lambda_grid(lmax));
}

/// Ordinary least squares on [1, A]; a rank-deficient system falls back to
/// ridge with lambda = 1e-8.
inline Eigen::VectorXd least_squares_with_intercept(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
    Eigen::MatrixXd D(A.rows(), A.cols() + 1);
    D.col(0).setOnes();
    D.rightCols(A.cols()) = A;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    if (qr.rank() == D.cols()) return qr.solve(y);
    Eigen::MatrixXd N = D.transpose() * D;
    N.diagonal().array() += 1e-8;
    return N.ldlt().solve(D.transpose() * y);
}

/// Leave-one-out standard errors. The basis is reduced to the fitted model's
/// support, n least-squares refits are run with one row removed each, and
/// the standard error of every retained coefficient (and the intercept) is
/// the sample standard deviation over the refits. Off-support terms get 0.
/// Fills standard_errors, intercept_standard_error and loo_samples.
inline void loo_standard_errors(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, RegressionModel& model) {
    const auto n = X.rows();
    const auto nf = model.coefficients.size();
    model.standard_errors.assign(nf, 0.0);
    model.intercept_standard_error = 0.0;
    model.loo_samples.resize(0, 0);
    if (n < 3) {
        warn("leave-one-out standard errors need at least 3 rows; using zeros");
        return;
    }
    const auto support = model.support();
    std::vector<Eigen::Index> cols(support.begin(), support.end());
    const Eigen::MatrixXd Xs = X(Eigen::all, cols);

    model.loo_samples = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(nf) + 1);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index drop = 0; drop < n; ++drop) {
        keep.clear();
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != drop) keep.push_back(i);
        const Eigen::VectorXd beta = least_squares_with_intercept(Xs(keep, Eigen::all), y(keep));
        model.loo_samples(drop, 0) = beta(0);
        for (std::size_t s = 0; s < support.size(); ++s)
            model.loo_samples(drop, static_cast<Eigen::Index>(support[s]) + 1) = beta(static_cast<Eigen::Index>(s) + 1);
    }
    auto sample_sd = [&](Eigen::Index c) {
        const double mean = model.loo_samples.col(c).mean();
        return std::sqrt((model.loo_samples.col(c).array() - mean).square().sum() / static_cast<double>(n - 1));
    };
    model.intercept_standard_error = sample_sd(0);
    for (auto t : support) model.standard_errors[t] = sample_sd(static_cast<Eigen::Index>(t) + 1);
}

/// Copy of the model with every non-zero coefficient (and the intercept)
/// shifted by uniform noise in [-se, +se]. Zero coefficients stay zero.
inline RegressionModel perturb_model(const RegressionModel& model, rng_type& rng) {
    RegressionModel out = model;
    out.loo_samples.resize(0, 0);
    if (model.intercept_standard_error > 0.0)
        out.intercept += uniform(rng, -model.intercept_standard_error, model.intercept_standard_error);
    for (std::size_t t = 0; t < out.coefficients.size(); ++t) {
        const double se = model.standard_errors[t];
        if (std::abs(model.coefficients[t]) > support_threshold && se > 0.0)
            out.coefficients[t] += uniform(rng, -se, se);
    }
    return out;
}

/// Fitted model re-expressed in raw parameter units: the same polynomial
/// with each unit coordinate replaced by (raw - lower) / (upper - lower).
struct RawPolynomial {
    PolynomialBasis basis;
    double intercept = 0.0;
    std::vector<double> coefficients;
    std::vector<double> standard_errors;  // from mapped LOO refits when available
    double intercept_standard_error = 0.0;

    double evaluate(std::span<const double> raw) const {
        const auto f = expand_basis(raw, basis);
        double y = intercept;
        for (std::size_t t = 1; t < f.size(); ++t) y += coefficients[t - 1] * f[t];
        return y;
    }
};

namespace detail {

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Full coefficient vector (constant first) in unit coordinates -> raw units.
inline std::vector<double> map_to_raw(const PolynomialBasis& basis, const std::vector<double>& full,
                                      const ParameterSpace& space) {
    std::vector<double> out(basis.size(), 0.0);
    const std::size_t k = basis.dimension();
    for (std::size_t t = 0; t < basis.size(); ++t) {
        if (full[t] == 0.0) continue;
        const auto& e = basis.term(t);
        double scale = full[t];
        for (std::size_t l = 0; l < k; ++l) scale /= std::pow(space[l].upper - space[l].lower, e[l]);
        // expand prod_l (r_l - a_l)^{e_l} by the binomial theorem
        exponents cur(k, 0);
        auto rec = [&](auto&& self, std::size_t l, double acc) -> void {
            if (l == k) {
                out[basis.index_of(cur)] += acc;
                return;
            }
            for (int j = 0; j <= e[l]; ++j) {
                cur[l] = j;
                self(self, l + 1, acc * binomial(e[l], j) * std::pow(-space[l].lower, e[l] - j));
            }
            cur[l] = 0;
        };
        rec(rec, 0, scale);
    }
    return out;
}

}  // namespace detail

inline RawPolynomial to_raw_units(const RegressionModel& model, const ParameterSpace& space) {
    if (space.dimension() != model.basis.dimension()) throw tuning_error("space does not match model basis");
    std::vector<double> full(model.basis.size());
    full[0] = model.intercept;
    std::copy(model.coefficients.begin(), model.coefficients.end(), full.begin() + 1);
    const auto mapped = detail::map_to_raw(model.basis, full, space);

    RawPolynomial raw;
    raw.basis = model.basis;
    raw.intercept = mapped[0];
    raw.coefficients.assign(mapped.begin() + 1, mapped.end());
    raw.standard_errors.assign(raw.coefficients.size(), 0.0);

    const auto n = model.loo_samples.rows();
    if (n >= 2) {
        Eigen::MatrixXd samples(n, static_cast<Eigen::Index>(model.basis.size()));
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<double> row(model.basis.size());
            for (Eigen::Index c = 0; c < model.loo_samples.cols(); ++c) row[static_cast<std::size_t>(c)] = model.loo_samples(i, c);
            const auto m = detail::map_to_raw(model.basis, row, space);
            for (std::size_t t = 0; t < m.size(); ++t) samples(i, static_cast<Eigen::Index>(t)) = m[t];
        }
        auto sample_sd = [&](Eigen::Index c) {
            const double mean = samples.col(c).mean();
            return std::sqrt((samples.col(c).array() - mean).square().sum() / static_cast<double>(n - 1));
        };
        raw.intercept_standard_error = sample_sd(0);
        for (std::size_t t = 0; t < raw.standard_errors.size(); ++t)
            raw.standard_errors[t] = sample_sd(static_cast<Eigen::Index>(t) + 1);
    }
    return raw;
}

/// "y = 0.226 - 0.00667*a + ..." with only non-zero terms; "y = <b0>" when
/// every coefficient is zero.
inline std::string render_polynomial(const PolynomialBasis& basis, double intercept,
                                     const std::vector<double>& coefficients, const std::vector<std::string>& names,
                                     int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << "y = " << intercept;
    for (std::size_t t = 0; t < coefficients.size(); ++t) {
        const double c = coefficients[t];
        if (c == 0.0) continue;
        os << (c < 0 ? " - " : " + ") << std::abs(c) << "*" << term_name(basis, t + 1, names);
    }
    return os.str();
}

}  // namespace surftune
