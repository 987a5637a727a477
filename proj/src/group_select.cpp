#include "multiscreen/group_select.hpp"

#include "multiscreen/error.hpp"
#include "multiscreen/stats.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace multiscreen {

namespace {

void check_active(const MultiStudy& data, const IndexList& active) {
    if (active.empty()) throw InputError("group lasso: active set is empty");
    for (std::size_t i = 0; i < active.size(); ++i) {
        if (active[i] < 0 || active[i] >= data.p())
            throw InputError("group lasso: feature index " + std::to_string(active[i]) +
                             " out of range");
        if (i > 0 && active[i] <= active[i - 1])
            throw InputError("group lasso: active set must be sorted and unique");
    }
}

// Residuals r_k = y_k - Z_k b_k for all studies.
std::vector<Eigen::VectorXd> residuals(const StandardizedDesign& d, const Eigen::MatrixXd& b) {
    std::vector<Eigen::VectorXd> r(d.z.size());
    for (std::size_t k = 0; k < d.z.size(); ++k)
        r[k] = d.y[k] - d.z[k] * b.col(static_cast<Index>(k));
    return r;
}

double penalty(const Eigen::MatrixXd& b) {
    CompensatedSum<double> s;
    for (Index j = 0; j < b.rows(); ++j) s.add(b.row(j).norm());
    return s.value();
}

double objective_from_residuals(const std::vector<Eigen::VectorXd>& r, const Eigen::MatrixXd& b,
                                double lambda) {
    CompensatedSum<double> s;
    for (const auto& rk : r) s.add(rk.squaredNorm());
    return s.value() + lambda * penalty(b);
}

double kkt_from_residuals(const StandardizedDesign& d, const std::vector<Eigen::VectorXd>& r,
                          const Eigen::MatrixXd& b, double lambda) {
    const auto K = static_cast<Index>(d.z.size());
    double worst = 0.0;
    Eigen::VectorXd g(K);
    for (Index j = 0; j < b.rows(); ++j) {
        for (Index k = 0; k < K; ++k)
            g(k) = -2.0 * d.z[static_cast<std::size_t>(k)].col(j).dot(r[static_cast<std::size_t>(k)]);
        const double bn = b.row(j).norm();
        if (bn == 0.0) {
            worst = std::max(worst, g.norm() - lambda);
        } else {
            const Eigen::VectorXd res = g + lambda * b.row(j).transpose() / bn;
            worst = std::max(worst, res.cwiseAbs().maxCoeff());
        }
    }
    return std::max(worst, 0.0);
}

GroupLassoFit unscale(const StandardizedDesign& d, const IndexList& active, Eigen::MatrixXd b,
                      double lambda) {
    const auto K = static_cast<Index>(d.z.size());
    GroupLassoFit fit;
    fit.features = active;
    fit.lambda = lambda;
    fit.beta.resize(b.rows(), K);
    fit.intercepts.resize(K);
    for (Index k = 0; k < K; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        fit.beta.col(k) = b.col(k).cwiseQuotient(d.x_scale[kk]);
        fit.intercepts(k) = d.y_mean[kk] - d.x_mean[kk].dot(fit.beta.col(k));
    }
    fit.beta_std = std::move(b);
    return fit;
}

MultiStudy row_subset(const MultiStudy& data, int fold, int folds, bool test) {
    MultiStudy out;
    out.feature_names = data.feature_names;
    for (const auto& s : data.studies) {
        std::vector<Index> rows;
        for (Index i = 0; i < s.n(); ++i)
            if ((i % folds == fold) == test) rows.push_back(i);
        Study sub;
        sub.id = s.id;
        sub.x = s.x(rows, Eigen::all);
        sub.y = s.y(rows);
        out.studies.push_back(std::move(sub));
    }
    return out;
}

}  // namespace

IndexList GroupLassoFit::selected() const {
    IndexList out;
    for (Index j = 0; j < beta_std.rows(); ++j)
        if (beta_std.row(j).norm() > 0.0) out.push_back(features[static_cast<std::size_t>(j)]);
    return out;
}

StandardizedDesign standardize(const MultiStudy& data, const IndexList& features) {
    StandardizedDesign d;
    const auto a = static_cast<Index>(features.size());
    for (const auto& s : data.studies) {
        const Index n = s.n();
        Eigen::MatrixXd z(n, a);
        Eigen::VectorXd mean(a), scale(a);
        for (Index c = 0; c < a; ++c) {
            const Index j = features[static_cast<std::size_t>(c)];
            const auto col = s.x.col(j);
            mean(c) = col.mean();
            z.col(c) = col.array() - mean(c);
            scale(c) = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(n));
            if (!(scale(c) > 0.0))
                throw DegenerateColumnError(j, "degenerate column (feature " + std::to_string(j) +
                                                   ") is constant in study '" + s.id + "'");
            z.col(c) /= scale(c);
        }
        const double ym = s.y.mean();
        d.z.push_back(std::move(z));
        d.y.push_back(s.y.array() - ym);
        d.x_mean.push_back(std::move(mean));
        d.x_scale.push_back(std::move(scale));
        d.y_mean.push_back(ym);
    }
    return d;
}

double lambda_max(const StandardizedDesign& d) {
    const auto K = static_cast<Index>(d.z.size());
    const Index a = d.z.empty() ? 0 : d.z.front().cols();
    double out = 0.0;
    Eigen::VectorXd g(K);
    for (Index j = 0; j < a; ++j) {
        for (Index k = 0; k < K; ++k)
            g(k) = 2.0 * d.z[static_cast<std::size_t>(k)].col(j).dot(d.y[static_cast<std::size_t>(k)]);
        out = std::max(out, g.norm());
    }
    return out;
}

double group_lasso_objective(const StandardizedDesign& d, const Eigen::MatrixXd& b,
                             double lambda) {
    return objective_from_residuals(residuals(d, b), b, lambda);
}

double group_lasso_kkt_residual(const StandardizedDesign& d, const Eigen::MatrixXd& b,
                                double lambda) {
    return kkt_from_residuals(d, residuals(d, b), b, lambda);
}

GroupLassoFit group_lasso_fit(const StandardizedDesign& d, const IndexList& active, double lambda,
                              const GroupLassoOptions& options, const Eigen::MatrixXd* warm_start) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InputError("group lasso: lambda must be finite and >= 0");
    const auto K = static_cast<Index>(d.z.size());
    const auto a = static_cast<Index>(active.size());

    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(a, K);
    if (warm_start) {
        if (warm_start->rows() != a || warm_start->cols() != K)
            throw InputError("group lasso: warm start has the wrong shape");
        b = *warm_start;
    }
    auto r = residuals(d, b);

    // Block Lipschitz constants of the smooth part: 2 max_k ||z_jk||^2.
    Eigen::VectorXd lip(a);
    for (Index j = 0; j < a; ++j) {
        double m = 0.0;
        for (Index k = 0; k < K; ++k)
            m = std::max(m, d.z[static_cast<std::size_t>(k)].col(j).squaredNorm());
        lip(j) = 2.0 * m;
    }

    GroupLassoFit fit;
    std::vector<double> trace;
    double obj = objective_from_residuals(r, b, lambda);
    trace.push_back(obj);
    bool converged = false;
    int it = 0;
    double kkt = std::numeric_limits<double>::infinity();
    Eigen::VectorXd v(K), delta(K), grad(K);

    for (it = 1; it <= options.max_iter; ++it) {
        for (Index j = 0; j < a; ++j) {
            // group soft-thresholding of a gradient step on block j
            for (Index k = 0; k < K; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                grad(k) = 2.0 * d.z[kk].col(j).dot(r[kk]);
                v(k) = b(j, k) + grad(k) / lip(j);
            }
            const bool was_zero = b.row(j).isZero(0.0);
            const double vn = v.norm();
            // a zero group stays zero exactly when ||grad|| <= lambda, the same
            // expression lambda_max uses
            const double shrink = (was_zero && grad.norm() <= lambda) || !(vn > 0.0)
                                      ? 0.0
                                      : std::max(0.0, 1.0 - lambda / (lip(j) * vn));
            delta = shrink * v - b.row(j).transpose();
            if (delta.squaredNorm() == 0.0) continue;
            for (Index k = 0; k < K; ++k) {
                if (delta(k) == 0.0) continue;
                const auto kk = static_cast<std::size_t>(k);
                r[kk].noalias() -= delta(k) * d.z[kk].col(j);
            }
            if (shrink == 0.0)
                b.row(j).setZero();
            else
                b.row(j) = shrink * v.transpose();
        }
        // refresh residuals so rounding drift cannot accumulate
        r = residuals(d, b);
        const double next = objective_from_residuals(r, b, lambda);
        trace.push_back(next);
        const double change = std::abs(obj - next);
        obj = next;
        if (change <= options.tol * std::max(1.0, std::abs(next))) {
            kkt = kkt_from_residuals(d, r, b, lambda);
            if (kkt <= options.kkt_tol) {
                converged = true;
                break;
            }
            if (change == 0.0) {
                // stalled at rounding level
                converged = kkt <= 1e3 * options.kkt_tol;
                break;
            }
        }
    }
    if (!std::isfinite(kkt)) kkt = kkt_from_residuals(d, r, b, lambda);

    fit = unscale(d, active, std::move(b), lambda);
    fit.objective_trace = std::move(trace);
    fit.converged = converged;
    fit.iterations = std::min(it, options.max_iter);
    fit.kkt_residual = kkt;
    return fit;
}

GroupLassoFit group_lasso_fit(const MultiStudy& data, const IndexList& active, double lambda,
                              const GroupLassoOptions& options) {
    data.validate();
    check_active(data, active);
    return group_lasso_fit(standardize(data, active), active, lambda, options, nullptr);
}

std::vector<double> lambda_grid(double lmax, int grid_size) {
    if (grid_size < 2) throw InputError("lambda grid needs at least 2 points");
    if (!(lmax > 0.0) || !std::isfinite(lmax))
        throw SelectionError("lambda grid: lambda_max must be positive and finite");
    std::vector<double> grid(static_cast<std::size_t>(grid_size));
    const double lo = std::log(lmax * 1e-3);
    const double hi = std::log(lmax);
    for (int i = 0; i < grid_size; ++i)
        grid[static_cast<std::size_t>(i)] = std::exp(hi + (lo - hi) * i / (grid_size - 1));
    grid.front() = lmax;
    return grid;
}

LambdaSelection select_lambda(const MultiStudy& data, const IndexList& active, TuneMethod method,
                              int grid_size, const GroupLassoOptions& options) {
    data.validate();
    check_active(data, active);
    if (grid_size < 2) throw InputError("select_lambda: grid size must be >= 2");

    const auto design = standardize(data, active);
    const auto grid = lambda_grid(lambda_max(design), grid_size);
    const auto K = static_cast<double>(data.K());
    const auto N = static_cast<double>(data.total_n());

    LambdaSelection sel;
    sel.method = method;
    sel.path.resize(grid.size());

    Eigen::MatrixXd warm;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto fit = group_lasso_fit(design, active, grid[g], options, g ? &warm : nullptr);
        auto& diag = sel.path[g];
        diag.lambda = grid[g];
        diag.rss = group_lasso_objective(design, fit.beta_std, 0.0);
        diag.nonzero_groups = static_cast<Index>(fit.selected().size());
        diag.iterations = fit.iterations;
        diag.converged = fit.converged;
        diag.score = N * std::log(diag.rss / N) +
                     K * static_cast<double>(diag.nonzero_groups) * std::log(N);
        warm = std::move(fit.beta_std);
    }

    if (method == TuneMethod::cv) {
        constexpr int folds = 5;
        for (const auto& s : data.studies)
            if (s.n() - (s.n() + folds - 1) / folds < 3)
                throw InputError("cross-validation: study '" + s.id + "' is too small for " +
                                 std::to_string(folds) + " folds");
        std::vector<CompensatedSum<double>> sse(grid.size());
        for (int f = 0; f < folds; ++f) {
            const auto train = row_subset(data, f, folds, false);
            const auto test = row_subset(data, f, folds, true);
            const auto tdesign = standardize(train, active);
            Eigen::MatrixXd fold_warm;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                auto fit = group_lasso_fit(tdesign, active, grid[g], options, g ? &fold_warm : nullptr);
                for (std::size_t k = 0; k < test.studies.size(); ++k) {
                    const auto& ts = test.studies[k];
                    const auto kk = static_cast<Index>(k);
                    const Eigen::VectorXd pred =
                        (ts.x(Eigen::all, active) * fit.beta.col(kk)).array() + fit.intercepts(kk);
                    sse[g].add((ts.y - pred).squaredNorm());
                }
                fold_warm = std::move(fit.beta_std);
            }
        }
        for (std::size_t g = 0; g < grid.size(); ++g) sel.path[g].score = sse[g].value() / N;
    }

    bool any = false;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double s = sel.path[g].score;
        if (!std::isfinite(s)) continue;
        // grid is descending, so <= prefers the smaller lambda on ties
        if (!any || s <= best) {
            best = s;
            sel.index = g;
            any = true;
        }
    }
    if (!any) throw SelectionError("select_lambda: every grid point produced a degenerate fit");
    sel.lambda = grid[sel.index];
    return sel;
}

FinalModel tsa_sis_group_lasso(const MultiStudy& data, const ScreeningConfig& config,
                               TuneMethod method, int grid_size, const GroupLassoOptions& options) {
    FinalModel model;
    model.screening = tsa_sis(data, config);
    if (model.screening.kept.empty()) {
        model.empty_screen = true;
        return model;
    }
    model.tuning = select_lambda(data, model.screening.kept, method, grid_size, options);
    model.fit = group_lasso_fit(data, model.screening.kept, model.tuning->lambda, options);
    model.selected = model.fit->selected();
    return model;
}

std::vector<OlsStudyFit> ols_refit(const MultiStudy& data, const IndexList& selected) {
    data.validate();
    for (Index j : selected)
        if (j < 0 || j >= data.p()) throw InputError("ols_refit: feature index out of range");

    std::vector<OlsStudyFit> out;
    const auto s = static_cast<Index>(selected.size());
    for (const auto& st : data.studies) {
        const Index n = st.n();
        if (s + 1 >= n)
            throw InputError("ols_refit: study '" + st.id + "' has too few observations for " +
                             std::to_string(s) + " predictors");
        Eigen::MatrixXd design(n, s + 1);
        design.col(0).setOnes();
        for (Index c = 0; c < s; ++c) design.col(c + 1) = st.x.col(selected[static_cast<std::size_t>(c)]);

        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        qr.setThreshold(1e-12);
        if (qr.rank() < s + 1)
            throw SingularDesignError("ols_refit: design of study '" + st.id + "' is rank deficient");

        OlsStudyFit fit;
        fit.study_id = st.id;
        fit.n = n;
        fit.coef = qr.solve(st.y);
        const Eigen::VectorXd resid = st.y - design * fit.coef;
        const double rss = resid.squaredNorm();
        const double tss = (st.y.array() - st.y.mean()).matrix().squaredNorm();
        if (!(tss > 0.0))
            throw NumericalError("ols_refit: response of study '" + st.id + "' is constant");
        fit.r2 = 1.0 - rss / tss;
        const double dof = static_cast<double>(n - s - 1);
        fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / dof;
        fit.sigma2 = rss / dof;

        // (X^T X)^{-1} = P R^{-1} R^{-T} P^T
        const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(s + 1, s + 1).triangularView<Eigen::Upper>();
        const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(
            Eigen::MatrixXd::Identity(s + 1, s + 1));
        const Eigen::MatrixXd cov_perm = rinv * rinv.transpose();
        const auto& perm = qr.colsPermutation();
        const Eigen::MatrixXd cov = perm * cov_perm * perm.transpose();
        fit.se = (fit.sigma2 * cov.diagonal()).cwiseSqrt();
        out.push_back(std::move(fit));
    }
    return out;
}

}  // namespace multiscreen
