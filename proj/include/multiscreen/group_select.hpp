#pragma once

#include "multiscreen/data.hpp"
#include "multiscreen/screening.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace multiscreen {

struct GroupLassoOptions {
    int max_iter = 10000;          ///< full block sweeps
    double tol = 1e-10;            ///< relative objective change
    double kkt_tol = 1e-9;         ///< required KKT residual before stopping
};

/// Group-lasso fit over K studies with one group per feature:
///
///   min  sum_k ||y_k - X_k b_k||^2 + lambda sum_j ||(b_j1, ..., b_jK)||_2
///
/// solved on columns standardized per study (centered, unit 1/n variance)
/// with centered responses. `beta` is reported on the original scale.
struct GroupLassoFit {
    IndexList features;             ///< the feature set the fit ran over
    Eigen::MatrixXd beta;           ///< |features| x K, original scale
    Eigen::MatrixXd beta_std;       ///< |features| x K, standardized scale
    Eigen::VectorXd intercepts;     ///< length K
    double lambda = 0.0;
    std::vector<double> objective_trace;  ///< standardized objective per sweep
    bool converged = false;
    int iterations = 0;
    double kkt_residual = 0.0;      ///< max KKT violation at return

    /// Features whose coefficient group is nonzero.
    IndexList selected() const;
};

/// Per-study standardized view of the design restricted to a feature set.
struct StandardizedDesign {
    std::vector<Eigen::MatrixXd> z;       ///< n_k x |features|, centered and scaled
    std::vector<Eigen::VectorXd> y;       ///< centered responses
    std::vector<Eigen::VectorXd> x_mean;  ///< column means per study
    std::vector<Eigen::VectorXd> x_scale; ///< column 1/n standard deviations per study
    std::vector<double> y_mean;
};

StandardizedDesign standardize(const MultiStudy& data, const IndexList& features);

/// Smallest lambda with an all-zero solution:
/// max_j || (2 z_jk^T y_k)_{k=1..K} ||_2 on the standardized design.
double lambda_max(const StandardizedDesign& design);

/// Objective value and worst KKT violation of a standardized coefficient
/// matrix (|features| x K).
double group_lasso_objective(const StandardizedDesign& design, const Eigen::MatrixXd& b,
                             double lambda);
double group_lasso_kkt_residual(const StandardizedDesign& design, const Eigen::MatrixXd& b,
                                double lambda);

GroupLassoFit group_lasso_fit(const MultiStudy& data, const IndexList& active, double lambda,
                              const GroupLassoOptions& options = {});

/// Fit on an existing standardized design, optionally warm-started from a
/// standardized coefficient matrix.
GroupLassoFit group_lasso_fit(const StandardizedDesign& design, const IndexList& active,
                              double lambda, const GroupLassoOptions& options,
                              const Eigen::MatrixXd* warm_start);

enum class TuneMethod { bic, cv };

struct LambdaDiagnostic {
    double lambda = 0.0;
    double score = 0.0;      ///< BIC or mean CV squared error
    double rss = 0.0;        ///< full-data residual sum of squares
    Index nonzero_groups = 0;
    int iterations = 0;
    bool converged = false;
};

struct LambdaSelection {
    double lambda = 0.0;
    std::size_t index = 0;   ///< position in the grid
    TuneMethod method = TuneMethod::bic;
    std::vector<LambdaDiagnostic> path;
};

/// Log-spaced grid from lambda_max down to lambda_max * 1e-3.
std::vector<double> lambda_grid(double lmax, int grid_size);

/// BIC(l) = N log(RSS/N) + K * nnz(l) * log N, or 5-fold CV with folds
/// assigned within each study. Ties go to the smallest lambda.
LambdaSelection select_lambda(const MultiStudy& data, const IndexList& active, TuneMethod method,
                              int grid_size, const GroupLassoOptions& options = {});

/// Screening, then lambda tuning and a group-lasso fit on the kept features.
struct FinalModel {
    ScreeningResult screening;
    bool empty_screen = false;  ///< nothing survived screening; no fit was run
    std::optional<LambdaSelection> tuning;
    std::optional<GroupLassoFit> fit;
    IndexList selected;
};

FinalModel tsa_sis_group_lasso(const MultiStudy& data, const ScreeningConfig& config,
                               TuneMethod method, int grid_size = 50,
                               const GroupLassoOptions& options = {});

/// Ordinary least squares with intercept in one study.
struct OlsStudyFit {
    std::string study_id;
    Index n = 0;
    Eigen::VectorXd coef;  ///< intercept first, then the selected features
    Eigen::VectorXd se;
    double r2 = 0.0;
    double adj_r2 = 0.0;
    double sigma2 = 0.0;   ///< unbiased residual variance
};

std::vector<OlsStudyFit> ols_refit(const MultiStudy& data, const IndexList& selected);

}  // namespace multiscreen
