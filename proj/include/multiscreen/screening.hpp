#pragma once

#include "multiscreen/data.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace multiscreen {

/// Significance levels of the two screening steps. `z_threshold`, when set,
/// replaces the step-1 cutoff Phi^{-1}(1 - alpha1/2) by an explicit value.
struct ScreeningConfig {
    double alpha1 = 1e-4;
    double alpha2 = 0.05;
    std::optional<double> z_threshold;

    void validate() const;
    double step1_threshold() const;
};

/// Per-feature screening evidence.
struct FeatureScreenRecord {
    Index feature = 0;
    Eigen::VectorXd t_stats;      ///< one statistic per study
    std::vector<int> l_hat;       ///< studies whose test did not reject, 0-based
    int kappa_hat = 0;            ///< |l_hat|
    std::optional<double> l_stat; ///< sum of squared statistics over l_hat
    std::optional<double> chi2_threshold;
    bool kept = false;
};

struct ScreeningResult {
    IndexList kept;
    IndexList dropped;
    std::vector<FeatureScreenRecord> records;
    ScreeningConfig config;
};

/// Output of step 1 for one feature; nothing is removed at this stage.
struct Step1Entry {
    Eigen::VectorXd t_stats;
    std::vector<int> l_hat;
    int kappa_hat = 0;
};
using Step1Output = std::vector<Step1Entry>;

/// Marginal statistics for every feature of every study.
struct MarginalStats {
    Eigen::MatrixXd t;     ///< p x K self-normalized statistics
    Eigen::MatrixXd corr;  ///< p x K Pearson correlations
};

MarginalStats marginal_stats(const MultiStudy& data);

/// Step 1 over precomputed statistics (p x K) with an explicit cutoff:
/// study k enters l_hat iff |t(j, k)| <= z_threshold.
Step1Output step1_from_stats(const Eigen::MatrixXd& t_stats, double z_threshold);
Step1Output step1_separate(const MultiStudy& data, double alpha1);

/// Step 2: keep j iff kappa_hat == 0 or L_hat > chi2_{kappa_hat}(1 - alpha2).
ScreeningResult step2_aggregate(const Step1Output& step1, const ScreeningConfig& config);

ScreeningResult tsa_sis(const MultiStudy& data, const ScreeningConfig& config);
ScreeningResult tsa_sis_from_stats(const Eigen::MatrixXd& t_stats, const ScreeningConfig& config);

/// Keeps a feature only when every study rejects zero correlation.
ScreeningResult one_step_sis(const MultiStudy& data, const ScreeningConfig& config);
ScreeningResult one_step_sis_from_stats(const Eigen::MatrixXd& t_stats,
                                        const ScreeningConfig& config);

/// Decision for a single feature given its K statistics. Shared with the
/// conditional tests of Multi-PC. `chi2_cutoffs[kappa]` caches the step-2
/// quantile for each kappa in 1..K.
FeatureScreenRecord two_step_test(Index feature, const Eigen::VectorXd& t_stats,
                                  double z_threshold, const std::vector<double>& chi2_cutoffs);
std::vector<double> chi2_cutoffs(int max_kappa, double alpha2);

enum class MinSisScore { pearson, t_stat };

struct RankedFeature {
    Index feature = 0;
    double score = 0.0;
};

/// Features ordered by min_k |score_jk|, descending, ties by ascending index.
std::vector<RankedFeature> min_sis_rank(const MultiStudy& data,
                                        MinSisScore score = MinSisScore::pearson);
std::vector<RankedFeature> min_sis_rank_from_stats(const Eigen::MatrixXd& scores);

/// Top-d selection from a ranking; kept/dropped are index-sorted.
ScreeningResult min_sis_select(const std::vector<RankedFeature>& ranking, Index d);

/// round(n / log n); 275 -> 49.
Index default_min_sis_d(Index n);

}  // namespace multiscreen
