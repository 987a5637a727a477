#pragma once

#include "multiscreen/data.hpp"
#include "multiscreen/screening.hpp"
#include "multiscreen/stats.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace multiscreen {

/// Residual of `target` after least-squares projection onto span{1, x_S}.
/// Throws SingularDesignError when {1, x_S} is rank deficient.
Eigen::VectorXd residualize(const Eigen::MatrixXd& x, std::span<const Index> cond,
                            const Eigen::VectorXd& target);

struct PartialOptions {
    /// Scale by sqrt(n - |S| - 1) instead of sqrt(n).
    bool reduced_sample_size = false;
};

/// Self-normalized statistic of feature j against y given the features in S,
/// computed from the residuals of both on {1, x_S}.
TStat<double> partial_t(const Study& study, Index j, std::span<const Index> cond,
                        const PartialOptions& options = {});

enum class StopReason { reached_mreach, max_order, fixpoint };
std::string to_string(StopReason reason);

struct MultiPcConfig {
    ScreeningConfig screening;
    int max_order = 2;                   ///< highest stage m to run
    std::int64_t budget = 1'000'000;     ///< (feature, S) pairs allowed per stage
    PartialOptions partial;
};

/// Why a feature left the active set at some stage.
struct DropWitness {
    Index feature = 0;
    int stage = 0;
    IndexList conditioning_set;
    FeatureScreenRecord record;
};

struct MultiPcState {
    int stage = 1;
    std::vector<IndexList> active_sets;  ///< active_sets[m-1] is the stage-m set
    StopReason stopped_reason = StopReason::reached_mreach;
    ScreeningResult stage1;
    std::vector<DropWitness> drops;
    std::vector<std::int64_t> tests_per_stage;  ///< conditional tests actually run
};

/// Multi-PC: stage 1 is TSA-SIS; stage m keeps j only when the two-step test
/// keeps it for every S in A^{[m-1]} \ {j} with |S| = m - 1.
MultiPcState multi_pc_run(const MultiStudy& data, const MultiPcConfig& config);

/// Number of size-r subsets of an n-set, saturating at INT64_MAX.
std::int64_t binomial_saturating(std::int64_t n, std::int64_t r);

}  // namespace multiscreen
