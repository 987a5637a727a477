#pragma once

#include "multiscreen/data.hpp"
#include "multiscreen/multi_pc.hpp"
#include "multiscreen/screening.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace multiscreen {

/// Counter-based generator: output i is a SplitMix64 finalization of
/// key + (i + 1) * golden gamma, so any draw is a pure function of
/// (key, counter) and streams never share state.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Standard normal by inversion of the uniform draw.
    double normal();

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;
/// Child key for (parent, a, b); distinct tuples give unrelated keys.
std::uint64_t derive_key(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) noexcept;

struct SimSetting {
    int id = 1;
    Index n = 100;
    Index p = 1000;
    Index K = 5;
    Index s0 = 10;
    double beta_low = 0.1;
    double beta_high = 0.3;
    bool heterogeneous = false;
    double hetero_sd = 0.5;
    double noise_sd = 0.5;
    std::vector<double> r_pool{0.0, 0.2, 0.4, 0.6};
    bool fix_r = false;  ///< draw per-study r once per setting instead of per replication
    Index B = 200;
    std::uint64_t seed = 42;

    /// Settings 1-4: weak/strong signals, homogeneous/heterogeneous across studies.
    static SimSetting preset(int id);
    void validate() const;
};

struct SimInstance {
    MultiStudy data;
    IndexList true_active;         ///< 0-based, sorted
    Eigen::MatrixXd true_beta;     ///< p x K
    std::vector<double> r;         ///< AR(1) coefficient used in each study
};

/// Evenly spaced 1-based positions round(1 + (i-1)(p-1)/(s0-1)), returned
/// 0-based and deduplicated.
IndexList even_active_indices(Index p, Index s0);

SimInstance gen_instance(const SimSetting& setting, Index rep);

struct RepMetrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    Index tp = 0, fp = 0, fn = 0, tn = 0;
};

RepMetrics evaluate(const IndexList& kept, const IndexList& truth, Index p);

enum class MethodKind { tsa, onestep, minsis, multipc };
std::string to_string(MethodKind kind);

struct MethodSpec {
    MethodKind kind = MethodKind::tsa;
    ScreeningConfig screening;
    Index d = 0;                 ///< min-SIS: top-d; 0 means round(n / log n)
    MultiPcConfig multipc;       ///< screening field is overwritten by `screening`
};

struct ReplicationSummary {
    Index replications = 0;      ///< requested
    Index succeeded = 0;
    Index failed = 0;
    std::string first_failure;
    double mean_sensitivity = 0.0, se_sensitivity = 0.0;
    double mean_specificity = 0.0, se_specificity = 0.0;
    double mean_fp = 0.0, mean_fn = 0.0;
    double mean_selected = 0.0;
    double coverage = 0.0;       ///< fraction of replications with truth within the kept set
};

/// Per-replication selection for one method on one instance.
IndexList apply_method(const SimInstance& instance, const MethodSpec& method);

ReplicationSummary summarize(const std::vector<std::optional<RepMetrics>>& reps, Index s0,
                             const std::vector<std::string>& errors);

ReplicationSummary run_replications(const SimSetting& setting, const MethodSpec& method);

struct SensitivityTable {
    std::vector<double> alpha1;
    std::vector<double> alpha2;
    std::vector<std::vector<ReplicationSummary>> cells;  ///< [alpha1][alpha2]
};

/// TSA-SIS over the full factorial of (alpha1, alpha2); each replication's
/// statistics are computed once and shared by all cells.
SensitivityTable sensitivity_grid(const SimSetting& setting, const std::vector<double>& alpha1,
                                  const std::vector<double>& alpha2);

struct RocPoint {
    Index d = 0;
    double sensitivity = 0.0;
    double one_minus_specificity = 0.0;
};

struct RocResult {
    std::vector<RocPoint> min_sis;   ///< d = 0..p, averaged over replications
    ReplicationSummary tsa;          ///< TSA-SIS operating point on the same data
    ScreeningConfig tsa_config;
};

/// Min-SIS ROC curve (every d) plus the TSA-SIS point, from shared data.
RocResult roc_min_sis(const SimSetting& setting, const ScreeningConfig& tsa_config = {});

/// Upper-envelope linear interpolation of the curve's sensitivity at a
/// given 1 - specificity.
double interpolate_sensitivity(const std::vector<RocPoint>& curve, double one_minus_specificity);

/// At most max_points points, evenly spaced in d, always keeping both ends.
std::vector<RocPoint> subsample_roc(const std::vector<RocPoint>& curve, std::size_t max_points = 200);

}  // namespace multiscreen
