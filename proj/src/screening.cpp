#include "multiscreen/screening.hpp"

#include "multiscreen/error.hpp"
#include "multiscreen/parallel.hpp"
#include "multiscreen/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace multiscreen {

void ScreeningConfig::validate() const {
    if (!(alpha1 > 0.0 && alpha1 < 1.0))
        throw InputError("alpha1 must lie strictly inside (0, 1)");
    if (!(alpha2 > 0.0 && alpha2 < 1.0))
        throw InputError("alpha2 must lie strictly inside (0, 1)");
    if (z_threshold && !(*z_threshold >= 0.0 && std::isfinite(*z_threshold)))
        throw InputError("explicit step-1 threshold must be finite and >= 0");
}

double ScreeningConfig::step1_threshold() const {
    if (z_threshold) return *z_threshold;
    return normal_quantile(1.0 - alpha1 / 2.0);
}

MarginalStats marginal_stats(const MultiStudy& data) {
    data.validate();
    const Index p = data.p();
    const Index K = data.K();
    MarginalStats out{Eigen::MatrixXd(p, K), Eigen::MatrixXd(p, K)};
    for (Index k = 0; k < K; ++k) {
        const Study& s = data.studies[static_cast<std::size_t>(k)];
        parallel_for(static_cast<std::size_t>(p), [&](std::size_t jj) {
            const auto j = static_cast<Index>(jj);
            const auto t = self_normalized_t(s.x.col(j), s.y, 0.0, j);
            out.t(j, k) = t.value;
            out.corr(j, k) = t.pearson;
        });
    }
    return out;
}

Step1Output step1_from_stats(const Eigen::MatrixXd& t_stats, double z_threshold) {
    Step1Output out(static_cast<std::size_t>(t_stats.rows()));
    for (Index j = 0; j < t_stats.rows(); ++j) {
        Step1Entry& e = out[static_cast<std::size_t>(j)];
        e.t_stats = t_stats.row(j).transpose();
        for (Index k = 0; k < t_stats.cols(); ++k)
            if (std::abs(t_stats(j, k)) <= z_threshold) e.l_hat.push_back(static_cast<int>(k));
        e.kappa_hat = static_cast<int>(e.l_hat.size());
    }
    return out;
}

Step1Output step1_separate(const MultiStudy& data, double alpha1) {
    ScreeningConfig cfg;
    cfg.alpha1 = alpha1;
    cfg.validate();
    return step1_from_stats(marginal_stats(data).t, cfg.step1_threshold());
}

std::vector<double> chi2_cutoffs(int max_kappa, double alpha2) {
    std::vector<double> out(static_cast<std::size_t>(max_kappa) + 1,
                            std::numeric_limits<double>::quiet_NaN());
    for (int kappa = 1; kappa <= max_kappa; ++kappa)
        out[static_cast<std::size_t>(kappa)] = chi2_quantile(1.0 - alpha2, kappa);
    return out;
}

namespace {

void finish_step2(FeatureScreenRecord& rec, const std::vector<double>& cutoffs) {
    if (rec.kappa_hat == 0) {
        rec.kept = true;
        return;
    }
    CompensatedSum<double> l;
    for (int k : rec.l_hat) {
        const double t = rec.t_stats(k);
        l.add(t * t);
    }
    rec.l_stat = l.value();
    rec.chi2_threshold = cutoffs.at(static_cast<std::size_t>(rec.kappa_hat));
    // L exactly at the cutoff is screened out
    rec.kept = *rec.l_stat > *rec.chi2_threshold;
}

ScreeningResult partition(std::vector<FeatureScreenRecord> records, const ScreeningConfig& config) {
    ScreeningResult out;
    out.config = config;
    for (const auto& r : records) (r.kept ? out.kept : out.dropped).push_back(r.feature);
    out.records = std::move(records);
    return out;
}

}  // namespace

FeatureScreenRecord two_step_test(Index feature, const Eigen::VectorXd& t_stats,
                                  double z_threshold, const std::vector<double>& cutoffs) {
    FeatureScreenRecord rec;
    rec.feature = feature;
    rec.t_stats = t_stats;
    for (Index k = 0; k < t_stats.size(); ++k)
        if (std::abs(t_stats(k)) <= z_threshold) rec.l_hat.push_back(static_cast<int>(k));
    rec.kappa_hat = static_cast<int>(rec.l_hat.size());
    finish_step2(rec, cutoffs);
    return rec;
}

ScreeningResult step2_aggregate(const Step1Output& step1, const ScreeningConfig& config) {
    config.validate();
    int max_kappa = 0;
    for (const auto& e : step1) max_kappa = std::max(max_kappa, e.kappa_hat);
    const auto cutoffs = chi2_cutoffs(max_kappa, config.alpha2);

    std::vector<FeatureScreenRecord> records(step1.size());
    for (std::size_t j = 0; j < step1.size(); ++j) {
        FeatureScreenRecord& rec = records[j];
        rec.feature = static_cast<Index>(j);
        rec.t_stats = step1[j].t_stats;
        rec.l_hat = step1[j].l_hat;
        rec.kappa_hat = step1[j].kappa_hat;
        finish_step2(rec, cutoffs);
    }
    return partition(std::move(records), config);
}

ScreeningResult tsa_sis_from_stats(const Eigen::MatrixXd& t_stats, const ScreeningConfig& config) {
    config.validate();
    return step2_aggregate(step1_from_stats(t_stats, config.step1_threshold()), config);
}

ScreeningResult tsa_sis(const MultiStudy& data, const ScreeningConfig& config) {
    config.validate();
    return tsa_sis_from_stats(marginal_stats(data).t, config);
}

ScreeningResult one_step_sis_from_stats(const Eigen::MatrixXd& t_stats,
                                        const ScreeningConfig& config) {
    config.validate();
    const auto step1 = step1_from_stats(t_stats, config.step1_threshold());
    std::vector<FeatureScreenRecord> records(step1.size());
    for (std::size_t j = 0; j < step1.size(); ++j) {
        FeatureScreenRecord& rec = records[j];
        rec.feature = static_cast<Index>(j);
        rec.t_stats = step1[j].t_stats;
        rec.l_hat = step1[j].l_hat;
        rec.kappa_hat = step1[j].kappa_hat;
        rec.kept = rec.kappa_hat == 0;
    }
    return partition(std::move(records), config);
}

ScreeningResult one_step_sis(const MultiStudy& data, const ScreeningConfig& config) {
    config.validate();
    return one_step_sis_from_stats(marginal_stats(data).t, config);
}

std::vector<RankedFeature> min_sis_rank_from_stats(const Eigen::MatrixXd& scores) {
    std::vector<RankedFeature> out(static_cast<std::size_t>(scores.rows()));
    for (Index j = 0; j < scores.rows(); ++j)
        out[static_cast<std::size_t>(j)] = {j, scores.row(j).cwiseAbs().minCoeff()};
    std::stable_sort(out.begin(), out.end(), [](const RankedFeature& a, const RankedFeature& b) {
        return a.score > b.score;
    });
    return out;
}

std::vector<RankedFeature> min_sis_rank(const MultiStudy& data, MinSisScore score) {
    const auto stats = marginal_stats(data);
    return min_sis_rank_from_stats(score == MinSisScore::pearson ? stats.corr : stats.t);
}

ScreeningResult min_sis_select(const std::vector<RankedFeature>& ranking, Index d) {
    const auto p = static_cast<Index>(ranking.size());
    if (d < 0 || d > p)
        throw InputError("min-SIS d must lie in [0, " + std::to_string(p) + "], got " +
                         std::to_string(d));
    std::vector<FeatureScreenRecord> records(static_cast<std::size_t>(p));
    for (Index r = 0; r < p; ++r) {
        const auto& f = ranking[static_cast<std::size_t>(r)];
        auto& rec = records[static_cast<std::size_t>(f.feature)];
        rec.feature = f.feature;
        rec.kept = r < d;
    }
    ScreeningResult out;
    for (const auto& rec : records) (rec.kept ? out.kept : out.dropped).push_back(rec.feature);
    out.records = std::move(records);
    return out;
}

Index default_min_sis_d(Index n) {
    if (n < 2) throw InputError("default_min_sis_d: n must be >= 2");
    const double nd = static_cast<double>(n);
    return std::max<Index>(1, static_cast<Index>(std::llround(nd / std::log(nd))));
}

}  // namespace multiscreen
