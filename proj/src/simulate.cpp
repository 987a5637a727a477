#include "multiscreen/simulate.hpp"

#include "multiscreen/error.hpp"
#include "multiscreen/parallel.hpp"
#include "multiscreen/stats.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace multiscreen {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// stream tags
constexpr std::uint64_t kStreamBeta = 1;
constexpr std::uint64_t kStreamR = 2;
constexpr std::uint64_t kStreamStudy = 100;

struct RepOutcome {
    std::optional<RepMetrics> metrics;
    std::string error;
};

}  // namespace

std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_key(std::uint64_t parent, std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(mix64(mix64(parent ^ kGolden) + a * kGolden) + b * 0xD1B54A32D192ED03ULL);
}

std::uint64_t CounterRng::next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double CounterRng::uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() { return normal_quantile(uniform()); }

SimSetting SimSetting::preset(int id) {
    if (id < 1 || id > 4) throw InputError("simulation setting must be 1, 2, 3 or 4");
    SimSetting s;
    s.id = id;
    const bool strong = id == 2 || id == 4;
    s.beta_low = strong ? 0.7 : 0.1;
    s.beta_high = strong ? 1.0 : 0.3;
    s.heterogeneous = id >= 3;
    return s;
}

void SimSetting::validate() const {
    if (n < 3) throw InputError("simulation: n must be >= 3");
    if (p < 1) throw InputError("simulation: p must be >= 1");
    if (K < 1) throw InputError("simulation: K must be >= 1");
    if (s0 < 1 || s0 > p) throw InputError("simulation: s0 must lie in [1, p]");
    if (!(beta_low <= beta_high)) throw InputError("simulation: beta_low must be <= beta_high");
    if (!(noise_sd > 0.0)) throw InputError("simulation: noise_sd must be > 0");
    if (!(hetero_sd >= 0.0)) throw InputError("simulation: hetero_sd must be >= 0");
    if (r_pool.empty()) throw InputError("simulation: r pool is empty");
    for (double r : r_pool)
        if (!(r >= 0.0 && r < 1.0)) throw InputError("simulation: every r must lie in [0, 1)");
    if (B < 1) throw InputError("simulation: B must be >= 1");
}

IndexList even_active_indices(Index p, Index s0) {
    if (s0 < 1 || s0 > p) throw InputError("even_active_indices: s0 must lie in [1, p]");
    IndexList out;
    if (s0 == 1) return {0};
    for (Index i = 1; i <= s0; ++i) {
        const double pos = 1.0 + static_cast<double>(i - 1) * static_cast<double>(p - 1) /
                                     static_cast<double>(s0 - 1);
        out.push_back(static_cast<Index>(std::llround(pos)) - 1);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SimInstance gen_instance(const SimSetting& setting, Index rep) {
    setting.validate();
    const auto rep_key = derive_key(setting.seed, static_cast<std::uint64_t>(rep));
    const Index n = setting.n, p = setting.p, K = setting.K;

    SimInstance inst;
    inst.true_active = even_active_indices(p, setting.s0);
    inst.true_beta = Eigen::MatrixXd::Zero(p, K);

    CounterRng beta_rng(derive_key(rep_key, kStreamBeta));
    for (Index j : inst.true_active) {
        const double b = setting.beta_low + (setting.beta_high - setting.beta_low) * beta_rng.uniform();
        for (Index k = 0; k < K; ++k)
            inst.true_beta(j, k) = setting.heterogeneous ? b + setting.hetero_sd * beta_rng.normal() : b;
    }

    CounterRng r_rng(setting.fix_r ? derive_key(setting.seed, ~0ULL, kStreamR)
                                   : derive_key(rep_key, kStreamR));
    const auto pool = static_cast<std::uint64_t>(setting.r_pool.size());
    for (Index k = 0; k < K; ++k) {
        const auto pick = static_cast<std::size_t>(
            std::min<std::uint64_t>(pool - 1, static_cast<std::uint64_t>(r_rng.uniform() * pool)));
        inst.r.push_back(setting.r_pool[pick]);
    }

    std::vector<Study> studies(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k) {
        CounterRng rng(derive_key(rep_key, kStreamStudy + static_cast<std::uint64_t>(k)));
        const double r = inst.r[static_cast<std::size_t>(k)];
        const double innov = std::sqrt(1.0 - r * r);
        Study& s = studies[static_cast<std::size_t>(k)];
        s.id = "study" + std::to_string(k + 1);
        s.x.resize(n, p);
        // AR(1) along the feature axis realizes Sigma_ij = r^|i-j| exactly.
        for (Index i = 0; i < n; ++i) {
            double prev = rng.normal();
            s.x(i, 0) = prev;
            for (Index j = 1; j < p; ++j) {
                prev = r * prev + innov * rng.normal();
                s.x(i, j) = prev;
            }
        }
        s.y.resize(n);
        for (Index i = 0; i < n; ++i) {
            double mean = 0.0;
            for (Index j : inst.true_active) mean += s.x(i, j) * inst.true_beta(j, k);
            s.y(i) = mean + setting.noise_sd * rng.normal();
        }
    }
    inst.data = make_multistudy(std::move(studies));
    return inst;
}

RepMetrics evaluate(const IndexList& kept, const IndexList& truth, Index p) {
    if (p < 1) throw InputError("evaluate: p must be >= 1");
    std::vector<char> in_truth(static_cast<std::size_t>(p), 0), in_kept(static_cast<std::size_t>(p), 0);
    for (Index j : truth) {
        if (j < 0 || j >= p) throw InputError("evaluate: truth index " + std::to_string(j) + " out of range");
        in_truth[static_cast<std::size_t>(j)] = 1;
    }
    for (Index j : kept) {
        if (j < 0 || j >= p) throw InputError("evaluate: kept index " + std::to_string(j) + " out of range");
        in_kept[static_cast<std::size_t>(j)] = 1;
    }
    RepMetrics m;
    for (std::size_t j = 0; j < in_truth.size(); ++j) {
        if (in_truth[j])
            (in_kept[j] ? m.tp : m.fn)++;
        else
            (in_kept[j] ? m.fp : m.tn)++;
    }
    const Index s0 = m.tp + m.fn;
    const Index neg = m.fp + m.tn;
    if (s0 == 0) throw InputError("evaluate: the true active set is empty");
    if (neg == 0) throw InputError("evaluate: the true active set covers every feature");
    m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(s0);
    m.specificity = static_cast<double>(m.tn) / static_cast<double>(neg);
    return m;
}

std::string to_string(MethodKind kind) {
    switch (kind) {
        case MethodKind::tsa: return "tsa";
        case MethodKind::onestep: return "onestep";
        case MethodKind::minsis: return "minsis";
        case MethodKind::multipc: return "multipc";
    }
    return "unknown";
}

IndexList apply_method(const SimInstance& instance, const MethodSpec& method) {
    switch (method.kind) {
        case MethodKind::tsa: return tsa_sis(instance.data, method.screening).kept;
        case MethodKind::onestep: return one_step_sis(instance.data, method.screening).kept;
        case MethodKind::minsis: {
            const Index d = method.d > 0 ? method.d : default_min_sis_d(instance.data.max_n());
            return min_sis_select(min_sis_rank(instance.data), std::min(d, instance.data.p())).kept;
        }
        case MethodKind::multipc: {
            MultiPcConfig cfg = method.multipc;
            cfg.screening = method.screening;
            return multi_pc_run(instance.data, cfg).active_sets.back();
        }
    }
    throw InputError("unknown method");
}

ReplicationSummary summarize(const std::vector<std::optional<RepMetrics>>& reps, Index s0,
                             const std::vector<std::string>& errors) {
    ReplicationSummary out;
    out.replications = static_cast<Index>(reps.size());
    CompensatedSum<double> sens, sens2, spec, spec2, fp, fn, sel, cover;
    for (std::size_t r = 0; r < reps.size(); ++r) {
        if (!reps[r]) {
            ++out.failed;
            if (out.first_failure.empty() && r < errors.size())
                out.first_failure = "replication " + std::to_string(r) + ": " + errors[r];
            continue;
        }
        const auto& m = *reps[r];
        ++out.succeeded;
        sens.add(m.sensitivity);
        sens2.add(m.sensitivity * m.sensitivity);
        spec.add(m.specificity);
        spec2.add(m.specificity * m.specificity);
        fp.add(static_cast<double>(m.fp));
        fn.add(static_cast<double>(m.fn));
        sel.add(static_cast<double>(m.tp + m.fp));
        cover.add(m.tp == s0 ? 1.0 : 0.0);
    }
    if (out.succeeded == 0) return out;
    const auto b = static_cast<double>(out.succeeded);
    auto se = [b](double s, double s2) {
        if (b < 2) return 0.0;
        const double var = std::max(0.0, (s2 - s * s / b) / (b - 1.0));
        return std::sqrt(var / b);
    };
    out.mean_sensitivity = sens.value() / b;
    out.se_sensitivity = se(sens.value(), sens2.value());
    out.mean_specificity = spec.value() / b;
    out.se_specificity = se(spec.value(), spec2.value());
    out.mean_fp = fp.value() / b;
    out.mean_fn = fn.value() / b;
    out.mean_selected = sel.value() / b;
    out.coverage = cover.value() / b;
    return out;
}

ReplicationSummary run_replications(const SimSetting& setting, const MethodSpec& method) {
    setting.validate();
    const auto B = static_cast<std::size_t>(setting.B);
    std::vector<RepOutcome> outcomes(B);
    const auto truth = even_active_indices(setting.p, setting.s0);
    parallel_for(B, [&](std::size_t r) {
        try {
            const auto inst = gen_instance(setting, static_cast<Index>(r));
            outcomes[r].metrics = evaluate(apply_method(inst, method), inst.true_active, setting.p);
        } catch (const NumericalError& e) {
            outcomes[r].error = e.what();
        }
    });
    std::vector<std::optional<RepMetrics>> metrics(B);
    std::vector<std::string> errors(B);
    for (std::size_t r = 0; r < B; ++r) {
        metrics[r] = outcomes[r].metrics;
        errors[r] = outcomes[r].error;
    }
    return summarize(metrics, static_cast<Index>(truth.size()), errors);
}

SensitivityTable sensitivity_grid(const SimSetting& setting, const std::vector<double>& alpha1,
                                  const std::vector<double>& alpha2) {
    setting.validate();
    if (alpha1.empty() || alpha2.empty()) throw InputError("sensitivity grid: empty alpha list");
    for (double a : alpha1) ScreeningConfig{a, 0.5, {}}.validate();
    for (double a : alpha2) ScreeningConfig{0.5, a, {}}.validate();

    const auto B = static_cast<std::size_t>(setting.B);
    const std::size_t cells = alpha1.size() * alpha2.size();
    std::vector<std::vector<std::optional<RepMetrics>>> per_cell(
        cells, std::vector<std::optional<RepMetrics>>(B));
    std::vector<std::string> errors(B);

    parallel_for(B, [&](std::size_t r) {
        try {
            const auto inst = gen_instance(setting, static_cast<Index>(r));
            const auto t = marginal_stats(inst.data).t;
            for (std::size_t a = 0; a < alpha1.size(); ++a)
                for (std::size_t b = 0; b < alpha2.size(); ++b) {
                    const ScreeningConfig cfg{alpha1[a], alpha2[b], {}};
                    per_cell[a * alpha2.size() + b][r] =
                        evaluate(tsa_sis_from_stats(t, cfg).kept, inst.true_active, setting.p);
                }
        } catch (const NumericalError& e) {
            errors[r] = e.what();
        }
    });

    const auto s0 = static_cast<Index>(even_active_indices(setting.p, setting.s0).size());
    SensitivityTable table{alpha1, alpha2, {}};
    for (std::size_t a = 0; a < alpha1.size(); ++a) {
        table.cells.emplace_back();
        for (std::size_t b = 0; b < alpha2.size(); ++b)
            table.cells.back().push_back(summarize(per_cell[a * alpha2.size() + b], s0, errors));
    }
    return table;
}

RocResult roc_min_sis(const SimSetting& setting, const ScreeningConfig& tsa_config) {
    setting.validate();
    tsa_config.validate();
    const auto B = static_cast<std::size_t>(setting.B);
    const Index p = setting.p;
    const auto truth = even_active_indices(p, setting.s0);
    const auto s0 = static_cast<Index>(truth.size());

    // tp_cum[r][d]: true features among the top d of replication r
    std::vector<std::vector<Index>> tp_cum(B);
    std::vector<std::optional<RepMetrics>> tsa(B);
    std::vector<std::string> errors(B);

    parallel_for(B, [&](std::size_t r) {
        try {
            const auto inst = gen_instance(setting, static_cast<Index>(r));
            const auto stats = marginal_stats(inst.data);
            const auto ranking = min_sis_rank_from_stats(stats.corr);
            std::vector<char> is_true(static_cast<std::size_t>(p), 0);
            for (Index j : inst.true_active) is_true[static_cast<std::size_t>(j)] = 1;
            std::vector<Index> cum(static_cast<std::size_t>(p) + 1, 0);
            for (Index d = 0; d < p; ++d)
                cum[static_cast<std::size_t>(d) + 1] =
                    cum[static_cast<std::size_t>(d)] +
                    is_true[static_cast<std::size_t>(ranking[static_cast<std::size_t>(d)].feature)];
            tp_cum[r] = std::move(cum);
            tsa[r] = evaluate(tsa_sis_from_stats(stats.t, tsa_config).kept, inst.true_active, p);
        } catch (const NumericalError& e) {
            errors[r] = e.what();
        }
    });

    RocResult out;
    out.tsa_config = tsa_config;
    out.tsa = summarize(tsa, s0, errors);
    if (out.tsa.succeeded == 0) throw NumericalError("ROC: every replication failed; " + out.tsa.first_failure);

    const double neg = static_cast<double>(p - s0);
    out.min_sis.resize(static_cast<std::size_t>(p) + 1);
    for (Index d = 0; d <= p; ++d) {
        CompensatedSum<double> sens, fpr;
        double count = 0;
        for (std::size_t r = 0; r < B; ++r) {
            if (tp_cum[r].empty()) continue;
            const Index tp = tp_cum[r][static_cast<std::size_t>(d)];
            sens.add(static_cast<double>(tp) / static_cast<double>(s0));
            fpr.add(static_cast<double>(d - tp) / neg);
            count += 1;
        }
        auto& pt = out.min_sis[static_cast<std::size_t>(d)];
        pt.d = d;
        pt.sensitivity = sens.value() / count;
        pt.one_minus_specificity = fpr.value() / count;
    }
    return out;
}

double interpolate_sensitivity(const std::vector<RocPoint>& curve, double x) {
    if (curve.empty()) throw InputError("interpolate_sensitivity: empty curve");
    double best = -1.0;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
        const auto& a = curve[i];
        const auto& b = curve[i + 1];
        if (x < a.one_minus_specificity || x > b.one_minus_specificity) continue;
        double v;
        if (b.one_minus_specificity == a.one_minus_specificity)
            v = std::max(a.sensitivity, b.sensitivity);
        else
            v = a.sensitivity + (b.sensitivity - a.sensitivity) *
                                    (x - a.one_minus_specificity) /
                                    (b.one_minus_specificity - a.one_minus_specificity);
        best = std::max(best, v);
    }
    if (best < 0.0) {
        if (x <= curve.front().one_minus_specificity) return curve.front().sensitivity;
        return curve.back().sensitivity;
    }
    return best;
}

std::vector<RocPoint> subsample_roc(const std::vector<RocPoint>& curve, std::size_t max_points) {
    if (curve.size() <= max_points || max_points < 2) return curve;
    std::vector<RocPoint> out;
    const std::size_t last = curve.size() - 1;
    std::size_t prev = curve.size();
    for (std::size_t i = 0; i < max_points; ++i) {
        const std::size_t idx = (i * last + (max_points - 1) / 2) / (max_points - 1);
        if (idx != prev) out.push_back(curve[idx]);
        prev = idx;
    }
    if (out.back().d != curve.back().d) out.push_back(curve.back());
    return out;
}

}  // namespace multiscreen
