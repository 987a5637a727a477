#include "multiscreen/multi_pc.hpp"

#include "multiscreen/error.hpp"
#include "multiscreen/parallel.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <limits>
#include <sstream>

namespace multiscreen {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kResidualFloor = 1e-10;

std::string describe_set(std::span<const Index> s) {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << '}';
    return os.str();
}

// Advances `c` (sorted positions into a pool of size n) to the next
// r-combination in lexicographic order; false when exhausted.
bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
    const std::size_t r = c.size();
    for (std::size_t i = r; i-- > 0;) {
        if (c[i] < n - r + i) {
            ++c[i];
            for (std::size_t k = i + 1; k < r; ++k) c[k] = c[k - 1] + 1;
            return true;
        }
    }
    return false;
}

double centered_norm(const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).matrix().norm();
}

}  // namespace

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::reached_mreach: return "reached_mreach";
        case StopReason::max_order: return "max_order";
        case StopReason::fixpoint: return "fixpoint";
    }
    return "unknown";
}

std::int64_t binomial_saturating(std::int64_t n, std::int64_t r) {
    if (r < 0 || r > n) return 0;
    r = std::min(r, n - r);
    constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
    std::int64_t out = 1;
    for (std::int64_t i = 1; i <= r; ++i) {
        // out * (n - r + i) / i is exact at every step
        const __int128 next = static_cast<__int128>(out) * (n - r + i) / i;
        if (next > kMax) return kMax;
        out = static_cast<std::int64_t>(next);
    }
    return out;
}

Eigen::VectorXd residualize(const Eigen::MatrixXd& x, std::span<const Index> cond,
                            const Eigen::VectorXd& target) {
    const Index n = x.rows();
    const auto s = static_cast<Index>(cond.size());
    if (target.size() != n) throw InputError("residualize: target length does not match design");
    if (s >= n - 2)
        throw InputError("residualize: conditioning set of size " + std::to_string(s) +
                         " needs more than " + std::to_string(s + 2) + " observations");

    Eigen::MatrixXd design(n, s + 1);
    design.col(0).setOnes();
    for (Index c = 0; c < s; ++c) {
        const Index j = cond[static_cast<std::size_t>(c)];
        if (j < 0 || j >= x.cols()) throw InputError("residualize: feature index out of range");
        design.col(c + 1) = x.col(j);
    }
    // unit-norm columns so the rank test is scale free
    for (Index c = 0; c <= s; ++c) {
        const double norm = design.col(c).norm();
        if (norm == 0.0)
            throw SingularDesignError("singular conditioning set " + describe_set(cond) +
                                      ": zero column");
        design.col(c) /= norm;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < s + 1)
        throw SingularDesignError("singular conditioning set " + describe_set(cond) +
                                  ": design with intercept has rank " + std::to_string(qr.rank()) +
                                  " < " + std::to_string(s + 1));

    // r = Q [0; (Q^T t)_{s+1..n}] is orthogonal to the column space to rounding.
    Eigen::VectorXd qt = target;
    qt.applyOnTheLeft(qr.householderQ().transpose());
    qt.head(s + 1).setZero();
    qt.applyOnTheLeft(qr.householderQ());
    return qt;
}

TStat<double> partial_t(const Study& study, Index j, std::span<const Index> cond,
                        const PartialOptions& options) {
    if (j < 0 || j >= study.p()) throw InputError("partial_t: feature index out of range");
    if (std::find(cond.begin(), cond.end(), j) != cond.end())
        throw InputError("partial_t: feature " + std::to_string(j) +
                         " is part of its own conditioning set");
    const auto s = static_cast<Index>(cond.size());
    if (s > study.n() - 3)
        throw InputError("partial_t: conditioning set too large for study '" + study.id + "'");

    const double n_eff = options.reduced_sample_size
                             ? static_cast<double>(study.n() - s - 1)
                             : 0.0;
    // Projection on the intercept alone is the centering the statistic
    // already performs, so order 0 uses the raw columns.
    if (cond.empty()) return self_normalized_t(study.x.col(j), study.y, n_eff, j);

    const Eigen::VectorXd xj = study.x.col(j);
    const Eigen::VectorXd rx = residualize(study.x, cond, xj);
    const Eigen::VectorXd ry = residualize(study.x, cond, study.y);
    if (rx.norm() <= kResidualFloor * centered_norm(xj))
        throw DegenerateColumnError(j, "degenerate column (feature " + std::to_string(j) +
                                           "): explained by conditioning set " +
                                           describe_set(cond));
    if (ry.norm() <= kResidualFloor * centered_norm(study.y))
        throw DegenerateColumnError(j, "degenerate response in study '" + study.id +
                                           "': explained by conditioning set " +
                                           describe_set(cond));
    return self_normalized_t(rx, ry, n_eff, j);
}

MultiPcState multi_pc_run(const MultiStudy& data, const MultiPcConfig& config) {
    data.validate();
    config.screening.validate();
    if (config.max_order < 1) throw InputError("multi-PC: max_order must be >= 1");
    if (config.budget < 1) throw InputError("multi-PC: budget must be >= 1");

    MultiPcState state;
    state.stage1 = tsa_sis(data, config.screening);
    state.active_sets.push_back(state.stage1.kept);
    state.tests_per_stage.push_back(0);
    state.stage = 1;

    const double z = config.screening.step1_threshold();
    const auto K = data.K();
    const auto cutoffs = chi2_cutoffs(static_cast<int>(K), config.screening.alpha2);

    auto stop_reason = [&](const IndexList& current, const IndexList* previous,
                           int m) -> std::optional<StopReason> {
        if (static_cast<Index>(current.size()) <= m) return StopReason::reached_mreach;
        if (previous && *previous == current) return StopReason::fixpoint;
        if (m >= config.max_order) return StopReason::max_order;
        return std::nullopt;
    };

    if (auto r = stop_reason(state.active_sets.back(), nullptr, 1)) {
        state.stopped_reason = *r;
        return state;
    }

    for (int m = 2;; ++m) {
        const IndexList prev = state.active_sets.back();
        const auto a = static_cast<std::int64_t>(prev.size());
        const std::int64_t order = m - 1;
        const std::int64_t per_feature = binomial_saturating(a - 1, order);
        if (per_feature > config.budget / std::max<std::int64_t>(a, 1))
            throw BudgetExceededError("multi-PC stage " + std::to_string(m) + ": " +
                                      std::to_string(a) + " features x " +
                                      std::to_string(per_feature) +
                                      " conditioning sets exceeds budget " +
                                      std::to_string(config.budget));
        if (order > data.min_n() - 3)
            throw InputError("multi-PC stage " + std::to_string(m) +
                             ": conditioning sets too large for the smallest study");

        std::vector<char> keep(prev.size(), 1);
        std::vector<std::optional<DropWitness>> witness(prev.size());
        std::vector<std::int64_t> tests(prev.size(), 0);

        parallel_for(prev.size(), [&](std::size_t idx) {
            const Index j = prev[idx];
            IndexList others;
            others.reserve(prev.size() - 1);
            for (Index q : prev)
                if (q != j) others.push_back(q);

            std::vector<std::size_t> pos(static_cast<std::size_t>(order));
            for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
            IndexList cond(pos.size());
            Eigen::VectorXd t(K);
            do {
                for (std::size_t i = 0; i < pos.size(); ++i) cond[i] = others[pos[i]];
                for (Index k = 0; k < K; ++k)
                    t(k) = partial_t(data.studies[static_cast<std::size_t>(k)], j, cond,
                                     config.partial)
                               .value;
                ++tests[idx];
                auto rec = two_step_test(j, t, z, cutoffs);
                if (!rec.kept) {
                    // the keep rule is a conjunction over S: first failure decides
                    keep[idx] = 0;
                    witness[idx] = DropWitness{j, m, cond, std::move(rec)};
                    return;
                }
            } while (next_combination(pos, others.size()));
        });

        IndexList next;
        std::int64_t total = 0;
        for (std::size_t i = 0; i < prev.size(); ++i) {
            total += tests[i];
            if (keep[i])
                next.push_back(prev[i]);
            else
                state.drops.push_back(std::move(*witness[i]));
        }
        state.active_sets.push_back(next);
        state.tests_per_stage.push_back(total);
        state.stage = m;
        if (auto r = stop_reason(state.active_sets.back(), &prev, m)) {
            state.stopped_reason = *r;
            return state;
        }
    }
}

}  // namespace multiscreen
