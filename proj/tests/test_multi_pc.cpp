#include "multiscreen/multi_pc.hpp"
#include "multiscreen/parallel.hpp"
#include "multiscreen/screening.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <random>

using namespace multiscreen;

namespace {

bool subset_of(const IndexList& a, const IndexList& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Every size-r subset of `pool`, in reverse lexicographic order.
std::vector<IndexList> all_subsets_reversed(const IndexList& pool, std::size_t r) {
    std::vector<IndexList> out;
    IndexList cur;
    std::function<void(std::size_t)> rec = [&](std::size_t start) {
        if (cur.size() == r) {
            out.push_back(cur);
            return;
        }
        for (std::size_t i = start; i < pool.size(); ++i) {
            cur.push_back(pool[i]);
            rec(i + 1);
            cur.pop_back();
        }
    };
    rec(0);
    std::reverse(out.begin(), out.end());
    return out;
}

// Reference Multi-PC: evaluates every conditioning set, no early exit.
std::vector<IndexList> reference_multi_pc(const MultiStudy& data, const ScreeningConfig& cfg,
                                          int max_order) {
    std::vector<IndexList> sets{tsa_sis(data, cfg).kept};
    const auto cut = chi2_cutoffs(static_cast<int>(data.K()), cfg.alpha2);
    const double z = cfg.step1_threshold();
    for (int m = 2; m <= max_order; ++m) {
        const auto prev = sets.back();
        if (static_cast<int>(prev.size()) <= m - 1) break;
        IndexList next;
        for (Index j : prev) {
            IndexList others;
            for (Index q : prev)
                if (q != j) others.push_back(q);
            bool keep = true;
            for (const auto& S : all_subsets_reversed(others, static_cast<std::size_t>(m - 1))) {
                Eigen::VectorXd t(data.K());
                for (Index k = 0; k < data.K(); ++k)
                    t(k) = partial_t(data.studies[static_cast<std::size_t>(k)], j, S).value;
                keep = keep && two_step_test(j, t, z, cut).kept;
            }
            if (keep) next.push_back(j);
        }
        sets.push_back(next);
        if (static_cast<int>(next.size()) <= m || next == prev) break;
    }
    return sets;
}

}  // namespace

TEST_CASE("residualize with an empty set centers the target") {
    Eigen::MatrixXd x(6, 2);
    x.setRandom();
    Eigen::VectorXd t(6);
    t << 1, 4, 2, 8, 5, 7;
    const auto r = residualize(x, {}, t);
    const Eigen::VectorXd expect = t.array() - t.mean();
    CHECK((r - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("residualize of a target in the span is zero") {
    const auto data = testing::random_multistudy(5, 1, 30, 6);
    const auto& x = data.studies[0].x;
    const Eigen::VectorXd t = (2.0 * x.col(1) - 3.5 * x.col(4)).array() + 1.25;
    const IndexList S{1, 4};
    const auto r = residualize(x, S, t);
    CHECK(r.norm() <= 1e-10 * t.norm());
}

TEST_CASE("residualize matches hand-solved normal equations") {
    // n = 5, S = {0}: [n sx; sx sxx] [a; b] = [st; sxt] by Cramer's rule
    Eigen::MatrixXd x(5, 2);
    x << 1.0, 9.0,
         2.0, 7.0,
         4.0, 3.0,
         5.0, 1.0,
         8.0, 6.0;
    Eigen::VectorXd t(5);
    t << 2.0, 3.5, 4.0, 7.5, 9.0;
    const double n = 5, sx = 20, sxx = 110, st = 26, sxt = 1 * 2.0 + 2 * 3.5 + 4 * 4.0 + 5 * 7.5 + 8 * 9.0;
    const double det = n * sxx - sx * sx;
    const double a = (st * sxx - sx * sxt) / det;
    const double b = (n * sxt - sx * st) / det;
    const IndexList S{0};
    const auto r = residualize(x, S, t);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(r(i) - (t(i) - a - b * x(i, 0))) <= 1e-10);
}

TEST_CASE("residuals are orthogonal to the intercept and the conditioning columns") {
    std::mt19937_64 gen(9);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto data = testing::random_multistudy(seed, 1, 40, 10);
        const auto& x = data.studies[0].x;
        IndexList S;
        for (Index j = 0; j < 10; ++j)
            if (gen() % 3 == 0) S.push_back(j);
        const auto r = residualize(x, S, data.studies[0].y);
        const double scale = data.studies[0].y.norm();
        CHECK(std::abs(r.sum()) <= 1e-8 * scale * std::sqrt(40.0));
        for (Index j : S) CHECK(std::abs(r.dot(x.col(j))) <= 1e-8 * scale * x.col(j).norm());
    }
}

TEST_CASE("residualize rejects singular and oversized sets") {
    const auto data = testing::random_multistudy(6, 1, 20, 5);
    Eigen::MatrixXd x = data.studies[0].x;
    x.col(3) = 2.0 * x.col(1);
    const IndexList S{1, 3};
    CHECK_THROWS_AS(residualize(x, S, data.studies[0].y), SingularDesignError);
    Eigen::MatrixXd c = data.studies[0].x;
    c.col(2).setConstant(4.0);
    const IndexList S2{2};
    CHECK_THROWS_AS(residualize(c, S2, data.studies[0].y), SingularDesignError);
    Eigen::MatrixXd small(4, 3);
    small.setRandom();
    const IndexList S3{0, 1};
    CHECK_THROWS_AS(residualize(small, S3, Eigen::VectorXd::Ones(4)), InputError);
}

TEST_CASE("partial_t with an empty set equals the marginal statistic bit for bit") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = testing::random_multistudy(seed, 3, 40, 12);
        const auto marg = marginal_stats(data).t;
        for (Index k = 0; k < data.K(); ++k)
            for (Index j = 0; j < data.p(); ++j)
                CHECK(partial_t(data.studies[static_cast<std::size_t>(k)], j, {}).value == marg(j, k));
    }
}

TEST_CASE("partial_t with y explained by the conditioning set is degenerate") {
    auto data = testing::random_multistudy(12, 1, 30, 5);
    auto& s = data.studies[0];
    s.y = 0.5 * s.x.col(0) - 1.5 * s.x.col(2);
    const IndexList S{0, 2};
    for (Index j : {1, 3, 4}) CHECK_THROWS_AS(partial_t(s, j, S), DegenerateColumnError);
    CHECK_THROWS_AS(partial_t(s, 0, S), InputError);
}

TEST_CASE("partial_t sign matches the population partial correlation") {
    // (x1, x2, x3) equicorrelated at 0.5; y = x1 - 0.8 x2 + 0.6 x3 + N(0, 0.5^2)
    Eigen::Matrix3d sx;
    sx << 1.0, 0.5, 0.5,
          0.5, 1.0, 0.5,
          0.5, 0.5, 1.0;
    const Eigen::Vector3d beta(1.0, -0.8, 0.6);
    Eigen::Matrix4d cov;
    cov.topLeftCorner<3, 3>() = sx;
    cov.block<3, 1>(0, 3) = sx * beta;
    cov.block<1, 3>(3, 0) = (sx * beta).transpose();
    cov(3, 3) = beta.dot(sx * beta) + 0.25;

    // population partial correlation of feature j and y given S, from the
    // inverse of the covariance restricted to {j, y} U S
    auto partial = [&](int j, const std::vector<int>& S) {
        std::vector<int> idx{j, 3};
        idx.insert(idx.end(), S.begin(), S.end());
        const int m = static_cast<int>(idx.size());
        Eigen::MatrixXd sub(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) sub(a, b) = cov(idx[a], idx[b]);
        const Eigen::MatrixXd prec = sub.inverse();
        return -prec(0, 1) / std::sqrt(prec(0, 0) * prec(1, 1));
    };

    const Eigen::LLT<Eigen::Matrix3d> llt(sx);
    const Eigen::Matrix3d l = llt.matrixL();
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> nd;
    int checked = 0, agreed = 0;
    for (int rep = 0; rep < 20; ++rep) {
        Study s;
        s.x.resize(50, 3);
        s.y.resize(50);
        for (int i = 0; i < 50; ++i) {
            const Eigen::Vector3d z(nd(gen), nd(gen), nd(gen));
            const Eigen::Vector3d xi = l * z;
            s.x.row(i) = xi.transpose();
            s.y(i) = beta.dot(xi) + 0.5 * nd(gen);
        }
        for (int j = 0; j < 3; ++j) {
            std::vector<std::vector<int>> sets{{}};
            for (int q = 0; q < 3; ++q)
                if (q != j) sets.push_back({q});
            std::vector<int> rest;
            for (int q = 0; q < 3; ++q)
                if (q != j) rest.push_back(q);
            sets.push_back(rest);
            for (const auto& S : sets) {
                const double truth = partial(j, S);
                if (std::abs(truth) < 0.4) continue;
                IndexList cond(S.begin(), S.end());
                const double t = partial_t(s, j, cond).value;
                ++checked;
                agreed += (t > 0) == (truth > 0);
            }
        }
    }
    CHECK(checked > 100);
    CHECK(agreed == checked);
}

TEST_CASE("reduced sample size option rescales the statistic") {
    const auto data = testing::random_multistudy(3, 1, 40, 6);
    const auto& s = data.studies[0];
    const IndexList S{1, 2};
    const double base = partial_t(s, 0, S).value;
    const double reduced = partial_t(s, 0, S, {true}).value;
    CHECK(std::abs(reduced - base * std::sqrt((s.n() - 3.0) / s.n())) <= 1e-12 * std::abs(base));
}

TEST_CASE("multi_pc_run with max_order 1 equals TSA-SIS") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = testing::random_multistudy(300 + seed, 3, 50, 20);
        MultiPcConfig cfg;
        cfg.screening = {0.01, 0.05, {}};
        cfg.max_order = 1;
        const auto st = multi_pc_run(data, cfg);
        CHECK(st.active_sets.size() == 1);
        CHECK(st.active_sets[0] == tsa_sis(data, cfg.screening).kept);
        CHECK(st.stage == 1);
    }
}

TEST_CASE("multi_pc_run stops after stage 1 when at most one feature survives") {
    auto data = testing::random_multistudy(41, 3, 60, 8, 0.0);
    MultiPcConfig cfg;
    cfg.screening = {0.5, 1e-8, {}};  // every noise feature drops at step 2
    const auto st = multi_pc_run(data, cfg);
    REQUIRE(st.active_sets[0].size() <= 1);
    CHECK(st.active_sets.size() == 1);
    CHECK(st.stopped_reason == StopReason::reached_mreach);
}

TEST_CASE("multi-PC sets are nested and match the exhaustive reference") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto data = testing::random_multistudy(700 + seed, 3, 45, 14, 0.45);
        MultiPcConfig cfg;
        cfg.screening = {0.05, 0.2, {}};
        cfg.max_order = 4;
        const auto st = multi_pc_run(data, cfg);
        for (std::size_t m = 1; m < st.active_sets.size(); ++m)
            CHECK(subset_of(st.active_sets[m], st.active_sets[m - 1]));
        CHECK(st.active_sets[0] == tsa_sis(data, cfg.screening).kept);
        const auto ref = reference_multi_pc(data, cfg.screening, cfg.max_order);
        CHECK(ref == st.active_sets);
        for (const auto& d : st.drops) {
            CHECK_FALSE(d.record.kept);
            CHECK(static_cast<int>(d.conditioning_set.size()) == d.stage - 1);
        }
    }
}

TEST_CASE("multi-PC stop reasons") {
    const auto data = testing::random_multistudy(808, 3, 60, 12, 0.6);
    MultiPcConfig cfg;
    cfg.screening = {0.01, 0.05, {}};
    cfg.max_order = 2;
    const auto st = multi_pc_run(data, cfg);
    CHECK(st.stage <= 2);
    if (st.stage == 2) {
        const auto& last = st.active_sets.back();
        if (last.size() <= 2)
            CHECK(st.stopped_reason == StopReason::reached_mreach);
        else if (last == st.active_sets[0])
            CHECK(st.stopped_reason == StopReason::fixpoint);
        else
            CHECK(st.stopped_reason == StopReason::max_order);
    }
}

TEST_CASE("multi-PC is thread-count independent") {
    const auto data = testing::random_multistudy(909, 4, 60, 30, 0.4);
    MultiPcConfig cfg;
    cfg.screening = {0.05, 0.2, {}};
    cfg.max_order = 3;
    set_thread_count(1);
    const auto a = multi_pc_run(data, cfg);
    set_thread_count(3);
    const auto b = multi_pc_run(data, cfg);
    set_thread_count(1);
    CHECK(a.active_sets == b.active_sets);
    CHECK(a.tests_per_stage == b.tests_per_stage);
}

TEST_CASE("multi-PC combinatorial budget") {
    const auto data = testing::random_multistudy(10, 3, 60, 30, 0.5);
    MultiPcConfig cfg;
    cfg.screening = {0.5, 0.9, {}};  // keep nearly everything at stage 1
    cfg.max_order = 3;
    cfg.budget = 10;
    CHECK_THROWS_AS(multi_pc_run(data, cfg), BudgetExceededError);
    CHECK(binomial_saturating(10, 3) == 120);
    CHECK(binomial_saturating(5, 7) == 0);
    CHECK(binomial_saturating(10000, 5000) == std::numeric_limits<std::int64_t>::max());
}
