#pragma once

#include "multiscreen/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace multiscreen {

/// Normal and chi-square distribution functions used by the screeners.
/// All functions are pure and safe to call concurrently.
double normal_cdf(double z);
double normal_pdf(double z);
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

double chi2_cdf(double x, int df);
double chi2_quantile(double p, int df);

/// Two-sided significance level 2{1 - Phi(gamma sqrt(log p))} with
/// gamma = 2(L + 1 + b); the schedule under which the screening step is
/// consistent. Underflows to 0 for large p without raising.
double theoretical_alpha1(long long p, double L, double b);

/// Running sum with Neumaier-style compensation. Accumulation order is the
/// call order, so results are reproducible for a fixed input order.
template <typename Scalar>
class CompensatedSum {
public:
    void add(Scalar v) noexcept {
        const Scalar t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    Scalar value() const noexcept { return sum_ + comp_; }

private:
    Scalar sum_{0};
    Scalar comp_{0};
};

/// Self-normalized covariance statistic of one (feature, response) pair.
template <typename Scalar>
struct TStat {
    Scalar value{0};      ///< sqrt(n) * sigma_hat / sqrt(theta_hat)
    Scalar sigma_hat{0};  ///< sample covariance, 1/n normalized
    Scalar theta_hat{0};  ///< variance of centered cross-products, 1/n normalized
    Scalar pearson{0};    ///< sample correlation from the same centered sums
    Eigen::Index n{0};
};

/// Relative floor on theta_hat below which a pair is treated as degenerate.
inline constexpr double kDegeneracyRelFloor = 1e-12;
inline constexpr double kDegeneracyAbsFloor = 1e-300;

/// Self-normalized statistic
///
///   sigma = (1/n) sum (x_i - xbar)(y_i - ybar)
///   theta = (1/n) sum [(x_i - xbar)(y_i - ybar) - sigma]^2
///   T     = sqrt(n_eff) * sigma / sqrt(theta)
///
/// Every sum is two-pass and compensated, accumulated in index order.
/// `n_eff` overrides the sqrt(n) factor when positive (used for partial
/// statistics); `feature` is attached to the degeneracy error.
template <typename DerivedX, typename DerivedY>
TStat<typename DerivedX::Scalar> self_normalized_t(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedY>& y,
                                                   double n_eff = 0.0,
                                                   Eigen::Index feature = -1) {
    using Scalar = typename DerivedX::Scalar;
    static_assert(std::is_same_v<Scalar, typename DerivedY::Scalar>,
                  "x and y must share a scalar type");

    const Eigen::Index n = x.size();
    if (n != y.size())
        throw InputError("self_normalized_t: length mismatch (" + std::to_string(n) + " vs " +
                         std::to_string(y.size()) + ")");
    if (n < 3) throw InputError("self_normalized_t: need at least 3 observations");

    CompensatedSum<Scalar> sx, sy;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(x(i)) || !std::isfinite(y(i)))
            throw InputError("self_normalized_t: non-finite value at observation " +
                             std::to_string(i) +
                             (feature >= 0 ? " of feature " + std::to_string(feature) : ""));
        sx.add(x(i));
        sy.add(y(i));
    }
    const Scalar inv_n = Scalar(1) / Scalar(n);
    const Scalar xbar = sx.value() * inv_n;
    const Scalar ybar = sy.value() * inv_n;

    CompensatedSum<Scalar> sxy, sxx, syy;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar dx = x(i) - xbar;
        const Scalar dy = y(i) - ybar;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    const Scalar sigma = sxy.value() * inv_n;

    CompensatedSum<Scalar> sth;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar d = (x(i) - xbar) * (y(i) - ybar) - sigma;
        sth.add(d * d);
    }
    const Scalar theta = sth.value() * inv_n;

    const Scalar vx = sxx.value() * inv_n;
    const Scalar vy = syy.value() * inv_n;
    const Scalar floor = Scalar(kDegeneracyRelFloor) * vx * vy + Scalar(kDegeneracyAbsFloor);
    if (!(theta >= floor))
        throw DegenerateColumnError(
            feature, "degenerate column" +
                         (feature >= 0 ? " (feature " + std::to_string(feature) + ")"
                                       : std::string()) +
                         ": variance of cross-products below floor");

    TStat<Scalar> out;
    out.sigma_hat = sigma;
    out.theta_hat = theta;
    out.pearson = sigma / std::sqrt(vx * vy);
    out.n = n;
    const Scalar scale = n_eff > 0 ? Scalar(std::sqrt(n_eff)) : std::sqrt(Scalar(n));
    out.value = scale * sigma / std::sqrt(theta);
    return out;
}

}  // namespace multiscreen
