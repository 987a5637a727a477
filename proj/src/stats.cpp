#include "multiscreen/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace multiscreen {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_probability(double p, const char* who) {
    if (!(p > 0.0 && p < 1.0))
        throw InputError(std::string(who) + ": probability must lie strictly inside (0, 1), got " +
                         std::to_string(p));
}

void require_df(int df, const char* who) {
    if (df < 1)
        throw InputError(std::string(who) + ": degrees of freedom must be >= 1, got " +
                         std::to_string(df));
}

// Wichura's AS 241 (PPND16), accurate to about 1 part in 1e16.
double as241(double p) {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                     67265.770927008700853) * r + 45921.953931549871457) * r +
                   13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852854561 + 28729.085735721942674) * r +
                     39307.89580009271061) * r + 21213.794301586595867) * r +
                   5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r +
                    .24178072517745061177) * r + 1.27045825245236838258) * r +
                  3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                    .0151986665636164571966) * r + .14810397642748007459) * r +
                  .68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                    .0012426609473880784386) * r + .026532189526576123093) * r +
                  .29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                    1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                  .0148753612908506148525) * r + .13692988092273580531) * r +
                .59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -val : val;
}

// log Gamma(df / 2), exact recursion from Gamma(1) = 1 or Gamma(1/2) = sqrt(pi).
double log_gamma_half(int df) {
    CompensatedSum<double> s;
    if (df % 2 == 0) {
        for (int k = 1; k < df / 2; ++k) s.add(std::log(double(k)));
    } else {
        s.add(0.5 * std::log(std::numbers::pi));
        for (int k = 1; 2 * k < df; ++k) s.add(std::log(k - 0.5));
    }
    return s.value();
}

double log_gamma_any(double a) {
    // chi-square callers only ever pass half-integers
    const double twice = 2.0 * a;
    if (twice == std::floor(twice) && twice >= 1.0 && twice < 1e6)
        return log_gamma_half(static_cast<int>(twice));
    int sign = 0;
    return ::lgamma_r(a, &sign);
}

double gamma_p_impl(double a, double x, double log_gamma_a) {
    if (x <= 0.0) return 0.0;
    const double log_prefix = a * std::log(x) - x - log_gamma_a;
    if (x < a + 1.0) {
        // series: P = x^a e^-x / Gamma(a+1) * sum x^n / ((a+1)...(a+n))
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < 100000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-17) break;
        }
        return std::min(1.0, sum * std::exp(log_prefix));
    }
    // continued fraction for Q (modified Lentz)
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 100000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    const double q = std::exp(log_prefix) * h;
    return std::max(0.0, 1.0 - q);
}

double chi2_pdf(double x, int df, double log_gamma_a) {
    if (x <= 0.0) return df == 2 ? 0.5 : (df == 1 ? std::numeric_limits<double>::infinity() : 0.0);
    const double a = 0.5 * df;
    return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::numbers::ln2 - log_gamma_a);
}

}  // namespace

double normal_cdf(double z) {
    if (!std::isfinite(z)) throw InputError("normal_cdf: input must be finite");
    return 0.5 * std::erfc(-z * kInvSqrt2);
}

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double normal_quantile(double p) {
    require_probability(p, "normal_quantile");
    // Refine in the lower tail, where Phi carries full relative precision.
    // 1 - p is exact for p >= 0.5.
    const bool upper = p > 0.5;
    const double lower_p = upper ? 1.0 - p : p;
    double x = as241(lower_p);
    const double dens = normal_pdf(x);
    if (dens > 0.0) x -= (0.5 * std::erfc(-x * kInvSqrt2) - lower_p) / dens;
    return upper ? -x : x;
}

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InputError("regularized_gamma_p: a must be > 0");
    if (!(x >= 0.0)) throw InputError("regularized_gamma_p: x must be >= 0");
    if (std::isinf(x)) return 1.0;
    return gamma_p_impl(a, x, log_gamma_any(a));
}

double chi2_cdf(double x, int df) {
    require_df(df, "chi2_cdf");
    if (!(x >= 0.0)) throw InputError("chi2_cdf: x must be >= 0");
    if (std::isinf(x)) return 1.0;
    return gamma_p_impl(0.5 * df, 0.5 * x, log_gamma_half(df));
}

double chi2_quantile(double p, int df) {
    require_probability(p, "chi2_quantile");
    require_df(df, "chi2_quantile");
    const double a = 0.5 * df;
    const double lga = log_gamma_half(df);

    // Wilson-Hilferty start; for small p fall back to the leading term of the
    // lower-tail series P ~ (x/2)^a / Gamma(a+1).
    const double z = normal_quantile(p);
    const double h = 2.0 / (9.0 * df);
    double x = df * std::pow(1.0 - h + z * std::sqrt(h), 3);
    if (!(x > 0.0) || p < 0.05) {
        const double small = 2.0 * std::exp((std::log(p) + lga + std::log(a)) / a);
        if (!(x > 0.0) || small < x) x = small;
    }

    // Bracket the root.
    double lo = 0.0;
    double hi = std::max(x, 1.0);
    while (gamma_p_impl(a, 0.5 * hi, lga) < p) {
        lo = hi;
        hi *= 2.0;
    }
    if (x <= lo || x >= hi) x = 0.5 * (lo + hi);

    for (int it = 0; it < 300; ++it) {
        const double f = gamma_p_impl(a, 0.5 * x, lga) - p;
        if (f == 0.0) return x;
        if (f < 0.0)
            lo = x;
        else
            hi = x;
        const double dens = chi2_pdf(x, df, lga);
        double next = (dens > 0.0 && std::isfinite(dens)) ? x - f / dens : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * x) return next;
        x = next;
    }
    return x;
}

double theoretical_alpha1(long long p, double L, double b) {
    if (p < 2) throw InputError("theoretical_alpha1: p must be >= 2");
    if (!(L > 0.0)) throw InputError("theoretical_alpha1: L must be > 0");
    if (!(b >= 0.0)) throw InputError("theoretical_alpha1: b must be >= 0");
    const double gamma = 2.0 * (L + 1.0 + b);
    const double z = gamma * std::sqrt(std::log(static_cast<double>(p)));
    // 2 {1 - Phi(z)} without cancellation
    return std::erfc(z * kInvSqrt2);
}

}  // namespace multiscreen
