#pragma once

#include "multiscreen/data.hpp"

#include <random>
#include <vector>

namespace multiscreen::testing {

// Gaussian designs with a few signal features; sample sizes vary per study.
inline MultiStudy random_multistudy(std::uint64_t seed, Index K, Index n, Index p,
                                    double signal = 0.3, bool vary_n = true) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::vector<Study> studies;
    for (Index k = 0; k < K; ++k) {
        const Index nk = vary_n ? n + static_cast<Index>(gen() % 7) : n;
        Study s;
        s.x.resize(nk, p);
        s.y.resize(nk);
        for (Index i = 0; i < nk; ++i) {
            double prev = nd(gen);
            for (Index j = 0; j < p; ++j) {
                s.x(i, j) = j == 0 ? prev : 0.3 * s.x(i, j - 1) + nd(gen);
            }
            double mean = 0.0;
            for (Index j = 0; j < p; j += 3) mean += signal * s.x(i, j) * ((j / 3) % 2 ? -1.0 : 1.0);
            s.y(i) = mean + nd(gen);
        }
        studies.push_back(std::move(s));
    }
    return make_multistudy(std::move(studies));
}

}  // namespace multiscreen::testing
