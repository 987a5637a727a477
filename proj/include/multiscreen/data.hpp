#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace multiscreen {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

/// One study: an n x p design and a length-n response.
struct Study {
    std::string id;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;

    Index n() const noexcept { return x.rows(); }
    Index p() const noexcept { return x.cols(); }
};

/// K studies over a shared, identically ordered feature list. Sample sizes
/// may differ between studies.
struct MultiStudy {
    std::vector<Study> studies;
    std::vector<std::string> feature_names;

    Index K() const noexcept { return static_cast<Index>(studies.size()); }
    Index p() const noexcept { return static_cast<Index>(feature_names.size()); }
    Index min_n() const noexcept;
    Index max_n() const noexcept;
    Index total_n() const noexcept;

    /// Throws InputError when any invariant is violated.
    void validate() const;
};

/// Default feature labels "x1", ..., "xp".
std::vector<std::string> default_feature_names(Index p);

/// Builds and validates a MultiStudy; feature names default to x1..xp.
MultiStudy make_multistudy(std::vector<Study> studies, std::vector<std::string> names = {});

}  // namespace multiscreen
