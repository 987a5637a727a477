#include "multiscreen/data.hpp"

#include "multiscreen/error.hpp"

#include <algorithm>
#include <set>

namespace multiscreen {

Index MultiStudy::min_n() const noexcept {
    Index out = 0;
    for (const auto& s : studies) out = out == 0 ? s.n() : std::min(out, s.n());
    return out;
}

Index MultiStudy::max_n() const noexcept {
    Index out = 0;
    for (const auto& s : studies) out = std::max(out, s.n());
    return out;
}

Index MultiStudy::total_n() const noexcept {
    Index out = 0;
    for (const auto& s : studies) out += s.n();
    return out;
}

void MultiStudy::validate() const {
    if (studies.empty()) throw InputError("multi-study data needs at least one study");
    if (feature_names.empty()) throw InputError("multi-study data needs at least one feature");
    const Index p = this->p();
    std::set<std::string> ids;
    for (const auto& s : studies) {
        if (!ids.insert(s.id).second) throw InputError("duplicate study id '" + s.id + "'");
        if (s.x.cols() != p)
            throw InputError("study '" + s.id + "' has " + std::to_string(s.x.cols()) +
                             " feature columns, expected " + std::to_string(p));
        if (s.x.rows() != s.y.size())
            throw InputError("study '" + s.id + "': design has " + std::to_string(s.x.rows()) +
                             " rows but response has " + std::to_string(s.y.size()));
        if (s.n() < 3) throw InputError("study '" + s.id + "' has fewer than 3 observations");
        if (!s.x.allFinite() || !s.y.allFinite())
            throw InputError("study '" + s.id + "' contains non-finite values");
    }
}

std::vector<std::string> default_feature_names(Index p) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

MultiStudy make_multistudy(std::vector<Study> studies, std::vector<std::string> names) {
    MultiStudy out;
    if (names.empty() && !studies.empty()) names = default_feature_names(studies.front().p());
    for (std::size_t k = 0; k < studies.size(); ++k)
        if (studies[k].id.empty()) studies[k].id = "study" + std::to_string(k + 1);
    out.studies = std::move(studies);
    out.feature_names = std::move(names);
    out.validate();
    return out;
}

}  // namespace multiscreen
