#include "clclsa/mask.hpp"

#include "clclsa/errors.hpp"

#include <string>

namespace clclsa {

ObservationMask::ObservationMask(std::size_t subjects, std::size_t views, bool observed)
    : subjects_(subjects), views_(views), bits_(subjects * views, observed ? 1 : 0) {}

void ObservationMask::set(std::size_t subject, std::size_t view, bool observed) {
    if (subject >= subjects_ || view >= views_) {
        throw ShapeError("ObservationMask::set: (" + std::to_string(subject) + ", " +
                         std::to_string(view) + ") out of range");
    }
    bits_[subject * views_ + view] = observed ? 1 : 0;
}

std::size_t ObservationMask::observed_count(std::size_t subject) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < views_; ++i) n += bits_[subject * views_ + i];
    return n;
}

bool ObservationMask::all_complete() const { return incomplete_count() == 0; }

std::size_t ObservationMask::incomplete_count() const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < subjects_; ++j) n += complete(j) ? 0 : 1;
    return n;
}

std::vector<std::size_t> ObservationMask::observed_subjects(std::size_t view) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < subjects_; ++j)
        if (observed(j, view)) out.push_back(j);
    return out;
}

std::vector<std::size_t> ObservationMask::jointly_observed(std::size_t view_a,
                                                           std::size_t view_b) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < subjects_; ++j)
        if (observed(j, view_a) && observed(j, view_b)) out.push_back(j);
    return out;
}

ObservationMask ObservationMask::select_rows(const std::vector<std::size_t>& rows) const {
    ObservationMask out(rows.size(), views_, false);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t i = 0; i < views_; ++i) out.set(r, i, observed(rows.at(r), i));
    return out;
}

ObservationMask ObservationMask::select_views(const std::vector<std::size_t>& views) const {
    ObservationMask out(subjects_, views.size(), false);
    for (std::size_t j = 0; j < subjects_; ++j)
        for (std::size_t v = 0; v < views.size(); ++v) out.set(j, v, observed(j, views.at(v)));
    return out;
}

} // namespace clclsa
