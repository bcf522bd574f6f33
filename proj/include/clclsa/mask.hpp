#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace clclsa {

/// N×M observation mask: true means view i of subject j was measured.
class ObservationMask {
public:
    ObservationMask() = default;
    /// All-observed mask.
    ObservationMask(std::size_t subjects, std::size_t views, bool observed = true);

    std::size_t subjects() const noexcept { return subjects_; }
    std::size_t views() const noexcept { return views_; }

    bool observed(std::size_t subject, std::size_t view) const {
        return bits_[subject * views_ + view] != 0;
    }
    void set(std::size_t subject, std::size_t view, bool observed);

    std::size_t observed_count(std::size_t subject) const;
    bool complete(std::size_t subject) const { return observed_count(subject) == views_; }
    bool all_complete() const;
    /// Subjects missing at least one view (N_ic).
    std::size_t incomplete_count() const;

    /// Subjects with view i observed, ascending.
    std::vector<std::size_t> observed_subjects(std::size_t view) const;
    /// Subjects with both views observed, ascending.
    std::vector<std::size_t> jointly_observed(std::size_t view_a, std::size_t view_b) const;

    ObservationMask select_rows(const std::vector<std::size_t>& rows) const;
    ObservationMask select_views(const std::vector<std::size_t>& views) const;

    friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

private:
    std::size_t subjects_ = 0;
    std::size_t views_ = 0;
    std::vector<std::uint8_t> bits_;
};

} // namespace clclsa
