#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clclsa {

/// Counter-based random stream keyed by (seed, label). The sequence depends
/// only on integer arithmetic, so it is identical on every platform.
/// Distinct labels give statistically independent streams.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view label);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal (Box-Muller, one value per call).
    double normal();
    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);

    /// A fresh stream whose label is this label + "/" + suffix.
    RngStream derive(std::string_view suffix) const;

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& label() const noexcept { return label_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::string label_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// 64-bit FNV-1a. Used for stream keys and file digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 14695981039346656037ULL);

} // namespace clclsa
