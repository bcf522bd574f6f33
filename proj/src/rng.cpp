#include "clclsa/rng.hpp"

#include "clclsa/errors.hpp"

#include <cmath>
#include <numbers>

namespace clclsa {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view label)
    : seed_(seed), label_(label), key_(splitmix64(seed ^ splitmix64(fnv1a64(label)))) {}

std::uint64_t RngStream::next_u64() {
    // Two rounds so that neighbouring counters decorrelate fully.
    return splitmix64(splitmix64(key_ + 0xd1b54a32d192ed03ULL * ++counter_) ^ key_);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::below(std::size_t n) {
    if (n == 0) throw InvalidArgument("RngStream::below: empty range");
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % bound);
}

RngStream RngStream::derive(std::string_view suffix) const {
    std::string label = label_;
    label += '/';
    label += suffix;
    return RngStream(seed_, label);
}

} // namespace clclsa
