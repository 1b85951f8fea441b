#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace rulehte {

/// Counter-based generator: output k of stream s under key K is
/// splitmix64(K + golden * (k + 1)) mixed with a hash of s. Every stream is
/// an independent, random-access sequence, and the bit pattern does not
/// depend on the platform or the standard library.
///
/// Streams used by the library:
///   0  terminal-node counts (boosting)
///   1  row subsampling (boosting)
///   2  cross-validation fold assignment
///   3+ simulation (covariates, assignment, noise)
class CounterRng {
public:
    using result_type = std::uint64_t;

    constexpr CounterRng(std::uint64_t key, std::uint64_t stream) noexcept
        : key_(key), stream_hash_(mix(stream + 0xD1B54A32D192ED03ULL)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        ++counter_;
        return mix((key_ + kGolden * counter_) ^ stream_hash_);
    }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Unbiased integer in [0, n) (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        auto m = static_cast<unsigned __int128>((*this)()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>((*this)()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Exponential with the given mean; mean 0 gives exactly 0.
    double exponential(double mean) noexcept {
        if (mean <= 0.0) return 0.0;
        return -mean * std::log1p(-uniform());
    }

    /// Standard normal by Box-Muller; the sine branch is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::span<T> values) noexcept {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    std::uint64_t key_;
    std::uint64_t stream_hash_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Derive a child key from a parent key and an index (replications, folds).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return CounterRng::mix(CounterRng::mix(parent ^ 0x6A09E667F3BCC909ULL) + index);
}

namespace stream {
inline constexpr std::uint64_t kTerminalCount = 0;
inline constexpr std::uint64_t kSubsample = 1;
inline constexpr std::uint64_t kFolds = 2;
inline constexpr std::uint64_t kCovariates = 3;
inline constexpr std::uint64_t kAssignment = 4;
inline constexpr std::uint64_t kNoise = 5;
}  // namespace stream

}  // namespace rulehte
