#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stance {

/// Base error for runtime failures inside the pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when user-supplied input (files, configs, flags) fails validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

enum class Stance : int { Favor = 0, Against = 1, None = 2 };

std::string_view stance_name(Stance s);

// 64-bit finalizer from splitmix64; also used as a counter-based generator.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded FNV-1a over bytes, finalized with mix64.
std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed);

/// Derive an independent stream seed from a base seed and a list of tags.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Deterministic PRNG (splitmix64 stream). All distributions are implemented
/// here so results do not depend on the standard library's distribution code.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n);

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Index drawn proportionally to non-negative weights (at least one > 0).
    std::size_t categorical(const std::vector<double>& weights);

private:
    std::uint64_t state_;
};

std::vector<std::size_t> iota_indices(std::size_t n);

/// Hex rendering of a 64-bit value, zero padded.
std::string hex64(std::uint64_t v);

}  // namespace stance
