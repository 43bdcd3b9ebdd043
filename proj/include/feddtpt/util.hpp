#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace feddtpt {

// FNV-1a, used wherever a stable cross-run hash is needed (seed derivation,
// hash-fallback embeddings). std::hash is not guaranteed stable, this is.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= kFnvPrime;
    }
    return h;
}

// Combines an arbitrary mix of integers and strings into one seed.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) {
    std::uint64_t h = fnv1a(base);
    ((h = fnv1a(parts, h)), ...);
    return h;
}

// Sampling helpers built directly on mt19937_64 output. The engine's bit
// stream is pinned by the standard while <random> distributions and
// std::shuffle are not, so these keep seeded results identical across
// toolchains.
namespace rng {

// Uniform double in [0, 1).
double u01(std::mt19937_64& g);

// Uniform integer in [0, n), unbiased via rejection. n must be ≥ 1.
std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n);

// Standard normal (Box-Muller, uncached).
double normal(std::mt19937_64& g);

// Gamma(shape, scale 1) via Marsaglia-Tsang squeeze. shape must be > 0.
double gamma(std::mt19937_64& g, double shape);

// Fisher-Yates using uniform_index.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_index(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace rng

std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string lowercase(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Whole file as a string. Throws IoError when the file cannot be opened.
std::string read_file(const std::string& path);

// Writes via a temp file in the same directory followed by a rename, so
// partially written outputs are never observed.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace feddtpt
