#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steerkit {

using TokenId = int32_t;
using TokenSequence = std::vector<TokenId>;

enum class Pooling { last_token, mean_tokens };

inline const char* to_string(Pooling p) {
    return p == Pooling::last_token ? "last_token" : "mean_tokens";
}

inline Pooling pooling_from_string(std::string_view s) {
    if (s == "last_token") return Pooling::last_token;
    if (s == "mean_tokens") return Pooling::mean_tokens;
    throw std::invalid_argument("unknown pooling: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Errors. Each named failure mode from the module contracts gets its own type
// so callers and tests can catch them precisely.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what) : Error("DimensionMismatch: " + what) {}
};
struct LayerOutOfRange : Error {
    explicit LayerOutOfRange(const std::string& what) : Error("LayerOutOfRange: " + what) {}
};
struct EmptySequence : Error {
    EmptySequence() : Error("EmptySequence: token sequence must be nonempty") {}
};
struct ContextOverflow : Error {
    explicit ContextOverflow(const std::string& what) : Error("ContextOverflow: " + what) {}
};
struct ZeroVector : Error {
    explicit ZeroVector(const std::string& what) : Error("ZeroVector: " + what) {}
};
struct DegenerateActivation : Error {
    DegenerateActivation() : Error("DegenerateActivation: activation norm below 1e-12") {}
};
struct NumericalFailure : Error {
    explicit NumericalFailure(const std::string& what) : Error("NumericalFailure: " + what) {}
};
struct Divergence : Error {
    explicit Divergence(const std::string& what) : Error("Divergence: " + what) {}
};
struct ParseFailure : Error {
    explicit ParseFailure(const std::string& what) : Error("ParseFailure: " + what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("ConfigError: " + what) {}
};
struct IoError : Error {
    explicit IoError(const std::string& what) : Error("IoError: " + what) {}
};

// ---------------------------------------------------------------------------
// Seeding. Every pipeline stage derives its own stream from the master seed
// and a stage label, so stages are independently reproducible.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Labeled sub-seed: seed for stage `label` under master seed `master`.
inline uint64_t derive_seed(uint64_t master, std::string_view label) {
    return splitmix64(master ^ fnv1a64(label));
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

} // namespace steerkit
