#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ssmdg::data {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t hash_tag(std::string_view tag) noexcept;

/// Random stream keyed by (seed, purpose tag, id, sub-id). Streams with
/// distinct keys are independent, so draws do not depend on the order in
/// which samples, domains or steps are generated.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t id = 0, std::uint64_t sub = 0);

    double normal(double mean = 0.0, double stddev = 1.0);
    double uniform(double lo = 0.0, double hi = 1.0);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    bool bernoulli(double p);
    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace ssmdg::data
