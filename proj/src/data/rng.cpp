#include "ssmdg/data/rng.hpp"

namespace ssmdg::data {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_tag(std::string_view tag) noexcept {
    // FNV-1a
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed, std::string_view tag, std::uint64_t id, std::uint64_t sub) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ hash_tag(tag));
    key = splitmix64(key ^ id);
    key = splitmix64(key ^ (sub * 0xD1B54A32D192ED03ULL));
    engine_.seed(key);
}

double Rng::normal(double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
}

double Rng::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
}

std::size_t Rng::index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

}  // namespace ssmdg::data
