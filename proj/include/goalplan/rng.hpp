#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "goalplan/common.hpp"

namespace goalplan {

// All randomness in the pipeline flows from one root seed through named
// sub-streams, so that e.g. the env stream is unaffected by how many draws
// the planner consumed. Distributions are hand-rolled on top of mt19937_64
// so results do not depend on the standard library's distribution choices.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

    // Independent generator derived from this stream's seed and a label.
    // Derivation uses only the seed, never the draw position.
    Rng stream(std::string_view name) const { return Rng(mix(seed_ ^ fnv1a(name))); }
    Rng stream(std::uint64_t index) const { return Rng(mix(seed_ ^ mix(index + 0x51ed2701))); }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Lemire reduction; bias-free enough at 64 bits.
    std::int64_t uniform_int(std::int64_t n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        return static_cast<std::int64_t>(
            (static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64);
    }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    Mat normal_mat(Eigen::Index rows, Eigen::Index cols) {
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
        return m;
    }

    Vec normal_vec(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
            std::swap(items[i - 1], items[j]);
        }
    }

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return h;
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace goalplan
