#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "goalplan/encoder.hpp"

using namespace goalplan;
using namespace goalplan::encoder;

namespace {

std::vector<envsim::Trajectory> small_dataset() {
    std::vector<envsim::Primitive> prims(envsim::kAllPrimitives.begin(), envsim::kAllPrimitives.end());
    return envsim::generate_offline_dataset(60, 13, prims);
}

}  // namespace

TEST_CASE("a state at the mean encodes to zero") {
    auto ds = small_dataset();
    auto stats = fit_normalizer(ds);
    Vec h = encode_flat(stats, stats.mean);
    CHECK(h.norm() < 1e-12);
}

TEST_CASE("one scale unit in a raw dimension is one latent unit") {
    auto stats = fit_normalizer(small_dataset());
    Vec a = stats.mean;
    Vec b = stats.mean;
    b(3) += stats.scale(3);
    Vec diff = encode_flat(stats, b) - encode_flat(stats, a);
    CHECK(diff(3) == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 8; ++i)
        if (i != 3) CHECK(std::abs(diff(i)) < 1e-12);
}

TEST_CASE("re-encoded dataset has mean 0 and std 1 on non-floored dims") {
    auto ds = small_dataset();
    auto stats = fit_normalizer(ds);
    Vec sum = Vec::Zero(8), sq = Vec::Zero(8);
    long n = 0;
    for (const auto& t : ds)
        for (const auto& s : t.states) {
            Vec h = encode(stats, s);
            sum += h;
            sq += h.cwiseProduct(h);
            ++n;
        }
    Vec mean = sum / n;
    Vec var = sq / n - mean.cwiseProduct(mean);
    for (int i = 0; i < 8; ++i) {
        CHECK(std::abs(mean(i)) < 1e-6);
        if (stats.scale(i) > 1e-3) CHECK(std::abs(std::sqrt(var(i)) - 1.0) < 1e-6);
    }
}

TEST_CASE("decode inverts encode to machine precision") {
    auto stats = fit_normalizer(small_dataset());
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        Vec raw(8);
        for (int d = 0; d < 8; ++d) raw(d) = rng.uniform();
        Vec back = decode_flat(stats, encode_flat(stats, raw));
        CHECK((back - raw).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("encoding is injective (affine with positive scales)") {
    auto stats = fit_normalizer(small_dataset());
    for (int i = 0; i < 8; ++i) CHECK(stats.scale(i) >= 1e-3);
}

TEST_CASE("reward is 0 inside the ball, -1 outside, strict at the boundary") {
    Vec g = Vec::Zero(8);
    Vec h = Vec::Zero(8);
    CHECK(reward(h, g, 2.0) == 0.0);
    h(0) = 2.5;
    CHECK(reward(h, g, 2.0) == -1.0);
    h(0) = 1.9;
    CHECK(reward(h, g, 2.0) == 0.0);
    h(0) = 2.0;  // strict inequality
    CHECK(reward(h, g, 2.0) == -1.0);
}

TEST_CASE("reward range and monotonicity in eps") {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        Vec h = rng.normal_vec(8), g = rng.normal_vec(8);
        double r = reward(h, g, 0.5);
        CHECK((r == 0.0 || r == -1.0));
        double r_wide = reward(h, g, 1.5);
        CHECK(r_wide >= r);  // larger ball never hurts
    }
}

TEST_CASE("unfitted stats raise a state error") {
    NormalizerStats st;
    CHECK_THROWS_AS(encode_flat(st, Vec::Zero(8)), StateError);
}

TEST_CASE("stats json roundtrip") {
    auto stats = fit_normalizer(small_dataset());
    std::string path = (std::filesystem::temp_directory_path() / "gp_stats_test.json").string();
    stats.save(path);
    auto back = NormalizerStats::load(path);
    CHECK((back.mean - stats.mean).norm() == 0.0);
    CHECK((back.scale - stats.scale).norm() == 0.0);
    CHECK(back.d_h == 8);
    std::filesystem::remove(path);
}
