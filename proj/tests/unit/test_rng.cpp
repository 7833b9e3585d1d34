#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "goalplan/rng.hpp"

using goalplan::Rng;

TEST_CASE("identical seeds give identical draws") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(123), d(124);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs = differs || (c.next_u64() != d.next_u64());
    CHECK(differs);
}

TEST_CASE("named streams are independent of draw position") {
    Rng root(7);
    Rng s1 = root.stream("env");
    root.uniform();
    root.uniform();
    Rng s2 = root.stream("env");
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(root.stream("env").next_u64() != root.stream("rl").next_u64());
    CHECK(root.stream(0).next_u64() != root.stream(1).next_u64());
}

TEST_CASE("uniform stays in [0,1) and uniform_int in range") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    std::set<std::int64_t> seen;
    for (int i = 0; i < 10000; ++i) {
        auto v = rng.uniform_int(7);
        CHECK(v >= 0);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("normal draws have sane first moments") {
    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sum_sq += x * x;
    }
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    Rng a(3), b(3);
    std::vector<int> x{1, 2, 3, 4, 5, 6, 7}, y = x;
    a.shuffle(x);
    b.shuffle(y);
    CHECK(x == y);
    std::multiset<int> mx(x.begin(), x.end());
    CHECK(mx == std::multiset<int>({1, 2, 3, 4, 5, 6, 7}));
}
