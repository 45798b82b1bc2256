#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "qgen/rng.hpp"

using qgen::Rng;

TEST_CASE("same seed gives identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng c(42), d(43);
    bool all_equal = true;
    for (int i = 0; i < 10; ++i) all_equal = all_equal && (c.uniform() == d.uniform());
    CHECK_FALSE(all_equal);
}

TEST_CASE("uniform range and moments") {
    Rng rng(7);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(std::fabs(sum / n - 0.5) < 0.01);
}

TEST_CASE("randint bounds and coverage") {
    Rng rng(11);
    std::vector<int> seen(5, 0);
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng.randint(5);
        REQUIRE(v < 5);
        seen[static_cast<int>(v)]++;
    }
    for (int c : seen) CHECK(c > 100);
}

TEST_CASE("normal draws have the requested moments") {
    Rng rng(13);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.03);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 0.03);
}

TEST_CASE("shuffle is a permutation and is seed-deterministic") {
    std::vector<int> v(20);
    for (int i = 0; i < 20; ++i) v[i] = i;
    auto w = v;
    Rng a(5);
    a.shuffle(v);
    Rng b(5);
    b.shuffle(w);
    CHECK(v == w);
    std::sort(v.begin(), v.end());
    for (int i = 0; i < 20; ++i) CHECK(v[i] == i);
}

TEST_CASE("split streams are decorrelated from the parent") {
    Rng parent(99);
    Rng child = parent.split(1);
    Rng child2 = parent.split(2);
    // different ids should not produce identical streams
    bool same = true;
    for (int i = 0; i < 10; ++i) same = same && (child.uniform() == child2.uniform());
    CHECK_FALSE(same);
}

TEST_CASE("init_params respects scale") {
    Rng rng(3);
    auto zero = qgen::init_params({4, 4}, 0.0, rng);
    for (int i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);

    Rng rng2(4);
    auto t = qgen::init_params({100, 100}, 0.1, rng2);
    double sum = 0.0;
    for (int i = 0; i < t.size(); ++i) {
        CHECK(t[i] >= -0.1);
        CHECK(t[i] <= 0.1);
        sum += t[i];
    }
    CHECK(std::fabs(sum / t.size()) < 0.005);
}
