#include <cmath>
#include <vector>

#include "doctest.h"

#include "clusterlab/rng.hpp"

using clusterlab::Rng;

TEST_CASE("identical seeds reproduce identical streams") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds differ") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("split streams are independent of parent consumption") {
    Rng parent(77);
    Rng child_before = parent.split(5);
    for (int i = 0; i < 50; ++i) parent.next_u64();
    Rng child_after = parent.split(5);
    for (int i = 0; i < 100; ++i)
        CHECK(child_before.next_u64() == child_after.next_u64());
}

TEST_CASE("uniform lies in [0, 1) with sane mean") {
    Rng rng(9);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("gaussian moments") {
    Rng rng(42);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sumsq += g * g;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sumsq / n - 1.0) < 0.02);
}

TEST_CASE("uniform_below is in range and roughly uniform") {
    Rng rng(3);
    std::vector<int> counts(10, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto v = rng.uniform_below(10);
        REQUIRE(v < 10);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) CHECK(std::abs(c - n / 10) < 4 * std::sqrt(n / 10.0));
}
