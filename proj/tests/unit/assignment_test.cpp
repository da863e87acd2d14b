#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "moecarve/assignment.hpp"
#include "support/test_rng.hpp"

using namespace moecarve;

namespace {

CostMatrix random_int_costs(testsupport::Rng& rng, std::size_t n) {
    std::vector<double> cost(n * n);
    for (double& c : cost) {
        c = static_cast<double>(rng.index(100));
    }
    return CostMatrix(n, std::move(cost));
}

CostMatrix random_float_costs(testsupport::Rng& rng, std::size_t n) {
    std::vector<double> cost(n * n);
    for (double& c : cost) {
        c = rng.uniform() * 10.0;
    }
    return CostMatrix(n, std::move(cost));
}

bool is_permutation_of_all(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != i) return false;
    }
    return true;
}

} // namespace

TEST_CASE("solve_lap on forced and degenerate instances") {
    const CostMatrix forced(2, {0, 9, 9, 0});
    const Assignment a = solve_lap(forced);
    CHECK(a.perm == std::vector<std::size_t>{0, 1});
    CHECK(a.total_cost == 0.0);

    const CostMatrix equal(3, std::vector<double>(9, 2.5));
    const Assignment b = solve_lap(equal);
    CHECK(is_permutation_of_all(b.perm));
    CHECK(b.total_cost == doctest::Approx(3 * 2.5).epsilon(1e-12));
}

TEST_CASE("brute_force_lap hand cases and guard") {
    const Assignment one = brute_force_lap(CostMatrix(1, {5}));
    CHECK(one.perm == std::vector<std::size_t>{0});
    CHECK(one.total_cost == 5.0);

    const Assignment two = brute_force_lap(CostMatrix(2, {1, 2, 2, 1}));
    CHECK(two.perm == std::vector<std::size_t>{0, 1});
    CHECK(two.total_cost == 2.0);

    CHECK_THROWS_AS(brute_force_lap(CostMatrix(10, std::vector<double>(100, 0.0))),
                    std::invalid_argument);
}

TEST_CASE("solve_lap equals brute force on random integer instances") {
    testsupport::Rng rng(2001);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 2 + rng.index(7);
        const CostMatrix c = random_int_costs(rng, n);
        const Assignment fast = solve_lap(c);
        const Assignment slow = brute_force_lap(c);
        CHECK(is_permutation_of_all(fast.perm));
        CHECK(fast.total_cost == slow.total_cost);
    }
}

TEST_CASE("solve_lap equals brute force on random 7x7 float instances") {
    testsupport::Rng rng(2002);
    for (int trial = 0; trial < 50; ++trial) {
        const CostMatrix c = random_float_costs(rng, 7);
        const Assignment fast = solve_lap(c);
        const Assignment slow = brute_force_lap(c);
        CHECK(std::fabs(fast.total_cost - slow.total_cost) <= 1e-9);
    }
}

TEST_CASE("row shift moves the optimum by the shift") {
    testsupport::Rng rng(2003);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3 + rng.index(4);
        const CostMatrix original = random_float_costs(rng, n);
        const Assignment base = solve_lap(original);

        const std::size_t row = rng.index(n);
        const double shift = rng.sym(5.0);
        std::vector<double> shifted = original.cost();
        for (std::size_t j = 0; j < n; ++j) {
            shifted[row * n + j] += shift;
        }
        const CostMatrix moved(n, std::move(shifted));
        const Assignment after = solve_lap(moved);
        CHECK(std::fabs(after.total_cost - (base.total_cost + shift)) <= 1e-9);

        // The original optimum stays optimal for the shifted instance.
        double base_perm_on_moved = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            base_perm_on_moved += moved.at(i, base.perm[i]);
        }
        CHECK(std::fabs(base_perm_on_moved - after.total_cost) <= 1e-9);
    }
}

TEST_CASE("total_cost matches a recomputed sum") {
    testsupport::Rng rng(2004);
    const CostMatrix c = random_float_costs(rng, 6);
    const Assignment a = solve_lap(c);
    double recomputed = 0.0;
    for (std::size_t i = 0; i < c.n(); ++i) {
        recomputed += c.at(i, a.perm[i]);
    }
    CHECK(std::fabs(recomputed - a.total_cost) <= 1e-6);
}

TEST_CASE("cost matrix validation") {
    CHECK_THROWS_AS(CostMatrix(2, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(CostMatrix(1, {std::nan("")}), std::invalid_argument);
}
