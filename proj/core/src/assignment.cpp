#include "moecarve/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace moecarve {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

double matched_cost(const CostMatrix& c, const std::vector<std::size_t>& perm) {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        total += c.at(i, perm[i]);
    }
    return total;
}

} // namespace

CostMatrix::CostMatrix(std::size_t n, std::vector<double> cost)
    : n_(n), cost_(std::move(cost)) {
    if (cost_.size() != n_ * n_) {
        throw std::invalid_argument("cost matrix is not " + std::to_string(n_) + "x" +
                                    std::to_string(n_) + ": got " +
                                    std::to_string(cost_.size()) + " entries");
    }
    for (double v : cost_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("cost matrix contains a non-finite entry");
        }
    }
}

Assignment solve_lap(const CostMatrix& c) {
    const std::size_t n = c.n();
    if (n == 0) {
        return {{}, 0.0};
    }
    constexpr double kInf = std::numeric_limits<double>::infinity();

    // Dual potentials for rows (u) and columns (v); column n is a virtual
    // slot holding the row currently being inserted.
    std::vector<double> u(n, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> col_to_row(n + 1, kNone);
    std::vector<std::size_t> way(n + 1, kNone);

    for (std::size_t i = 0; i < n; ++i) {
        col_to_row[n] = i;
        std::size_t j0 = n;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = col_to_row[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double cur = c.at(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[col_to_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (col_to_row[j0] != kNone);
        // Walk the augmenting path back to the virtual column, shifting
        // assignments along the way.
        do {
            const std::size_t j1 = way[j0];
            col_to_row[j0] = col_to_row[j1];
            j0 = j1;
        } while (j0 != n);
    }

    Assignment result;
    result.perm.assign(n, kNone);
    for (std::size_t j = 0; j < n; ++j) {
        result.perm[col_to_row[j]] = j;
    }
    result.total_cost = matched_cost(c, result.perm);
    return result;
}

Assignment brute_force_lap(const CostMatrix& c) {
    const std::size_t n = c.n();
    if (n > 9) {
        throw std::invalid_argument("brute_force_lap limited to n <= 9, got n = " +
                                    std::to_string(n));
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    Assignment best{perm, matched_cost(c, perm)};
    while (std::next_permutation(perm.begin(), perm.end())) {
        const double cost = matched_cost(c, perm);
        if (cost < best.total_cost) {
            best.perm = perm;
            best.total_cost = cost;
        }
    }
    return best;
}

} // namespace moecarve
