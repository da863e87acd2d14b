#pragma once

#include <cstddef>
#include <vector>

namespace moecarve {

// Square cost matrix for the linear assignment problem. Entries are kept in
// 64-bit floats so the dual potentials of the solver do not drift.
class CostMatrix {
public:
    CostMatrix(std::size_t n, std::vector<double> cost);

    std::size_t n() const { return n_; }
    double at(std::size_t i, std::size_t j) const { return cost_[i * n_ + j]; }
    const std::vector<double>& cost() const { return cost_; }

private:
    std::size_t n_;
    std::vector<double> cost_;
};

// A perfect matching: row i is assigned to column perm[i]. total_cost is the
// sum of the matched entries, recomputed from the input matrix.
struct Assignment {
    std::vector<std::size_t> perm;
    double total_cost = 0.0;
};

// Minimum-cost perfect matching via shortest augmenting paths with dual
// potentials, O(n^3). Exact optimum; among equal-cost optima the returned
// permutation is unspecified.
Assignment solve_lap(const CostMatrix& c);

// Exhaustive minimum over all n! permutations. Test oracle; refuses n > 9.
Assignment brute_force_lap(const CostMatrix& c);

} // namespace moecarve
