#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "moecarve/matrix.hpp"
#include "moecarve/profile.hpp"

namespace testsupport {

// Deterministic random source for tests. Draws raw mt19937_64 bits and maps
// them by hand, so fixed seeds give the same fixtures on every platform and
// standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [-scale, scale).
    double sym(double scale) { return (uniform() * 2.0 - 1.0) * scale; }

    // Uniform integer in [0,n). The modulo bias is immaterial for tests.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    moecarve::Matrix matrix(std::size_t rows, std::size_t cols, double scale) {
        moecarve::Matrix m(rows, cols);
        for (float& v : m.data()) {
            v = static_cast<float>(sym(scale));
        }
        return m;
    }

    moecarve::DenseFfn ffn(std::size_t d, std::size_t d_h) {
        moecarve::DenseFfn f;
        f.w_up = matrix(d, d_h, 0.5);
        f.w_gate = matrix(d, d_h, 0.5);
        f.w_down = matrix(d_h, d, 0.5);
        return f;
    }

    moecarve::CalibrationBatch batch(std::size_t q, std::size_t d, double scale = 1.0) {
        return {matrix(q, d, scale)};
    }

private:
    std::mt19937_64 engine_;
};

} // namespace testsupport
