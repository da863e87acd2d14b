#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "moecarve/carve.hpp"
#include "moecarve/runtime.hpp"
#include "support/oracles.hpp"
#include "support/test_rng.hpp"

using namespace moecarve;

namespace {

CarveResult carved_fixture(std::uint64_t seed, std::size_t n_active) {
    testsupport::Rng rng(seed);
    const DenseFfn ffn = rng.ffn(8, 16);
    const CalibrationBatch batch = rng.batch(32, 8);
    const ActivationProfile profile = build_profile(batch, ffn, 5, false);
    MoeConfig config;
    config.n_experts = 4;
    config.n_shared = 1;
    config.n_routed = 3;
    config.n_active = n_active;
    config.expert_size = 4;
    config.k_a = 5;
    return carve_moe(ffn, profile, config);
}

} // namespace

TEST_CASE("gate mode names round-trip") {
    for (const GateMode mode : {GateMode::binary, GateMode::scaled, GateMode::generic}) {
        CHECK(parse_gate_mode(gate_mode_name(mode)) == mode);
    }
    CHECK_THROWS_AS(parse_gate_mode("softmax"), std::invalid_argument);
}

TEST_CASE("dense_forward hand values") {
    DenseFfn unit;
    unit.w_up = Matrix(1, 1, {1.0f});
    unit.w_gate = Matrix(1, 1, {1.0f});
    unit.w_down = Matrix(1, 1, {1.0f});
    const std::vector<float> x{1.0f};
    const std::vector<float> y = dense_forward(unit, x);
    REQUIRE(y.size() == 1);
    CHECK(y[0] == doctest::Approx(0.7310585786f).epsilon(1e-6));

    testsupport::Rng rng(6001);
    const DenseFfn ffn = rng.ffn(5, 7);
    const std::vector<float> zero(5, 0.0f);
    for (float v : dense_forward(ffn, zero)) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("dense_forward matches the per-neuron term oracle") {
    testsupport::Rng rng(6002);
    const DenseFfn ffn = rng.ffn(6, 10);
    std::vector<std::size_t> all(10);
    std::iota(all.begin(), all.end(), 0);
    for (int trial = 0; trial < 25; ++trial) {
        const Matrix x = rng.matrix(1, 6, 1.0);
        const std::vector<float> got = dense_forward(ffn, x.row(0));
        const std::vector<double> want = testsupport::dense_term_sum(ffn, x.row(0), all);
        for (std::size_t j = 0; j < got.size(); ++j) {
            CHECK(std::fabs(got[j] - want[j]) <= 1e-5);
        }
    }
}

TEST_CASE("make_gate_decision selects by probability plus bias") {
    const std::vector<float> affinity{1.0f, 3.0f, 2.0f};
    const std::vector<double> zeros(3, 0.0);

    SUBCASE("plain top-k") {
        const GateDecision d = make_gate_decision(affinity, zeros, zeros, 2, GateMode::binary);
        CHECK(d.active == std::vector<std::size_t>{1, 2});
        CHECK(d.gate == std::vector<double>{0.0, 1.0, 1.0});
        CHECK(d.probs.size() == 3);
        CHECK(d.probs[1] > d.probs[2]);
    }

    SUBCASE("ties go to the lower index") {
        const std::vector<float> tied{2.0f, 2.0f, 0.0f};
        const GateDecision d = make_gate_decision(tied, zeros, zeros, 1, GateMode::binary);
        CHECK(d.active == std::vector<std::size_t>{0});
    }

    SUBCASE("bias changes selection but never the gate value") {
        std::vector<double> b{0.0, 0.0, 10.0};
        const GateDecision d = make_gate_decision(affinity, zeros, b, 1, GateMode::generic);
        CHECK(d.active == std::vector<std::size_t>{2});
        // Generic gates pass the raw affinity through, untouched by b.
        CHECK(d.gate[2] == static_cast<double>(affinity[2]));
        CHECK(d.gate[0] == 0.0);
        CHECK(d.gate[1] == 0.0);
    }

    SUBCASE("scaled gates blend the probability through u") {
        const std::vector<double> u{0.5, 0.5, 0.5};
        const GateDecision d = make_gate_decision(affinity, u, zeros, 2, GateMode::scaled);
        CHECK(d.active == std::vector<std::size_t>{1, 2});
        CHECK(d.gate[1] == doctest::Approx(1.0 + 0.5 * d.probs[1]).epsilon(1e-12));
        CHECK(d.gate[2] == doctest::Approx(1.0 + 0.5 * d.probs[2]).epsilon(1e-12));
        CHECK(d.gate[0] == 0.0);
    }

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(make_gate_decision(affinity, zeros, zeros, 0, GateMode::binary),
                        std::invalid_argument);
        CHECK_THROWS_AS(make_gate_decision(affinity, zeros, zeros, 4, GateMode::binary),
                        std::invalid_argument);
        const std::vector<double> short_u(2, 0.0);
        CHECK_THROWS_AS(make_gate_decision(affinity, short_u, zeros, 1, GateMode::binary),
                        std::invalid_argument);
    }
}

TEST_CASE("zero-initialized scaled routing is bit-identical to binary") {
    const CarveResult result = carved_fixture(6003, 2);
    testsupport::Rng rng(6004);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix x = rng.matrix(1, 8, 1.0);
        const GateDecision binary = route(result.moe, x.row(0), GateMode::binary);
        const GateDecision scaled = route(result.moe, x.row(0), GateMode::scaled);
        CHECK(binary.active == scaled.active);
        CHECK(binary.gate == scaled.gate);
        const std::vector<float> yb = moe_forward(result.moe, x.row(0), GateMode::binary);
        const std::vector<float> ys = moe_forward(result.moe, x.row(0), GateMode::scaled);
        CHECK(yb == ys);
    }
}

TEST_CASE("selection bias can force an expert") {
    CarveResult result = carved_fixture(6005, 1);
    result.moe.b[2] = 100.0;
    testsupport::Rng rng(6006);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = rng.matrix(1, 8, 1.0);
        const GateDecision d = route(result.moe, x.row(0), GateMode::binary);
        CHECK(d.active == std::vector<std::size_t>{2});
        CHECK(d.gate[2] == 1.0);
    }
}

TEST_CASE("moe_forward equals the dense terms of the active neurons") {
    const CarveResult result = carved_fixture(6007, 2);
    testsupport::Rng rng(6007); // same stream as carved_fixture, so the ffn matches
    testsupport::Rng token_rng(6009);
    const DenseFfn ffn = rng.ffn(8, 16);

    for (int trial = 0; trial < 40; ++trial) {
        const Matrix x = token_rng.matrix(1, 8, 1.0);
        const GateDecision d = route(result.moe, x.row(0), GateMode::binary);

        std::vector<std::size_t> neurons = result.moe.shared.source_indices;
        for (std::size_t p : d.active) {
            const auto& src = result.moe.routed[p].source_indices;
            neurons.insert(neurons.end(), src.begin(), src.end());
        }
        const std::vector<double> want = testsupport::dense_term_sum(ffn, x.row(0), neurons);
        const std::vector<float> got = moe_forward(result.moe, x.row(0), GateMode::binary);
        for (std::size_t j = 0; j < got.size(); ++j) {
            CHECK(std::fabs(got[j] - want[j]) <= 1e-5);
        }
    }
}

TEST_CASE("moe_forward evaluates exactly the active experts") {
    const CarveResult result = carved_fixture(6010, 2);
    testsupport::Rng rng(6011);
    EvalCounter counter;
    const std::size_t tokens = 33;
    for (std::size_t t = 0; t < tokens; ++t) {
        const Matrix x = rng.matrix(1, 8, 1.0);
        moe_forward(result.moe, x.row(0), GateMode::binary, &counter);
    }
    CHECK(counter.shared == tokens);
    CHECK(counter.routed == tokens * 2);
}

TEST_CASE("load statistics conserve the total selection count") {
    const CarveResult result = carved_fixture(6012, 2);
    testsupport::Rng rng(6013);
    LoadStats stats(result.moe.n_routed());
    const std::size_t tokens = 64;
    for (std::size_t t = 0; t < tokens; ++t) {
        const Matrix x = rng.matrix(1, 8, 1.0);
        stats.accumulate(route(result.moe, x.row(0), GateMode::binary));
    }
    CHECK(stats.tokens == tokens);
    CHECK(std::accumulate(stats.counts.begin(), stats.counts.end(), std::size_t{0}) ==
          tokens * 2);
}

TEST_CASE("gate_jacobian matches central finite differences") {
    const CarveResult base = carved_fixture(6014, 2);
    testsupport::Rng rng(6015);
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 40; ++trial) {
        const Matrix x = rng.matrix(1, 8, 1.0);
        MoeFfn moe = base.moe;
        for (double& v : moe.u) {
            v = rng.sym(0.5);
        }
        const GateDecision d = route(moe, x.row(0), GateMode::scaled);

        // Skip states where a u-perturbation could flip the selection.
        std::vector<double> sel(moe.n_routed());
        for (std::size_t j = 0; j < sel.size(); ++j) {
            sel[j] = static_cast<double>(d.probs[j]) + moe.b[j];
        }
        std::vector<double> sorted = sel;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        if (sorted[1] - sorted[2] < 1e-3) {
            continue;
        }
        ++checked;

        const Matrix jac = gate_jacobian(d);
        REQUIRE(jac.rows() == moe.n_routed());
        REQUIRE(jac.cols() == moe.n_routed());

        const double step = 1e-6;
        for (std::size_t i = 0; i < moe.n_routed(); ++i) {
            for (std::size_t j = 0; j < moe.n_routed(); ++j) {
                std::vector<double> up = moe.u;
                std::vector<double> down = moe.u;
                up[j] += step;
                down[j] -= step;
                const GateDecision dp =
                    make_gate_decision(d.affinity, up, moe.b, moe.n_active, GateMode::scaled);
                const GateDecision dm =
                    make_gate_decision(d.affinity, down, moe.b, moe.n_active, GateMode::scaled);
                REQUIRE(dp.active == d.active);
                REQUIRE(dm.active == d.active);
                const double fd = (dp.gate[i] - dm.gate[i]) / (2.0 * step);
                CHECK(std::fabs(jac(i, j) - fd) <= 1e-6);
                const bool is_active = std::find(d.active.begin(), d.active.end(), i) !=
                                       d.active.end();
                if (i == j && is_active) {
                    CHECK(jac(i, j) == doctest::Approx(d.probs[i]).epsilon(1e-6));
                } else {
                    CHECK(jac(i, j) == 0.0f);
                }
            }
        }
    }
    CHECK(checked >= 20);
}

TEST_CASE("gate_jacobian is only defined for scaled gates") {
    const CarveResult result = carved_fixture(6016, 1);
    testsupport::Rng rng(6017);
    const Matrix x = rng.matrix(1, 8, 1.0);
    const GateDecision d = route(result.moe, x.row(0), GateMode::binary);
    CHECK_THROWS_AS(gate_jacobian(d), std::invalid_argument);
}

TEST_CASE("update_balance_bias nudges against the load imbalance") {
    LoadStats stats(2);
    stats.counts = {10, 0};
    stats.tokens = 10;
    const std::vector<double> b(2, 0.0);
    const std::vector<double> next = update_balance_bias(b, stats, 0.001);
    CHECK(next[0] == -0.001);
    CHECK(next[1] == 0.001);

    LoadStats even(4);
    even.counts = {5, 5, 5, 5};
    even.tokens = 20;
    const std::vector<double> same = update_balance_bias(std::vector<double>(4, 0.25), even, 0.001);
    CHECK(same == std::vector<double>(4, 0.25));

    CHECK_THROWS_AS(update_balance_bias(b, even, 0.001), std::invalid_argument);
}

TEST_CASE("repeated bias updates even out a skewed router") {
    CarveResult result = carved_fixture(6018, 1);
    testsupport::Rng rng(6019);
    const Matrix tokens = rng.matrix(96, 8, 1.0);

    const auto measure = [&](const MoeFfn& moe) {
        LoadStats stats(moe.n_routed());
        for (std::size_t t = 0; t < tokens.rows(); ++t) {
            stats.accumulate(route(moe, tokens.row(t), GateMode::binary));
        }
        return stats;
    };

    const LoadStats before = measure(result.moe);
    const std::size_t max_before =
        *std::max_element(before.counts.begin(), before.counts.end());
    for (int step = 0; step < 200; ++step) {
        result.moe.b = update_balance_bias(result.moe.b, measure(result.moe), 0.001);
    }
    const LoadStats after = measure(result.moe);
    const std::size_t max_after = *std::max_element(after.counts.begin(), after.counts.end());
    // Near equilibrium the bias oscillates by one step, so allow a little jitter.
    CHECK(max_after <= max_before + tokens.rows() / 16);
    // The bias never touches gate values, only selection.
    const GateDecision d = route(result.moe, tokens.row(0), GateMode::binary);
    for (std::size_t p : d.active) {
        CHECK(d.gate[p] == 1.0);
    }
}

TEST_CASE("routing fidelity is perfect when every expert is active") {
    const CarveResult result = carved_fixture(6020, 3);
    testsupport::Rng rng(6020);
    const DenseFfn ffn = rng.ffn(8, 16); // rebuild the fixture's dense net
    const CalibrationBatch batch = rng.batch(32, 8);

    const FidelityReport report = routing_fidelity(result.moe, ffn, batch, 7);
    CHECK(report.tokens == 32);
    CHECK(report.mean_overlap == doctest::Approx(1.0));
    CHECK(report.random_overlap == doctest::Approx(1.0));
    CHECK(report.router_deactivated_mass == doctest::Approx(0.0));
    CHECK(report.oracle_deactivated_mass == doctest::Approx(0.0));
    CHECK(report.router_not_worse_fraction == doctest::Approx(1.0));
}

TEST_CASE("random routing baseline hits the expected overlap on average") {
    const CarveResult result = carved_fixture(6022, 1);
    testsupport::Rng rng(6022);
    const DenseFfn ffn = rng.ffn(8, 16);
    testsupport::Rng token_rng(6023);
    const CalibrationBatch batch = token_rng.batch(6000, 8);

    const FidelityReport report = routing_fidelity(result.moe, ffn, batch, 11);
    // Picking 1 of 3 at random overlaps the oracle's single pick 1/3 of the time.
    CHECK(std::fabs(report.random_overlap - 1.0 / 3.0) <= 0.05);
}

TEST_CASE("flop_report for one shared, one active of eight experts") {
    testsupport::Rng rng(6024);
    const DenseFfn ffn = rng.ffn(8, 32);
    const CalibrationBatch batch = rng.batch(16, 8);
    const ActivationProfile profile = build_profile(batch, ffn, 5, false);
    MoeConfig config;
    config.n_experts = 8;
    config.n_shared = 1;
    config.n_routed = 7;
    config.n_active = 1;
    config.expert_size = 4;
    config.k_a = 5;
    const CarveResult result = carve_moe(ffn, profile, config);

    const FlopReport report = flop_report(result.moe);
    CHECK(report.dense_per_token == 6u * 8u * 32u);
    CHECK(report.moe_ffn_per_token == 6u * 8u * 8u);
    CHECK(report.router_per_token == 4u * 8u * 7u);
    CHECK(report.ffn_ratio == 0.25);
    CHECK(report.total_ratio ==
          doctest::Approx((384.0 + 224.0) / 1536.0).epsilon(1e-12));
}
