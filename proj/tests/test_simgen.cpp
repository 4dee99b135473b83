#include "doctest.h"

#include <set>
#include <sstream>

#include "lmmsel/rng.hpp"
#include "lmmsel/simgen.hpp"

using namespace lmmsel;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    const auto zero = Philox4x32::bijection({0, 0, 0, 0}, {0, 0});
    CHECK(zero == Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const auto ones = Philox4x32::bijection({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                            {0xffffffffu, 0xffffffffu});
    CHECK(ones == Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    const auto pi = Philox4x32::bijection({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                          {0xa4093822u, 0x299f31d0u});
    CHECK(pi == Philox4x32::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("generator streams and reproducibility") {
    Philox4x32 a(42), b(42), c(42, 1);
    bool differs = false;
    for (int i = 0; i < 16; ++i) {
        const auto x = a();
        CHECK(x == b());
        differs = differs || x != c();
    }
    CHECK(differs);
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 5) == derive_seed(1, 5));
}

TEST_CASE("uniform, normal and bounded draws") {
    Philox4x32 g(7);
    double sum = 0.0, sq = 0.0;
    const int m = 200000;
    for (int i = 0; i < m; ++i) {
        const double z = g.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / m) < 0.01);
    CHECK(std::abs(sq / m - 1.0) < 0.02);
    for (int i = 0; i < 1000; ++i) {
        const double u = g.uniform();
        CHECK((u > 0.0 && u < 1.0));
        CHECK(g.below(7) < 7u);
    }
}

TEST_CASE("scenario presets") {
    const auto m1 = scenario("M1");
    CHECK(m1.n == 120);
    CHECK(m1.p == 80);
    CHECK(m1.beta_value == doctest::Approx(2.0 / 3.0));
    CHECK(m1.true_support == IndexSet{0, 1, 2, 3, 4});
    CHECK(m1.fitted_q == 3);
    CHECK(scenario("M2").p == 300);
    CHECK(scenario("M2").rho == 0.5);
    CHECK(scenario("M2").beta_value == 0.75);
    CHECK(scenario("M3").group_sizes == std::vector<std::size_t>{6, 8});
    CHECK(scenario("M4").p == 600);
    CHECK_THROWS_AS(scenario("M5"), ConfigError);
    CHECK(scenario_names().size() == 4);
}

TEST_CASE("generated M1 data has the stated shape") {
    const auto sim = generate(scenario("M1"), 3);
    const auto& d = sim.data;
    CHECK(d.n() == 120);
    CHECK(d.p() == 80);
    CHECK(d.q() == 3);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(d.level_count(k) == 20);
        for (std::size_t s : d.effect(k).factor.level_sizes()) CHECK(s == 6);
    }
    CHECK((d.X().col(0).array() == 1.0).all());
    for (Eigen::Index j = 1; j < d.X().cols(); ++j) {
        CHECK(std::abs(d.X().col(j).mean()) <= 1e-12);
        CHECK(std::abs(d.X().col(j).squaredNorm() / 120.0 - 1.0) <= 1e-12);
    }
    CHECK(sim.truth.support == IndexSet{0, 1, 2, 3, 4});
    CHECK(sim.truth.beta(4) == doctest::Approx(2.0 / 3.0));
    CHECK(sim.truth.true_effects == IndexSet{0, 1});
    const Vector rebuilt = sim.truth.signal + sim.truth.noise;
    CHECK((rebuilt - d.y()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(sim.truth.snr == doctest::Approx(sim.truth.signal.squaredNorm() / sim.truth.noise.squaredNorm()));
}

TEST_CASE("M3 uses two different partitions") {
    const auto d = generate(scenario("M3"), 1).data;
    CHECK(d.level_count(0) == 20);
    CHECK(d.level_count(1) == 15);
}

TEST_CASE("M2 support draws") {
    const auto sc = scenario("M2");
    const auto a = generate(sc, 1).truth.support;
    CHECK(a.size() == 5);
    CHECK(a[0] == 0);
    CHECK(a[1] == 1);
    for (std::size_t j = 2; j < 5; ++j) CHECK(a[j] >= 2);
    std::set<IndexSet> seen;
    for (std::uint64_t s = 0; s < 5; ++s) seen.insert(generate(sc, s).truth.support);
    CHECK(seen.size() > 1);
    GenerateOptions fixed;
    fixed.fixed_support_seed = 99;
    CHECK(generate(sc, 1, fixed).truth.support == generate(sc, 2, fixed).truth.support);
}

TEST_CASE("generation is deterministic") {
    const auto a = generate(scenario("M4"), 11);
    const auto b = generate(scenario("M4"), 11);
    CHECK(a.data.y() == b.data.y());
    CHECK(a.data.X() == b.data.X());
    CHECK(a.data.y() != generate(scenario("M4"), 12).data.y());
}

TEST_CASE("evaluation of perfect and null fits") {
    const auto sim = generate(scenario("M1"), 5);
    FitResult perfect;
    perfect.state.beta = sim.truth.beta;
    perfect.state.sigma2 = {1.0, 1.0, 0.0};
    perfect.state.sigma2_e = 1.0;
    perfect.state.active = {0, 1};
    perfect.support = sim.truth.support;
    auto r = evaluate(sim.data, perfect, sim.truth);
    CHECK(r.truth);
    CHECK(r.support_exact);
    CHECK(r.mse == 0.0);
    CHECK(r.tp == 5);
    CHECK(r.spurious_deleted);
    CHECK_FALSE(r.false_deletion);

    FitResult spurious = perfect;
    spurious.state.sigma2[2] = 0.05;
    spurious.state.active = {0, 1, 2};
    r = evaluate(sim.data, spurious, sim.truth);
    CHECK(r.support_exact);
    CHECK_FALSE(r.truth);
    CHECK_FALSE(r.spurious_deleted);

    FitResult null = perfect;
    null.state.beta.setZero();
    null.support.clear();
    r = evaluate(sim.data, null, sim.truth);
    CHECK(r.tp == 0);
    CHECK(r.mse == doctest::Approx(sim.truth.signal.squaredNorm() / 120.0));
}

TEST_CASE("aggregate of a single replicate omits the spread") {
    SimulationReport rep;
    rep.tp = 5;
    rep.sigma2 = {1.0, 1.0};
    const auto row = aggregate("lasso+", {&rep}, 1, 2);
    CHECK(row.reps == 1);
    for (const auto& f : row.fields) CHECK_FALSE(f.sd.has_value());
    bool found = false;
    for (const auto& f : row.fields)
        if (f.field == "tp") {
            found = true;
            CHECK(f.mean == 5.0);
        }
    CHECK(found);
}

TEST_CASE("small study is reproducible and validates its config") {
    StudyConfig cfg;
    cfg.scenario = scenario("M1");
    cfg.reps = 2;
    cfg.grid_size = 10;
    cfg.refit = true;
    const auto a = run_study(cfg);
    cfg.threads = 2;
    const auto b = run_study(cfg);
    std::ostringstream sa, sb;
    write_aggregate_csv(sa, a);
    write_aggregate_csv(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a.rows.size() == 2);
    cfg.reps = 0;
    CHECK_THROWS_AS(run_study(cfg), ConfigError);
    cfg.reps = 1;
    cfg.method = "procbol";
    CHECK_THROWS_AS(run_study(cfg), ConfigError);
}
