#include "doctest.h"

#include "lmmsel/ecm.hpp"
#include "lmmsel/oracle.hpp"
#include "support.hpp"

using namespace lmmsel;

TEST_CASE("marginal covariance without random effects is sigma_e^2 I") {
    auto inst = testing::random_instance(71, {.levels = {}});
    const auto cov = marginal_covariance(inst.data, Variances{{}, 2.5});
    CHECK(cov.V == 2.5 * Matrix::Identity(40, 40));
}

TEST_CASE("marginal covariance of the four-observation instance") {
    const auto cov = marginal_covariance(testing::four_obs_data(), Variances{{1.0}, 1.0});
    Matrix expected(4, 4);
    expected << 2, 1, 0, 0, 1, 2, 0, 0, 0, 0, 2, 1, 0, 0, 1, 2;
    CHECK(cov.V == expected);
    CHECK(cov.log_det() == doctest::Approx(std::log(9.0)));
}

TEST_CASE("vanishing variance tends to sigma_e^2 I") {
    auto inst = testing::random_instance(73);
    const auto cov = marginal_covariance(inst.data, Variances{{1e-12, 1e-12}, 1.0});
    CHECK((cov.V - Matrix::Identity(40, 40)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("GLS lasso with identity covariance is the plain lasso") {
    auto inst = testing::random_instance(79, {.levels = {}});
    SelectorConfig cfg;
    cfg.cd_tol = 1e-12;
    const Vector a = gls_lasso(inst.data, Variances{{}, 1.0}, 7.0, cfg);
    SelectorConfig plain = cfg;
    plain.lambda = 7.0;
    plain.unpenalized = {0};
    const Vector b = lasso_cd(inst.data.X(), inst.data.y(), 1.0, plain).beta;
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("GLS lasso at lambda zero is generalized least squares") {
    auto inst = testing::random_instance(83, {.n = 40, .p = 6});
    const auto& d = inst.data;
    SelectorConfig cfg;
    cfg.cd_tol = 1e-13;
    const Vector a = gls_lasso(d, inst.variances, 0.0, cfg);
    const auto cov = marginal_covariance(d, inst.variances);
    const Matrix ViX = cov.factor.solve(d.X());
    const Vector gls = (d.X().transpose() * ViX).ldlt().solve(ViX.transpose() * d.y());
    CHECK((a - gls).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("GLS lasso satisfies its KKT conditions") {
    auto inst = testing::random_instance(89, {.n = 40, .p = 10});
    SelectorConfig cfg;
    cfg.cd_tol = 1e-12;
    const Vector b = gls_lasso(inst.data, inst.variances, 4.0, cfg);
    CHECK(gls_kkt_violation(inst.data, inst.variances, b, 4.0, cfg) <= 1e-6);
}

TEST_CASE("frozen-variance ECM reaches the GLS lasso") {
    auto inst = testing::random_instance(97, {.n = 40, .p = 10});
    const double lambda = 5.0;
    EcmConfig cfg;
    cfg.lambda = lambda;
    cfg.freeze_variances = true;
    cfg.allow_deletion = false;
    cfg.tol_beta = cfg.tol_u = 1e-24;
    cfg.tol_loglik = 1e-24;
    cfg.max_iter = 100000;
    cfg.selector_config.cd_tol = 1e-13;
    ParameterState s;
    s.beta = Vector::Zero(10);
    s.sigma2 = inst.variances.effect;
    s.sigma2_e = inst.variances.residual;
    s.active = {0, 1};
    cfg.start = s;
    const auto f = fit(inst.data, cfg);
    SelectorConfig oc;
    oc.cd_tol = 1e-13;
    const Vector oracle = gls_lasso(inst.data, inst.variances, lambda, oc);
    CHECK((f.state.beta - oracle).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("W identity") {
    CHECK(w_identity_check(testing::random_instance(101, {.levels = {}}).data, Variances{{}, 1.3}) == 0.0);
    CHECK(w_identity_check(testing::four_obs_data(), Variances{{1.0}, 1.0}) <= 1e-12);
    auto inst = testing::random_instance(103, {.n = 30, .p = 5, .relationship = true});
    CHECK(w_identity_check(inst.data, inst.variances) <= 1e-8);
}

TEST_CASE("profiled complete-data objective equals the GLS objective") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto inst = testing::random_instance(110 + seed, {.n = 30, .p = 6, .relationship = seed == 1});
        const Vector b = inst.beta * 0.8;
        const double a = profiled_objective(inst.data, inst.variances, b, 2.0);
        const double g = gls_objective(inst.data, inst.variances, b, 2.0);
        CHECK(std::abs(a - g) <= 1e-8 * std::max(1.0, std::abs(g)));
    }
}

TEST_CASE("oracle input validation") {
    auto inst = testing::random_instance(107);
    CHECK_THROWS_AS(marginal_covariance(inst.data, Variances{{1.0}, 1.0}), DimensionError);
    CHECK_THROWS_AS(marginal_covariance(inst.data, Variances{{1.0, 1.0}, 0.0}), ConfigError);
    CHECK_THROWS_AS(marginal_covariance(inst.data, Variances{{-1.0, 1.0}, 1.0}), ConfigError);
}
