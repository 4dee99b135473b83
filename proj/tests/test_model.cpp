#include "doctest.h"

#include "lmmsel/model.hpp"
#include "support.hpp"

using namespace lmmsel;

TEST_CASE("incidence of a plain factor") {
    const GroupingFactor f = GroupingFactor::from_one_based(std::vector<long long>{1, 1, 2, 2, 3, 3});
    const Matrix Z = build_incidence(f);
    Matrix expected = Matrix::Zero(6, 3);
    expected(0, 0) = expected(1, 0) = expected(2, 1) = expected(3, 1) = expected(4, 2) = expected(5, 2) = 1.0;
    CHECK(Z == expected);
}

TEST_CASE("incidence of a factor interacted with a covariate") {
    const GroupingFactor f = GroupingFactor::from_one_based(std::vector<long long>{1, 1, 2, 2, 3, 3});
    Vector x(6);
    x << 0.5, -1.0, 2.0, 3.0, -4.0, 7.0;
    const Matrix Z = build_incidence(f, x);
    Matrix expected = Matrix::Zero(6, 3);
    expected(0, 0) = 0.5;
    expected(1, 0) = -1.0;
    expected(2, 1) = 2.0;
    expected(3, 1) = 3.0;
    expected(4, 2) = -4.0;
    expected(5, 2) = 7.0;
    CHECK(Z == expected);
}

TEST_CASE("one observation per level gives the identity") {
    std::vector<long long> lv(7);
    for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = static_cast<long long>(i + 1);
    CHECK(build_incidence(GroupingFactor::from_one_based(lv)) == Matrix::Identity(7, 7));
}

TEST_CASE("grouping factor validation") {
    CHECK_THROWS_AS(GroupingFactor::from_one_based(std::vector<long long>{1, 3, 3}), DimensionError);
    CHECK_THROWS_AS(GroupingFactor::from_one_based(std::vector<long long>{0, 1}), DimensionError);
    const auto f = GroupingFactor::from_labels(std::vector<std::string>{"b", "a", "b", "c"});
    CHECK(f.level_count() == 3);
    CHECK(f.level(0) == 0);
    CHECK(f.level(1) == 1);
    CHECK(f.level(2) == 0);
    CHECK(f.level_sizes() == std::vector<std::size_t>{2, 1, 1});
}

TEST_CASE("standardize a small column") {
    Matrix X(3, 1);
    X << 1, 2, 3;
    const auto st = standardize(X);
    CHECK(st.X(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(st.X(1, 0) == doctest::Approx(0.0));
    CHECK(st.X(2, 0) == doctest::Approx(1.224744871391589).epsilon(1e-12));
    CHECK(st.scales(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("standardize is idempotent and honours skipped columns") {
    auto inst = testing::random_instance(3);
    const auto once = standardize(inst.data.X(), {0});
    const auto twice = standardize(once.X, {0});
    CHECK((once.X - twice.X).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(once.X.col(0) == inst.data.X().col(0));
    Matrix C(4, 2);
    C << 1, 1, 1, 2, 1, 3, 1, 4;
    CHECK_THROWS_AS(standardize(C), DegenerateColumnError);
}

TEST_CASE("coefficients map back to the original scale") {
    auto inst = testing::random_instance(5);
    const auto st = standardize(inst.data.X(), {0});
    Vector b = Vector::Random(inst.data.X().cols());
    const Vector orig = unstandardize_coefficients(b, st, 0);
    CHECK((st.X * b - inst.data.X() * orig).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("exempt columns follow the active effects") {
    auto inst = testing::random_instance(7);
    const auto& d = inst.data;
    CHECK(d.exempt_columns({}) == IndexSet{0});
    CHECK(d.exempt_columns({0}) == IndexSet{0});
    CHECK(d.exempt_columns({0, 1}) == IndexSet{0, 1});
    CHECK(d.total_levels({0, 1}) == 9);
}

TEST_CASE("implicit Z products match the dense incidence") {
    auto inst = testing::random_instance(11, {.relationship = true});
    const auto& d = inst.data;
    const IndexSet act{0, 1};
    const Matrix Z = d.Z(act);
    const Vector r = d.y();
    CHECK((Z.transpose() * r - d.Zt_times(act, r)).cwiseAbs().maxCoeff() <= 1e-12);
    const Vector u = Vector::LinSpaced(Z.cols(), -1.0, 2.0);
    CHECK((Z * u - d.Z_times(act, u)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Z.transpose() * Z - d.ZtZ(act)).cwiseAbs().maxCoeff() <= 1e-12);
    const Matrix& A = *d.effect(0).relationship;
    CHECK((d.relationship_inverse(0) * A - Matrix::Identity(A.rows(), A.cols())).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(d.relationship_log_det(0) == doctest::Approx(std::log(A.determinant())).epsilon(1e-10));
}

TEST_CASE("restriction remaps covariate columns") {
    auto inst = testing::random_instance(13);
    const auto r = inst.data.restrict({0, 1, 4}, {1}, true);
    CHECK(r.p() == 3);
    CHECK(r.q() == 1);
    REQUIRE(r.effect(0).covariate_column.has_value());
    CHECK(*r.effect(0).covariate_column == 1);
    CHECK(r.unpenalized_base() == IndexSet{0, 1, 2});
    const auto dropped = inst.data.restrict({0, 4}, {1}, false);
    CHECK_FALSE(dropped.effect(0).covariate_column.has_value());
    CHECK(inst.data.without_effects().q() == 0);
}

TEST_CASE("data validation") {
    Vector y = Vector::Ones(4);
    Matrix X = Matrix::Ones(3, 1);
    CHECK_THROWS_AS(MixedModelData(y, X, {}), DimensionError);
    RandomEffectSpec e;
    e.factor = GroupingFactor({0, 1, 0}, 2);
    CHECK_THROWS_AS(MixedModelData(y, Matrix::Ones(4, 1), {e}), DimensionError);
    e.factor = GroupingFactor({0, 1, 0, 1}, 2);
    e.relationship = Matrix::Identity(3, 3);
    CHECK_THROWS_AS(MixedModelData(y, Matrix::Ones(4, 1), {e}), DimensionError);
}
