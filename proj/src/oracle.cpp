#include "lmmsel/oracle.hpp"

#include <cmath>
#include <numbers>

#include "lmmsel/linalg.hpp"

namespace lmmsel {

namespace {

SelectorConfig with_exemptions(const MixedModelData& data, const Variances& variances, SelectorConfig cfg) {
    cfg.unpenalized = set_union(make_index_set(cfg.unpenalized), data.exempt_columns(variances.active()));
    return cfg;
}

double penalty_term(const Vector& beta, double lambda, const SelectorConfig& cfg) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) acc += cfg.weight(static_cast<std::size_t>(j)) * std::abs(beta(j));
    return lambda * acc;
}

void check_variances(const MixedModelData& data, const Variances& variances) {
    if (variances.effect.size() != data.q()) throw DimensionError("one variance per random effect is required");
    if (!(variances.residual > 0.0)) throw ConfigError("residual variance must be > 0");
    for (double s : variances.effect)
        if (!(s >= 0.0)) throw ConfigError("effect variances must be >= 0");
}

}  // namespace

double MarginalCovariance::log_det() const { return lmmsel::log_det(factor); }

MarginalCovariance marginal_covariance(const MixedModelData& data, const Variances& variances) {
    check_variances(data, variances);
    const auto n = static_cast<Eigen::Index>(data.n());
    MarginalCovariance out;
    out.V = variances.residual * Matrix::Identity(n, n);
    for (std::size_t k : variances.active()) {
        const Matrix Zk = data.incidence(k);
        if (data.has_relationship(k))
            out.V.noalias() += variances.effect[k] * (Zk * (*data.effect(k).relationship) * Zk.transpose());
        else
            out.V.noalias() += variances.effect[k] * (Zk * Zk.transpose());
    }
    out.factor = factorize_spd(out.V, "marginal covariance");
    return out;
}

Vector gls_lasso(const MixedModelData& data, const Variances& variances, double lambda, const SelectorConfig& base) {
    const auto cov = marginal_covariance(data, variances);
    const auto& L = cov.factor.matrixL();
    const Matrix Xw = L.solve(data.X());
    const Vector yw = L.solve(data.y());
    SelectorConfig cfg = with_exemptions(data, variances, base);
    cfg.lambda = lambda;
    return lasso_cd(Xw, yw, 1.0, cfg).beta;
}

double w_identity_check(const MixedModelData& data, const Variances& variances) {
    check_variances(data, variances);
    const auto n = static_cast<Eigen::Index>(data.n());
    const double rinv = 1.0 / variances.residual;
    const IndexSet active = variances.active();
    const auto cov = marginal_covariance(data, variances);
    const Matrix Vinv = cov.factor.solve(Matrix::Identity(n, n));

    Matrix W = rinv * Matrix::Identity(n, n);
    if (!active.empty()) {
        const Matrix Z = data.Z(active);
        const auto N = Z.cols();
        Matrix Ginv = Matrix::Zero(N, N);
        Eigen::Index o = 0;
        for (std::size_t k : active) {
            const auto s = static_cast<Eigen::Index>(data.level_count(k));
            if (data.has_relationship(k))
                Ginv.block(o, o, s, s) = data.relationship_inverse(k) / variances.effect[k];
            else
                Ginv.diagonal().segment(o, s).setConstant(1.0 / variances.effect[k]);
            o += s;
        }
        const Matrix M = rinv * Z.transpose() * Z + Ginv;
        const auto llt = factorize_spd(M, "Z'R^-1 Z + G^-1");
        W -= (rinv * rinv) * (Z * llt.solve(Z.transpose()));
    }
    return (W - Vinv).cwiseAbs().maxCoeff();
}

double profiled_objective(const MixedModelData& data, const Variances& variances, const Vector& beta, double lambda,
                          const SelectorConfig& penalty) {
    check_variances(data, variances);
    const SelectorConfig cfg = with_exemptions(data, variances, penalty);
    const double rinv = 1.0 / variances.residual;
    const IndexSet active = variances.active();
    const Vector r = data.y() - data.X() * beta;
    if (active.empty()) return rinv * r.squaredNorm() + penalty_term(beta, lambda, cfg);

    const Matrix Z = data.Z(active);
    const auto N = Z.cols();
    Matrix Ginv = Matrix::Zero(N, N);
    Eigen::Index o = 0;
    for (std::size_t k : active) {
        const auto s = static_cast<Eigen::Index>(data.level_count(k));
        if (data.has_relationship(k))
            Ginv.block(o, o, s, s) = data.relationship_inverse(k) / variances.effect[k];
        else
            Ginv.diagonal().segment(o, s).setConstant(1.0 / variances.effect[k]);
        o += s;
    }
    const Matrix M = rinv * Z.transpose() * Z + Ginv;
    const Vector u = factorize_spd(M, "Z'R^-1 Z + G^-1").solve(rinv * Z.transpose() * r);
    const Vector e = r - Z * u;
    return rinv * e.squaredNorm() + u.dot(Ginv * u) + penalty_term(beta, lambda, cfg);
}

double gls_objective(const MixedModelData& data, const Variances& variances, const Vector& beta, double lambda,
                     const SelectorConfig& penalty) {
    const auto cov = marginal_covariance(data, variances);
    const SelectorConfig cfg = with_exemptions(data, variances, penalty);
    const Vector r = data.y() - data.X() * beta;
    return r.dot(cov.factor.solve(r)) + penalty_term(beta, lambda, cfg);
}

double dense_neg2_penalized_marginal(const MixedModelData& data, const Variances& variances, const Vector& beta,
                                     double lambda, const SelectorConfig& penalty) {
    const auto cov = marginal_covariance(data, variances);
    const SelectorConfig cfg = with_exemptions(data, variances, penalty);
    const Vector r = data.y() - data.X() * beta;
    return cov.log_det() + r.dot(cov.factor.solve(r)) + penalty_term(beta, lambda, cfg) +
           static_cast<double>(data.n()) * std::log(2.0 * std::numbers::pi);
}

double gls_kkt_violation(const MixedModelData& data, const Variances& variances, const Vector& beta, double lambda,
                         const SelectorConfig& penalty) {
    const auto cov = marginal_covariance(data, variances);
    const SelectorConfig cfg = with_exemptions(data, variances, penalty);
    const Vector grad = 2.0 * (data.X().transpose() * cov.factor.solve(data.y() - data.X() * beta));
    double worst = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double t = lambda * cfg.weight(static_cast<std::size_t>(j));
        double v;
        if (beta(j) != 0.0)
            v = std::abs(grad(j) - t * (beta(j) > 0.0 ? 1.0 : -1.0));
        else
            v = std::max(0.0, std::abs(grad(j)) - t);
        worst = std::max(worst, v);
    }
    return worst;
}

}  // namespace lmmsel
