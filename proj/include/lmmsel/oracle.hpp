#pragma once

// Known-variance reference computations. Everything here works with the
// dense n x n marginal covariance that the ECM path never forms; these
// routines exist to check that path and for small-n validation.

#include <Eigen/Dense>

#include "lmmsel/blup.hpp"
#include "lmmsel/model.hpp"
#include "lmmsel/penalized_ls.hpp"

namespace lmmsel {

/// V = sum_k sigma_k^2 Z_k A_k Z_k' + sigma_e^2 I_n with its Cholesky factor.
struct MarginalCovariance {
    Matrix V;
    Eigen::LLT<Matrix> factor;

    double log_det() const;
};

MarginalCovariance marginal_covariance(const MixedModelData& data, const Variances& variances);

/// argmin_beta (y - X beta)' V^{-1} (y - X beta) + lambda sum_j w_j |beta_j|,
/// by whitening with the Cholesky factor of V and running lasso_cd.
///
/// In every function below that takes a penalty config, the exempt set is
/// penalty.unpenalized plus the data's base exemptions plus the generating
/// columns of effects with nonzero variance.
Vector gls_lasso(const MixedModelData& data, const Variances& variances, double lambda,
                 const SelectorConfig& base = {});

/// Max elementwise |W - V^{-1}| with W = R^{-1} - R^{-1} Z (Z'R^{-1}Z + G^{-1})^{-1} Z' R^{-1}.
double w_identity_check(const MixedModelData& data, const Variances& variances);

/// h(u(beta), beta) with h(u, beta) = (y - X beta - Z u)' R^{-1} (y - X beta - Z u)
/// + u' G^{-1} u + lambda sum_j w_j |beta_j| and u(beta) the minimizer in u.
/// Computed densely from the complete-data side.
double profiled_objective(const MixedModelData& data, const Variances& variances, const Vector& beta,
                          double lambda, const SelectorConfig& penalty = {});

/// (y - X beta)' V^{-1} (y - X beta) + lambda sum_j w_j |beta_j| with dense V.
double gls_objective(const MixedModelData& data, const Variances& variances, const Vector& beta, double lambda,
                     const SelectorConfig& penalty = {});

/// log|V| + (y - X beta)' V^{-1} (y - X beta) + lambda sum_j w_j |beta_j| + n log(2 pi),
/// evaluated with dense V.
double dense_neg2_penalized_marginal(const MixedModelData& data, const Variances& variances, const Vector& beta,
                                     double lambda, const SelectorConfig& penalty = {});

/// Largest KKT violation of the GLS lasso problem, in gradient units:
/// 2 X_j' V^{-1}(y - X beta) must lie in lambda w_j d|beta_j|.
double gls_kkt_violation(const MixedModelData& data, const Variances& variances, const Vector& beta,
                         double lambda, const SelectorConfig& penalty = {});

}  // namespace lmmsel
