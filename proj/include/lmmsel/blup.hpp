#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "lmmsel/model.hpp"

namespace lmmsel {

/// Variance ratios gamma_k = sigma_e^2 / sigma_k^2 for the active effects.
/// The Gamma block of effect k is gamma_k * I, or gamma_k * A_k^{-1} when
/// the effect carries a relationship matrix.
struct GammaMatrix {
    IndexSet effects;
    std::vector<double> ratio;  // aligned with effects

    static GammaMatrix from_variances(const IndexSet& effects, const std::vector<double>& sigma2,
                                      double sigma2_e);
};

/// Factorized Henderson system C = Z'Z + Gamma for one active set. Built once
/// per ECM iteration and shared by both E-steps of that iteration.
class HendersonSystem {
public:
    HendersonSystem(const MixedModelData& data, GammaMatrix gamma);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(inverse_.rows()); }
    const GammaMatrix& gamma() const noexcept { return gamma_; }
    const IndexSet& effects() const noexcept { return gamma_.effects; }

    /// Offset and size of block `local` (position in effects()).
    std::size_t offset(std::size_t local) const { return offsets_.at(local); }
    std::size_t block_size(std::size_t local) const { return sizes_.at(local); }

    /// C^{-1} rhs.
    Vector solve(const Vector& rhs) const;

    /// u = C^{-1} Z' r.
    Vector blup(const Vector& residual) const;

    /// tr(T_kk) and tr(T_kk A_k^{-1}) (equal without a relationship matrix).
    double trace_block(std::size_t local) const { return trace_T_.at(local); }
    double trace_block_weighted(std::size_t local) const { return trace_TA_.at(local); }

    /// tr(Z C^{-1} Z') = N - sum_k gamma_k tr(T_kk A_k^{-1}).
    double conditional_trace() const;

    /// log|C|.
    double log_det() const noexcept { return log_det_; }

    const Matrix& inverse() const noexcept { return inverse_; }

private:
    const MixedModelData* data_;
    GammaMatrix gamma_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> sizes_;
    Eigen::LLT<Matrix> llt_;
    Matrix inverse_;
    std::vector<double> trace_T_;
    std::vector<double> trace_TA_;
    double log_det_ = 0.0;
};

struct BlupResult {
    IndexSet effects;                 // effects the blocks of u belong to
    std::vector<std::size_t> offsets;  // block start of each effect in u
    std::vector<std::size_t> sizes;    // N_k of each effect
    Vector u;
    std::vector<double> trace_T;
    std::vector<double> trace_T_weighted;
    double conditional_trace = 0.0;
    std::shared_ptr<const HendersonSystem> system;

    /// Block u_k for global effect index k; empty if k is not in effects.
    Vector block(std::size_t k) const;
};

BlupResult henderson_solve(std::shared_ptr<const HendersonSystem> system, const MixedModelData& data,
                           const Vector& beta);

BlupResult henderson_solve(const MixedModelData& data, const GammaMatrix& gamma, const Vector& beta);

/// Variance components for the data's effects; an effect with variance 0 is
/// treated as absent.
struct Variances {
    std::vector<double> effect;
    double residual = 1.0;

    IndexSet active() const;
};

/// Independent BLUP route through the marginal covariance:
/// u = G Z' V^{-1} (y - X beta), using a dense n x n factorization. Entries of
/// absent effects are not returned (u covers Variances::active() only).
Vector blup_marginal_oracle(const MixedModelData& data, const Variances& variances, const Vector& beta);

/// u_k' A_k^{-1} u_k, or ||u_k||^2 without a relationship matrix.
double weighted_square_norm(const MixedModelData& data, std::size_t k, const Vector& uk);

}  // namespace lmmsel
