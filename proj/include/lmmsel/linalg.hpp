#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace lmmsel {

/// Tracks the largest matrix factorized by the current thread while the
/// probe is alive. Probes nest; an outer probe sees everything an inner
/// one saw.
class FactorizationProbe {
public:
    FactorizationProbe();
    ~FactorizationProbe();
    FactorizationProbe(const FactorizationProbe&) = delete;
    FactorizationProbe& operator=(const FactorizationProbe&) = delete;

    std::size_t largest() const;

private:
    std::size_t saved_;
};

void note_factorization(std::size_t dim);

/// Cholesky of a symmetric positive-definite matrix; throws NumericError
/// (with a cheap condition estimate) when the factorization fails.
Eigen::LLT<Eigen::MatrixXd> factorize_spd(const Eigen::MatrixXd& a, const char* what);

/// log|A| from a Cholesky factor.
double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt);

}  // namespace lmmsel
