#include "lmmsel/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lmmsel/errors.hpp"

namespace lmmsel {

namespace {
thread_local std::size_t largest_seen = 0;
}

FactorizationProbe::FactorizationProbe() : saved_(largest_seen) { largest_seen = 0; }

FactorizationProbe::~FactorizationProbe() { largest_seen = std::max(saved_, largest_seen); }

std::size_t FactorizationProbe::largest() const { return largest_seen; }

void note_factorization(std::size_t dim) { largest_seen = std::max(largest_seen, dim); }

Eigen::LLT<Eigen::MatrixXd> factorize_spd(const Eigen::MatrixXd& a, const char* what) {
    note_factorization(static_cast<std::size_t>(a.rows()));
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success || !a.allFinite()) {
        const Eigen::VectorXd d = a.diagonal();
        double cond = 0.0;
        if (d.size() > 0 && d.minCoeff() > 0.0) cond = d.maxCoeff() / d.minCoeff();
        throw NumericError(std::string(what) + ": matrix is not positive definite", cond);
    }
    return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const auto& l = llt.matrixLLT();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
    return 2.0 * acc;
}

}  // namespace lmmsel
