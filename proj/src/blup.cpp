#include "lmmsel/blup.hpp"

#include <cmath>
#include <string>

#include "lmmsel/linalg.hpp"
#include "lmmsel/oracle.hpp"

namespace lmmsel {

GammaMatrix GammaMatrix::from_variances(const IndexSet& effects, const std::vector<double>& sigma2,
                                        double sigma2_e) {
    GammaMatrix g{effects, {}};
    for (std::size_t k : effects) {
        if (!(sigma2.at(k) > 0.0)) throw NumericError("active effect with non-positive variance");
        g.ratio.push_back(sigma2_e / sigma2[k]);
    }
    return g;
}

HendersonSystem::HendersonSystem(const MixedModelData& data, GammaMatrix gamma)
    : data_(&data), gamma_(std::move(gamma)) {
    if (gamma_.effects.size() != gamma_.ratio.size()) throw DimensionError("gamma ratios do not match effects");
    std::size_t offset = 0;
    for (std::size_t k : gamma_.effects) {
        offsets_.push_back(offset);
        sizes_.push_back(data.level_count(k));
        offset += data.level_count(k);
    }
    Matrix C = data.ZtZ(gamma_.effects);
    for (std::size_t b = 0; b < gamma_.effects.size(); ++b) {
        const double g = gamma_.ratio[b];
        if (!(g > 0.0) || !std::isfinite(g)) throw NumericError("gamma ratio must be finite and positive");
        const auto o = static_cast<Eigen::Index>(offsets_[b]);
        const auto s = static_cast<Eigen::Index>(sizes_[b]);
        const std::size_t k = gamma_.effects[b];
        if (data.has_relationship(k))
            C.block(o, o, s, s) += g * data.relationship_inverse(k);
        else
            C.diagonal().segment(o, s).array() += g;
    }
    llt_ = factorize_spd(C, "Henderson system");
    log_det_ = lmmsel::log_det(llt_);
    inverse_ = llt_.solve(Matrix::Identity(C.rows(), C.cols()));

    for (std::size_t b = 0; b < gamma_.effects.size(); ++b) {
        const auto o = static_cast<Eigen::Index>(offsets_[b]);
        const auto s = static_cast<Eigen::Index>(sizes_[b]);
        const std::size_t k = gamma_.effects[b];
        const double tr = inverse_.diagonal().segment(o, s).sum();
        trace_T_.push_back(tr);
        if (data.has_relationship(k))
            trace_TA_.push_back(inverse_.block(o, o, s, s).cwiseProduct(data.relationship_inverse(k)).sum());
        else
            trace_TA_.push_back(tr);
    }
}

Vector HendersonSystem::solve(const Vector& rhs) const { return llt_.solve(rhs); }

Vector HendersonSystem::blup(const Vector& residual) const {
    return llt_.solve(data_->Zt_times(gamma_.effects, residual));
}

double HendersonSystem::conditional_trace() const {
    double acc = static_cast<double>(dim());
    for (std::size_t b = 0; b < gamma_.effects.size(); ++b) acc -= gamma_.ratio[b] * trace_TA_[b];
    return acc;
}

Vector BlupResult::block(std::size_t k) const {
    for (std::size_t b = 0; b < effects.size(); ++b)
        if (effects[b] == k) {
            const auto o = static_cast<Eigen::Index>(offsets[b]);
            const auto s = static_cast<Eigen::Index>(sizes[b]);
            return u.segment(o, s);
        }
    return {};
}

BlupResult henderson_solve(std::shared_ptr<const HendersonSystem> system, const MixedModelData& data,
                           const Vector& beta) {
    BlupResult out;
    out.effects = system->effects();
    for (std::size_t b = 0; b < out.effects.size(); ++b) {
        out.offsets.push_back(system->offset(b));
        out.sizes.push_back(system->block_size(b));
        out.trace_T.push_back(system->trace_block(b));
        out.trace_T_weighted.push_back(system->trace_block_weighted(b));
    }
    const Vector r = data.y() - data.X() * beta;
    out.u = system->blup(r);
    out.conditional_trace = system->conditional_trace();
    out.system = std::move(system);
    return out;
}

BlupResult henderson_solve(const MixedModelData& data, const GammaMatrix& gamma, const Vector& beta) {
    if (gamma.effects.empty()) throw ConfigError("henderson_solve needs at least one active effect");
    return henderson_solve(std::make_shared<const HendersonSystem>(data, gamma), data, beta);
}

IndexSet Variances::active() const {
    IndexSet out;
    for (std::size_t k = 0; k < effect.size(); ++k)
        if (effect[k] > 0.0) out.push_back(k);
    return out;
}

Vector blup_marginal_oracle(const MixedModelData& data, const Variances& variances, const Vector& beta) {
    const auto cov = marginal_covariance(data, variances);
    const Vector r = data.y() - data.X() * beta;
    const Vector vinv_r = cov.factor.solve(r);
    const IndexSet active = variances.active();
    Vector u(static_cast<Eigen::Index>(data.total_levels(active)));
    Eigen::Index offset = 0;
    for (std::size_t k : active) {
        const Matrix Zk = data.incidence(k);
        Vector uk = Zk.transpose() * vinv_r;
        if (data.has_relationship(k)) uk = (*data.effect(k).relationship) * uk;
        u.segment(offset, uk.size()) = variances.effect[k] * uk;
        offset += uk.size();
    }
    return u;
}

double weighted_square_norm(const MixedModelData& data, std::size_t k, const Vector& uk) {
    if (data.has_relationship(k)) return uk.dot(data.relationship_inverse(k) * uk);
    return uk.squaredNorm();
}

}  // namespace lmmsel
