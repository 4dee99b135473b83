#include "lmmsel/ecm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>

#include "lmmsel/linalg.hpp"

namespace lmmsel {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double population_variance(const Vector& y) {
    if (y.size() == 0) return 0.0;
    return (y.array() - y.mean()).square().mean();
}

double weighted_l1(const Vector& beta, const Vector& weights) {
    return (beta.cwiseAbs().array() * weights.array()).sum();
}

}  // namespace

Variances ParameterState::variances() const {
    Variances v{std::vector<double>(sigma2.size(), 0.0), sigma2_e};
    for (std::size_t k : active) v.effect[k] = sigma2[k];
    return v;
}

void ParameterState::validate(const MixedModelData& data) const {
    if (static_cast<std::size_t>(beta.size()) != data.p()) throw DimensionError("state: beta length must equal p");
    if (sigma2.size() != data.q()) throw DimensionError("state: one variance slot per effect is required");
    if (!(sigma2_e > 0.0) || !std::isfinite(sigma2_e)) throw NumericError("state: sigma_e^2 must be positive");
    for (std::size_t k : active) {
        if (k >= data.q()) throw DimensionError("state: active effect out of range");
        if (!(sigma2[k] > 0.0) || !std::isfinite(sigma2[k]))
            throw NumericError("state: active effect variance must be positive");
    }
}

void EcmConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!(tol_beta > 0.0) || !(tol_u > 0.0) || !(tol_loglik > 0.0)) throw ConfigError("tolerances must be > 0");
    if (!(delete_ratio > 0.0)) throw ConfigError("delete_ratio must be > 0");
    if (max_iter == 0) throw ConfigError("max_iter must be >= 1");
}

std::size_t EcmConfig::effective_support_cap(const MixedModelData& data) const {
    if (support_cap) return *support_cap;
    return std::min(data.n() > 0 ? data.n() - 1 : 0, data.p());
}

Vector penalty_weights(const MixedModelData& data, const IndexSet& active, const Vector& weights) {
    Vector w = weights.size() == 0 ? Vector::Ones(static_cast<Eigen::Index>(data.p())) : weights;
    for (std::size_t j : data.exempt_columns(active)) w(static_cast<Eigen::Index>(j)) = 0.0;
    return w;
}

// ---------------------------------------------------------------------------

double marginal_loglik_part(const MixedModelData& data, const ParameterState& state) {
    const double n = static_cast<double>(data.n());
    const Vector r = data.y() - data.X() * state.beta;
    const double rr = r.squaredNorm();
    if (state.active.empty()) return n * std::log(state.sigma2_e) + rr / state.sigma2_e;

    const HendersonSystem system(data, state.gamma());
    const double N = static_cast<double>(system.dim());
    double log_det_v = (n - N) * std::log(state.sigma2_e) + system.log_det();
    for (std::size_t k : state.active)
        log_det_v += static_cast<double>(data.level_count(k)) * std::log(state.sigma2[k]) + data.relationship_log_det(k);
    const Vector ztr = data.Zt_times(state.active, r);
    const double quad = (rr - ztr.dot(system.solve(ztr))) / state.sigma2_e;
    return log_det_v + quad;
}

double neg2_penalized_marginal(const MixedModelData& data, const ParameterState& state, double lambda,
                               const Vector& weights) {
    const Vector w = weights.size() == 0 ? penalty_weights(data, state.active) : weights;
    return marginal_loglik_part(data, state) + lambda * weighted_l1(state.beta, w) +
           static_cast<double>(data.n()) * kLog2Pi;
}

double neg2_complete_loglik(const MixedModelData& data, const ParameterState& state, const BlupResult& blup) {
    const double n = static_cast<double>(data.n());
    Vector e = data.y() - data.X() * state.beta;
    if (!blup.effects.empty()) e -= data.Z_times(blup.effects, blup.u);
    double acc = n * kLog2Pi + n * std::log(state.sigma2_e) + e.squaredNorm() / state.sigma2_e;
    for (std::size_t k : blup.effects) {
        const double nk = static_cast<double>(data.level_count(k));
        acc += nk * kLog2Pi + nk * std::log(state.sigma2[k]) + data.relationship_log_det(k) +
               weighted_square_norm(data, k, blup.block(k)) / state.sigma2[k];
    }
    return acc;
}

// ---------------------------------------------------------------------------

ParameterState initialize(const MixedModelData& data, const EcmConfig& cfg, Selector& selector) {
    SelectorConfig lin = cfg.selector_config;
    lin.lambda = cfg.lambda;
    lin.unpenalized = set_union(make_index_set(lin.unpenalized), data.exempt_columns(data.all_effects()));
    const auto outcome = selector.select(data.X(), data.y(), 1.0, lin, Vector::Zero(static_cast<Eigen::Index>(data.p())));
    const std::size_t cap = cfg.effective_support_cap(data);
    if (outcome.support.size() > cap) throw SupportCapError(outcome.support.size(), cap);

    const double n = static_cast<double>(data.n());
    double s2 = (data.y() - data.X() * outcome.beta).squaredNorm() / n;
    s2 = std::max(s2, cfg.sigma2_floor * population_variance(data.y()));
    if (!(s2 > 0.0)) throw NumericError("initial residual variance is zero (constant response)");

    ParameterState state;
    state.beta = outcome.beta;
    state.active = data.all_effects();
    state.sigma2.assign(data.q(), 0.0);
    if (data.q() > 0) {
        for (std::size_t k = 0; k < data.q(); ++k) state.sigma2[k] = 0.4 / static_cast<double>(data.q()) * s2;
        state.sigma2_e = 0.6 * s2;
    } else {
        state.sigma2_e = s2;
    }
    return state;
}

ParameterState initialize(const MixedModelData& data, const EcmConfig& cfg) {
    auto selector = make_selector(cfg.selector);
    selector->prepare(data.X(), data.y());
    return initialize(data, cfg, *selector);
}

StepResult ecm_step(const MixedModelData& data, const ParameterState& state, const EcmConfig& cfg,
                    Selector& selector) {
    const IndexSet& active = state.active;
    const double n = static_cast<double>(data.n());
    const double s2e = state.sigma2_e;

    StepResult out;
    out.diagnostics.unpenalized = data.exempt_columns(active);

    SelectorConfig sel = cfg.selector_config;
    sel.lambda = cfg.lambda;
    sel.unpenalized = set_union(make_index_set(sel.unpenalized), out.diagnostics.unpenalized);

    // (1) E-step with Gamma^[t], beta^[t].
    std::shared_ptr<const HendersonSystem> system;
    Vector working = data.y();
    if (!active.empty()) {
        system = std::make_shared<const HendersonSystem>(data, state.gamma());
        const BlupResult half = henderson_solve(system, data, state.beta);
        working -= data.Z_times(active, half.u);
    }

    // (2) M-step for beta on the working response.
    const auto outcome = selector.select(data.X(), working, s2e, sel, state.beta);
    const std::size_t cap = cfg.effective_support_cap(data);
    if (outcome.support.size() > cap) throw SupportCapError(outcome.support.size(), cap);
    out.diagnostics.support_size = outcome.support.size();
    out.diagnostics.selector_passes = outcome.passes;

    ParameterState next = state;
    next.beta = outcome.beta;

    // (3) E-step with Gamma^[t], beta^[t+1]; (4) variance M-step.
    if (!active.empty()) {
        out.blup = henderson_solve(system, data, next.beta);
        if (!cfg.freeze_variances) {
            for (std::size_t b = 0; b < active.size(); ++b) {
                const std::size_t k = active[b];
                const double nk = static_cast<double>(data.level_count(k));
                const Vector uk = out.blup.block(k);
                next.sigma2[k] = (weighted_square_norm(data, k, uk) + out.blup.trace_T_weighted[b] * s2e) / nk;
            }
            const Vector e = data.y() - data.X() * next.beta - data.Z_times(active, out.blup.u);
            next.sigma2_e = (e.squaredNorm() + out.blup.conditional_trace * s2e) / n;
        }
    } else if (!cfg.freeze_variances) {
        next.sigma2_e = (data.y() - data.X() * next.beta).squaredNorm() / n;
    }
    if (!(next.sigma2_e > 0.0) || !std::isfinite(next.sigma2_e)) throw NumericError("residual variance collapsed");
    for (std::size_t k : active)
        if (!(next.sigma2[k] > 0.0) || !std::isfinite(next.sigma2[k]))
            throw NumericError("random-effect variance left the parameter space");

    out.diagnostics.complete_loglik = neg2_complete_loglik(data, next, out.blup);

    // (4c) deletion, all qualifying effects at once.
    if (cfg.allow_deletion && !cfg.freeze_variances) {
        for (std::size_t k : active) {
            const double nk = static_cast<double>(data.level_count(k));
            if (weighted_square_norm(data, k, out.blup.block(k)) / nk < cfg.delete_ratio * s2e)
                out.diagnostics.deleted.push_back(k);
        }
        if (!out.diagnostics.deleted.empty()) {
            IndexSet kept;
            for (std::size_t k : active)
                if (!contains(out.diagnostics.deleted, k)) kept.push_back(k);
                else next.sigma2[k] = 0.0;
            next.active = std::move(kept);
        }
    }
    out.state = std::move(next);
    return out;
}

FitResult fit(const MixedModelData& data, const EcmConfig& cfg) {
    cfg.validate();
    auto selector = make_selector(cfg.selector);
    selector->prepare(data.X(), data.y());

    ParameterState state = cfg.start ? *cfg.start : initialize(data, cfg, *selector);
    state.validate(data);

    Vector base_weights = selector->penalty_weights(data.p());
    if (cfg.selector_config.weights.size() != 0) base_weights = base_weights.cwiseProduct(cfg.selector_config.weights);
    for (std::size_t j : cfg.selector_config.unpenalized) base_weights(static_cast<Eigen::Index>(j)) = 0.0;
    auto objective = [&](const ParameterState& s) {
        return neg2_penalized_marginal(data, s, cfg.lambda, penalty_weights(data, s.active, base_weights));
    };

    FitResult res;
    res.lambda = cfg.lambda;
    res.selector = selector->name();

    FactorizationProbe probe;
    res.trajectory.push_back(objective(state));

    std::map<std::size_t, Vector> prev_u;
    double prev_loglik = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t t = 0; t < cfg.max_iter; ++t) {
        StepResult step = ecm_step(data, state, cfg, *selector);
        res.iterations = t + 1;
        res.exemptions.push_back(step.diagnostics.unpenalized);
        const bool deleted = !step.diagnostics.deleted.empty();
        for (std::size_t k : step.diagnostics.deleted) res.deleted.push_back({k, t + 1});
        res.deletion_after.push_back(deleted ? 1 : 0);

        const double dbeta = (step.state.beta - state.beta).squaredNorm();
        bool u_ok = true;
        std::map<std::size_t, Vector> cur_u;
        for (std::size_t k : step.state.active) {
            Vector uk = step.blup.block(k);
            auto it = prev_u.find(k);
            if (it == prev_u.end() || (uk - it->second).squaredNorm() >= cfg.tol_u) u_ok = false;
            cur_u.emplace(k, std::move(uk));
        }
        const double dl = step.diagnostics.complete_loglik - prev_loglik;
        const bool l_ok = std::isfinite(dl) && dl * dl < cfg.tol_loglik;

        state = std::move(step.state);
        prev_u = std::move(cur_u);
        prev_loglik = step.diagnostics.complete_loglik;
        res.trajectory.push_back(objective(state));

        if (!deleted && t > 0 && dbeta < cfg.tol_beta && u_ok && l_ok) {
            res.converged = true;
            break;
        }
    }
    res.reason = res.converged ? "converged" : "max_iter reached";

    if (!state.active.empty()) res.blup = henderson_solve(data, state.gamma(), state.beta);
    res.max_factorized_dim = probe.largest();
    res.support = support_of(state.beta);
    res.objective = res.trajectory.back();
    res.state = std::move(state);
    return res;
}

FitResult refit(const MixedModelData& data, const IndexSet& support, const IndexSet& active, const EcmConfig& base) {
    if (support.size() + data.total_levels(active) >= data.n())
        throw ConfigError("refit needs |support| + N < n");
    const MixedModelData sub = data.restrict(support, active, true);
    if (!support.empty()) {
        Eigen::ColPivHouseholderQR<Matrix> qr(sub.X());
        if (static_cast<std::size_t>(qr.rank()) < support.size())
            throw RankError("restricted design is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                            std::to_string(support.size()) + ")");
    }
    EcmConfig cfg = base;
    cfg.lambda = 0.0;
    cfg.selector = "lasso";
    cfg.allow_deletion = false;
    cfg.freeze_variances = false;
    cfg.start.reset();
    cfg.support_cap.reset();
    cfg.selector_config.weights = Vector();
    cfg.selector_config.unpenalized.clear();

    FitResult local = fit(sub, cfg);

    FitResult out = local;
    out.state.beta = Vector::Zero(static_cast<Eigen::Index>(data.p()));
    for (std::size_t c = 0; c < support.size(); ++c)
        out.state.beta(static_cast<Eigen::Index>(support[c])) = local.state.beta(static_cast<Eigen::Index>(c));
    out.state.sigma2.assign(data.q(), 0.0);
    out.state.active.clear();
    for (std::size_t c : local.state.active) {
        out.state.sigma2[active[c]] = local.state.sigma2[c];
        out.state.active.push_back(active[c]);
    }
    for (auto& k : out.blup.effects) k = active[k];
    out.blup.system.reset();  // bound to the restricted data
    out.support = support_of(out.state.beta);
    out.exemptions.clear();
    return out;
}

}  // namespace lmmsel
