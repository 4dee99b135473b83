#include "lmmsel/penalized_ls.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include "lmmsel/linalg.hpp"

namespace lmmsel {

void SelectorConfig::validate(std::size_t p) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (weights.size() != 0) {
        if (static_cast<std::size_t>(weights.size()) != p) throw DimensionError("weight vector length must equal p");
        for (Eigen::Index j = 0; j < weights.size(); ++j)
            if (!(weights(j) >= 0.0) || !std::isfinite(weights(j)))
                throw ConfigError("penalty weights must be finite and >= 0");
    }
    for (std::size_t j : unpenalized)
        if (j >= p) throw DimensionError("unpenalized index out of range");
    if (!(cd_tol > 0.0)) throw ConfigError("cd_tol must be > 0");
    if (cd_max_pass == 0) throw ConfigError("cd_max_pass must be >= 1");
}

double SelectorConfig::weight(std::size_t j) const {
    if (contains(unpenalized, j)) return 0.0;
    return weights.size() == 0 ? 1.0 : weights(static_cast<Eigen::Index>(j));
}

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double penalized_objective(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                           const Vector& beta) {
    double pen = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta(j) != 0.0) pen += cfg.weight(static_cast<std::size_t>(j)) * std::abs(beta(j));
    return (r - X * beta).squaredNorm() + cfg.lambda * sigma_e2 * pen;
}

double kkt_residual(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                    const Vector& beta) {
    const Vector grad = 2.0 * (X.transpose() * (r - X * beta));
    double worst = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double s = X.col(j).squaredNorm();
        if (s == 0.0) continue;
        const double t = cfg.lambda * sigma_e2 * cfg.weight(static_cast<std::size_t>(j));
        double v;
        if (beta(j) != 0.0)
            v = std::abs(grad(j) - t * (beta(j) > 0.0 ? 1.0 : -1.0));
        else
            v = std::max(0.0, std::abs(grad(j)) - t);
        worst = std::max(worst, v / (2.0 * s));
    }
    return worst;
}

IndexSet support_of(const Vector& beta) {
    IndexSet s;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta(j) != 0.0) s.push_back(static_cast<std::size_t>(j));
    return s;
}

// ---------------------------------------------------------------------------

LassoSolver::LassoSolver(const Matrix& X)
    : X_(&X),
      col_sq_(X.colwise().squaredNorm().transpose()),
      gram_(static_cast<std::size_t>(X.cols())),
      have_gram_(static_cast<std::size_t>(X.cols()), 0) {}

const Vector& LassoSolver::gram_column(std::size_t j) {
    if (!have_gram_[j]) {
        gram_[j] = X_->transpose() * X_->col(static_cast<Eigen::Index>(j));
        have_gram_[j] = 1;
    }
    return gram_[j];
}

SelectorOutcome LassoSolver::solve(const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                                   const std::optional<Vector>& warm) {
    const Matrix& X = *X_;
    const auto p = static_cast<std::size_t>(X.cols());
    cfg.validate(p);
    if (r.size() != X.rows()) throw DimensionError("response length does not match X");
    if (!(sigma_e2 > 0.0)) throw ConfigError("sigma_e2 must be > 0");

    Vector beta = warm ? *warm : Vector::Zero(X.cols());
    if (static_cast<std::size_t>(beta.size()) != p) throw DimensionError("warm start length must equal p");

    std::vector<double> thr(p);
    for (std::size_t j = 0; j < p; ++j) thr[j] = 0.5 * cfg.lambda * sigma_e2 * cfg.weight(j);

    // Cold start with unpenalized columns: solve that block exactly first, so
    // that lambda >= lambda_max returns exact zeros on the penalized part.
    bool penalized_all_zero = true;
    for (std::size_t j = 0; j < p; ++j)
        if (thr[j] > 0.0 && beta(static_cast<Eigen::Index>(j)) != 0.0) penalized_all_zero = false;
    if (penalized_all_zero && !cfg.unpenalized.empty()) {
        Matrix XU(X.rows(), static_cast<Eigen::Index>(cfg.unpenalized.size()));
        for (std::size_t c = 0; c < cfg.unpenalized.size(); ++c)
            XU.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(cfg.unpenalized[c]));
        Vector partial = r;
        for (std::size_t j = 0; j < p; ++j)
            if (!contains(cfg.unpenalized, j) && beta(static_cast<Eigen::Index>(j)) != 0.0)
                partial -= X.col(static_cast<Eigen::Index>(j)) * beta(static_cast<Eigen::Index>(j));
        note_factorization(cfg.unpenalized.size());
        const Vector bu = XU.colPivHouseholderQr().solve(partial);
        for (std::size_t c = 0; c < cfg.unpenalized.size(); ++c)
            beta(static_cast<Eigen::Index>(cfg.unpenalized[c])) = bu(static_cast<Eigen::Index>(c));
    }

    SelectorOutcome out;
    Vector grad(X.cols());
    auto refresh_gradient = [&] { grad = X.transpose() * (r - X * beta); };

    auto update = [&](std::size_t j, double& max_delta) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double s = col_sq_(jj);
        if (s == 0.0) {
            beta(jj) = 0.0;
            return;
        }
        const double z = grad(jj) + s * beta(jj);
        const double b = soft_threshold(z, thr[j]) / s;
        const double d = b - beta(jj);
        if (d != 0.0) {
            grad -= gram_column(j) * d;
            beta(jj) = b;
            max_delta = std::max(max_delta, std::abs(d));
        }
    };

    auto record = [&] {
        if (cfg.record_objective) out.objective_trace.push_back(penalized_objective(X, r, sigma_e2, cfg, beta));
    };

    auto check_budget = [&] {
        if (out.passes >= cfg.cd_max_pass)
            throw ConvergenceError("coordinate descent did not converge in " + std::to_string(cfg.cd_max_pass) +
                                       " passes",
                                   beta);
    };

    if (cfg.record_objective) out.objective_trace.push_back(penalized_objective(X, r, sigma_e2, cfg, beta));

    while (true) {
        check_budget();
        refresh_gradient();
        double max_delta = 0.0;
        for (std::size_t j = 0; j < p; ++j) update(j, max_delta);
        ++out.passes;
        record();
        if (max_delta < cfg.cd_tol) break;

        std::vector<std::size_t> active;
        for (std::size_t j = 0; j < p; ++j)
            if (beta(static_cast<Eigen::Index>(j)) != 0.0) active.push_back(j);
        while (true) {
            check_budget();
            double inner = 0.0;
            for (std::size_t j : active) update(j, inner);
            ++out.passes;
            record();
            if (inner < cfg.cd_tol) break;
        }
    }

    out.beta = std::move(beta);
    out.support = support_of(out.beta);
    out.objective = penalized_objective(X, r, sigma_e2, cfg, out.beta);
    return out;
}

SelectorOutcome lasso_cd(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                         const std::optional<Vector>& warm) {
    LassoSolver solver(X);
    return solver.solve(r, sigma_e2, cfg, warm);
}

Vector adaptive_weights(const Matrix& X, const Vector& y) {
    if (X.rows() != y.size()) throw DimensionError("X and y row counts differ");
    Vector w(X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        const double xx = X.col(i).squaredNorm();
        if (xx == 0.0)
            throw DegenerateColumnError("column " + std::to_string(i) + " is all zero", static_cast<std::size_t>(i));
        const double ols = X.col(i).dot(y) / xx;
        w(i) = ols == 0.0 ? kAdaptiveWeightCap : std::min(1.0 / std::abs(ols), kAdaptiveWeightCap);
    }
    return w;
}

// ---------------------------------------------------------------------------

void LassoSelector::prepare(const Matrix& X, const Vector& y) {
    (void)y;
    solver_ = std::make_unique<LassoSolver>(X);
}

SelectorOutcome LassoSelector::select(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                                      const Vector& warm) {
    if (!solver_ || &solver_->X() != &X) solver_ = std::make_unique<LassoSolver>(X);
    return solver_->solve(r, sigma_e2, cfg, warm.size() == X.cols() ? std::optional<Vector>(warm) : std::nullopt);
}

void AdaptiveLassoSelector::prepare(const Matrix& X, const Vector& y) {
    LassoSelector::prepare(X, y);
    weights_ = adaptive_weights(X, y);
}

SelectorOutcome AdaptiveLassoSelector::select(const Matrix& X, const Vector& r, double sigma_e2,
                                              const SelectorConfig& cfg, const Vector& warm) {
    if (weights_.size() != X.cols()) throw ConfigError("adaptive selector used before prepare()");
    SelectorConfig weighted = cfg;
    weighted.weights = cfg.weights.size() == 0 ? weights_ : Vector(cfg.weights.cwiseProduct(weights_));
    return LassoSelector::select(X, r, sigma_e2, weighted, warm);
}

Vector AdaptiveLassoSelector::penalty_weights(std::size_t p) const {
    if (static_cast<std::size_t>(weights_.size()) != p) throw ConfigError("adaptive selector used before prepare()");
    return weights_;
}

// ---------------------------------------------------------------------------

namespace {

struct Registry {
    std::mutex mutex;
    std::map<std::string, SelectorFactory> factories{
        {"lasso", [] { return std::unique_ptr<Selector>(std::make_unique<LassoSelector>()); }},
        {"adlasso", [] { return std::unique_ptr<Selector>(std::make_unique<AdaptiveLassoSelector>()); }},
    };
};

Registry& registry() {
    static Registry r;
    return r;
}

}  // namespace

void register_selector(const std::string& name, SelectorFactory factory) {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    r.factories[name] = std::move(factory);
}

std::unique_ptr<Selector> make_selector(const std::string& name) {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    auto it = r.factories.find(name);
    if (it == r.factories.end()) throw ConfigError("unknown selector '" + name + "'");
    return it->second();
}

std::vector<std::string> selector_names() {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    std::vector<std::string> names;
    for (const auto& [name, _] : r.factories) names.push_back(name);
    return names;
}

}  // namespace lmmsel
