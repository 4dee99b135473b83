#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmsel/model.hpp"

namespace lmmsel {

/// Weight given to a coefficient whose univariate OLS estimate is exactly 0.
inline constexpr double kAdaptiveWeightCap = 1e12;

struct SelectorConfig {
    double lambda = 0.0;
    Vector weights;         // per-coefficient multipliers; empty means all ones
    IndexSet unpenalized;   // effective weight forced to 0
    double cd_tol = 1e-7;   // max absolute coefficient change over a full pass
    std::size_t cd_max_pass = 100000;
    bool record_objective = false;

    void validate(std::size_t p) const;
    /// Effective weight of coefficient j.
    double weight(std::size_t j) const;
};

struct SelectorOutcome {
    Vector beta;
    IndexSet support;
    double objective = 0.0;
    std::size_t passes = 0;
    std::vector<double> objective_trace;  // one value per pass when recorded
};

/// sign(z) * max(|z| - t, 0).
double soft_threshold(double z, double t);

/// ||r - X beta||^2 + lambda * sigma_e2 * sum_j w_j |beta_j|.
double penalized_objective(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                           const Vector& beta);

/// Largest KKT violation of beta for the problem above, expressed in
/// coefficient units (the gradient violation divided by 2 ||X_j||^2).
double kkt_residual(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                    const Vector& beta);

IndexSet support_of(const Vector& beta);

/// Coordinate-descent solver bound to one design matrix. Keeps the column
/// norms and the Gram columns it has needed so far, so repeated solves on
/// the same X (one per ECM iteration) do not recompute them.
class LassoSolver {
public:
    explicit LassoSolver(const Matrix& X);

    SelectorOutcome solve(const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                          const std::optional<Vector>& warm = std::nullopt);

    const Matrix& X() const noexcept { return *X_; }

private:
    const Vector& gram_column(std::size_t j);

    const Matrix* X_;
    Vector col_sq_;
    std::vector<Vector> gram_;
    std::vector<char> have_gram_;
};

/// Minimizes ||r - X beta||^2 + lambda * sigma_e2 * sum_j w_j |beta_j| by
/// covariance-update coordinate descent with an active-set strategy.
/// Throws ConvergenceError (carrying the last iterate) at cd_max_pass.
SelectorOutcome lasso_cd(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                         const std::optional<Vector>& warm = std::nullopt);

/// w_i = 1 / |X_i'y / X_i'X_i|, capped at kAdaptiveWeightCap.
Vector adaptive_weights(const Matrix& X, const Vector& y);

/// Variable-selection step of the generalized ECM algorithm: estimate beta
/// in the working linear model r = X beta + e, e ~ N(0, sigma_e2 I).
///
/// Implementations that do not minimize a criterion are allowed, but the
/// ECM convergence guarantee does not cover them.
class Selector {
public:
    virtual ~Selector() = default;
    virtual std::string name() const = 0;

    /// Called once per fit with the original data, before any select().
    virtual void prepare(const Matrix& X, const Vector& y) {
        (void)X;
        (void)y;
    }

    virtual SelectorOutcome select(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                                   const Vector& warm) = 0;

    /// Per-coefficient penalty multipliers this selector applies on top of
    /// cfg.weights (used for objective evaluation and lambda grids).
    virtual Vector penalty_weights(std::size_t p) const { return Vector::Ones(static_cast<Eigen::Index>(p)); }
};

class LassoSelector : public Selector {
public:
    std::string name() const override { return "lasso"; }
    void prepare(const Matrix& X, const Vector& y) override;
    SelectorOutcome select(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                           const Vector& warm) override;

protected:
    std::unique_ptr<LassoSolver> solver_;
};

/// Lasso with adaptive weights computed once from (X, y) in prepare().
class AdaptiveLassoSelector : public LassoSelector {
public:
    std::string name() const override { return "adlasso"; }
    void prepare(const Matrix& X, const Vector& y) override;
    SelectorOutcome select(const Matrix& X, const Vector& r, double sigma_e2, const SelectorConfig& cfg,
                           const Vector& warm) override;
    Vector penalty_weights(std::size_t p) const override;

private:
    Vector weights_;
};

using SelectorFactory = std::function<std::unique_ptr<Selector>()>;

/// Registers a selector under `name`; replaces an existing registration.
void register_selector(const std::string& name, SelectorFactory factory);
std::unique_ptr<Selector> make_selector(const std::string& name);
std::vector<std::string> selector_names();

}  // namespace lmmsel
