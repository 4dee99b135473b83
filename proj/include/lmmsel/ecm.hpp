#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lmmsel/blup.hpp"
#include "lmmsel/model.hpp"
#include "lmmsel/penalized_ls.hpp"

namespace lmmsel {

/// Phi = (beta, sigma_1^2..sigma_q^2, sigma_e^2) plus the live effect set K.
/// sigma2 has one slot per effect of the data; slots outside `active` are 0.
struct ParameterState {
    Vector beta;
    std::vector<double> sigma2;
    double sigma2_e = 1.0;
    IndexSet active;

    GammaMatrix gamma() const { return GammaMatrix::from_variances(active, sigma2, sigma2_e); }
    Variances variances() const;
    void validate(const MixedModelData& data) const;
};

struct EcmConfig {
    double lambda = 0.0;
    std::string selector = "lasso";
    SelectorConfig selector_config;  // cd_tol, cd_max_pass, extra weights; lambda/unpenalized set per step

    double tol_beta = 1e-6;     // on ||beta^{t+1} - beta^t||^2
    double tol_u = 1e-6;        // on ||u_k^{t+1} - u_k^t||^2, every active k
    double tol_loglik = 1e-8;   // on (L^{t+1} - L^t)^2, complete-data log-likelihood
    std::size_t max_iter = 300;
    double delete_ratio = 1e-4;               // delete k when ||u_k||^2 / N_k < ratio * sigma_e^2
    std::optional<std::size_t> support_cap;   // default min(n - 1, p)
    double sigma2_floor = 1e-8;               // sigma_e^{2[-1]} >= floor * var(y)

    bool allow_deletion = true;
    bool freeze_variances = false;  // keep the starting variances (known-variance mode)
    std::optional<ParameterState> start;  // replaces the default initialization

    void validate() const;
    std::size_t effective_support_cap(const MixedModelData& data) const;
};

struct DeletionEvent {
    std::size_t effect;
    std::size_t iteration;
};

struct StepDiagnostics {
    IndexSet deleted;          // effects removed at this step
    IndexSet unpenalized;      // exemption set used by the beta M-step
    std::size_t support_size = 0;
    std::size_t selector_passes = 0;
    double complete_loglik = 0.0;  // -2 L at the new (Phi, u)
};

struct StepResult {
    ParameterState state;
    BlupResult blup;  // u^{[t+1]} with the Gamma of the incoming state
    StepDiagnostics diagnostics;
};

struct FitResult {
    ParameterState state;
    BlupResult blup;  // E(u | y, final Phi)
    IndexSet support;
    std::vector<DeletionEvent> deleted;
    std::vector<double> trajectory;      // objective at Phi^[0], Phi^[1], ...
    std::vector<char> deletion_after;    // deletion_after[t]: effects deleted by step t -> t+1
    std::vector<IndexSet> exemptions;    // exemption set used at each step
    bool converged = false;
    std::string reason;
    std::size_t iterations = 0;
    double objective = 0.0;              // neg2_penalized_marginal at the final state
    double lambda = 0.0;
    std::string selector;
    std::size_t max_factorized_dim = 0;  // largest matrix factorized during the loop
};

/// Default initialization: run the selector on the plain linear model at
/// penalty lambda (sigma_e^2 slot = 1), sigma_e^{2[-1]} = RSS / n, then
/// sigma_k^{2[0]} = 0.4 / q * sigma_e^{2[-1]} and sigma_e^{2[0]} = 0.6 * sigma_e^{2[-1]}.
ParameterState initialize(const MixedModelData& data, const EcmConfig& cfg, Selector& selector);
ParameterState initialize(const MixedModelData& data, const EcmConfig& cfg);

/// One multicycle ECM iteration: E-step, beta M-step, E-step, variance
/// M-step, then deletion of effects whose BLUP energy fell below threshold.
StepResult ecm_step(const MixedModelData& data, const ParameterState& state, const EcmConfig& cfg,
                    Selector& selector);

FitResult fit(const MixedModelData& data, const EcmConfig& cfg);

/// Penalty multipliers implied by the exemption rule for `active`: 0 on
/// exempt columns, `weights` (or 1) elsewhere.
Vector penalty_weights(const MixedModelData& data, const IndexSet& active, const Vector& weights = {});

/// log|V| + (y - X beta)' V^{-1} (y - X beta) + lambda sum_j w_j |beta_j| + n log(2 pi),
/// using only the N x N Henderson system. `weights` are per-coefficient
/// multipliers (empty: the exemption rule for state.active with unit weights).
double neg2_penalized_marginal(const MixedModelData& data, const ParameterState& state, double lambda,
                               const Vector& weights = {});

/// log|V| + (y - X beta)' V^{-1} (y - X beta) (no penalty, no 2 pi term).
double marginal_loglik_part(const MixedModelData& data, const ParameterState& state);

/// -2 times the complete-data log-likelihood at (state, u).
double neg2_complete_loglik(const MixedModelData& data, const ParameterState& state, const BlupResult& blup);

/// Unpenalized ML fit of the selected model: X restricted to `support`,
/// effects restricted to `active`, no deletion. Results are mapped back to
/// the full index space of `data`.
FitResult refit(const MixedModelData& data, const IndexSet& support, const IndexSet& active,
                const EcmConfig& base = {});

}  // namespace lmmsel
