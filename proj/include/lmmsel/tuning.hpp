#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lmmsel/ecm.hpp"
#include "lmmsel/model.hpp"

namespace lmmsel {

struct BicValue {
    double lambda = 0.0;
    double loglik_part = 0.0;  // log|V| + (y - X beta)' V^{-1} (y - X beta)
    std::size_t df = 0;        // nonzero variance parameters + |J|
    double bic = 0.0;
    double ebic = 0.0;         // bic + 2 log C(p, |J|)
    std::size_t support_size = 0;
    IndexSet support;
    double sigma2_e = 0.0;
    std::size_t active_effects = 0;
    bool converged = false;
    bool degenerate = false;
    std::string note;  // why the entry is degenerate
};

/// Smallest lambda for which the initialization fit has every penalized
/// coefficient at zero: 2 max_j |X_j' (y - P_U y)| / w_j over penalized j,
/// where P_U projects onto the exempt columns (all effects active). A
/// relative margin of 1e-10 keeps the boundary fit exactly sparse.
double lambda_max(const MixedModelData& data, const Vector& weights = {});

/// `count` log-spaced values from lambda_max down to min_ratio * lambda_max.
std::vector<double> lambda_grid(const MixedModelData& data, std::size_t count, double min_ratio,
                                const Vector& weights = {});

BicValue bic(const MixedModelData& data, const FitResult& fit);

enum class Criterion { bic, ebic };

struct TuningConfig {
    EcmConfig ecm;  // lambda is overwritten per grid point
    Criterion criterion = Criterion::bic;
    bool cold_start = false;
    std::size_t threads = 1;           // cold-start only
    double sigma2_floor_ratio = 1e-6;  // degenerate when sigma_e^2 < ratio * var(y)
    // Fits with N + |J| >= n (unbounded likelihood) are always degenerate.
    // Extra lambdas fitted strictly between the last healthy grid point and
    // the first degenerate one, where the selected support jumps; 0 disables.
    std::size_t edge_refinement = 10;
};

struct TuningResult {
    std::vector<BicValue> path;        // one entry per grid value
    std::vector<BicValue> refinement;  // edge-refinement fits, descending lambda
    bool chosen_refined = false;       // chosen indexes refinement instead of path
    std::size_t chosen = 0;
    double lambda = 0.0;
    FitResult fit;
};

/// Fits every grid value (descending), flags the degenerate tail and picks
/// the criterion minimizer over the non-degenerate entries (grid and edge
/// refinement). The warm path starts each fit from the previous state.
TuningResult tune(const MixedModelData& data, const std::vector<double>& grid, const TuningConfig& cfg);

double log_binomial(std::size_t n, std::size_t k);

}  // namespace lmmsel
