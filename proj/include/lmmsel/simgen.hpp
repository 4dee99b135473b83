#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lmmsel/ecm.hpp"
#include "lmmsel/model.hpp"
#include "lmmsel/tuning.hpp"

namespace lmmsel {

/// One of the four benchmark designs. Column 0 of X is the intercept; the
/// k-th true random effect interacts column k-1 with grouping factor k.
struct SimulationScenario {
    std::string name;
    std::size_t n = 120;
    std::size_t p = 0;
    double beta_value = 0.0;
    IndexSet true_support;                 // fixed part of J (0-based)
    std::size_t random_support = 0;        // extra indices drawn from {2..p-1}
    std::size_t true_q = 2;
    std::size_t fitted_q = 2;              // M1 adds a spurious effect on column 2
    std::vector<std::size_t> group_sizes;  // n_{i,k} for each true factor
    double rho = 0.0;                      // AR(1) correlation among columns 1..p-1
};

/// Preset by name ("M1".."M4"); ConfigError otherwise.
SimulationScenario scenario(const std::string& name);
std::vector<std::string> scenario_names();

struct GroundTruth {
    Vector beta;
    IndexSet support;
    IndexSet true_effects;
    std::vector<Vector> u;  // one block per true effect
    Vector eps;
    Vector signal;          // X beta
    Vector noise;           // sum_k Z_k u_k + eps
    double snr = 0.0;       // ||signal||^2 / ||noise||^2
};

struct GenerateOptions {
    // Draw the random part of J once from this seed instead of per replicate.
    std::optional<std::uint64_t> fixed_support_seed;
};

struct Simulated {
    MixedModelData data;
    GroundTruth truth;
};

/// Deterministic in (scenario, seed). Independent Philox streams drive X,
/// the random effects, the noise and the support draw.
Simulated generate(const SimulationScenario& sc, std::uint64_t seed, const GenerateOptions& opts = {});

struct SimulationReport {
    bool mixed = true;         // false for plain linear fits
    bool truth = false;        // support exact and surviving effects == true effects
    bool support_exact = false;
    std::size_t support_size = 0;
    std::size_t tp = 0;
    double sigma2_e = 0.0;
    std::vector<double> sigma2;  // one per fitted effect (0 when deleted)
    std::vector<double> beta_on_support;  // beta_hat on J, in J order
    double mse = 0.0;
    double snr = 0.0;
    bool false_deletion = false;   // a true effect was deleted
    bool spurious_deleted = false; // every non-true fitted effect was deleted
};

SimulationReport evaluate(const MixedModelData& data, const FitResult& fit, const GroundTruth& truth);

struct StudyConfig {
    SimulationScenario scenario;
    std::size_t reps = 100;
    std::string method = "lasso+";  // lasso | adlasso | lasso+ | adlasso+
    std::uint64_t base_seed = 1;
    bool refit = false;
    std::size_t threads = 1;
    std::size_t grid_size = 50;
    double min_ratio = 0.01;
    Criterion criterion = Criterion::bic;
    bool cold_start = false;
    std::size_t edge_refinement = 10;
    GenerateOptions generate;
    EcmConfig ecm;  // lambda and selector are set per replicate
};

std::vector<std::string> study_methods();

struct ReplicateRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    double snr = 0.0;
    bool failed = false;
    std::string error;
    double lambda = 0.0;
    SimulationReport report;
    bool refit_failed = false;
    std::string refit_error;
    std::optional<SimulationReport> refit;
};

struct Summary {
    std::string field;
    double mean = 0.0;
    std::optional<double> sd;  // absent when fewer than two values
    bool defined = true;       // false when the field does not apply (linear fits)
};

struct AggregateRow {
    std::string label;  // method, with " refit" appended for the refit pass
    std::size_t reps = 0;
    std::size_t failures = 0;
    std::vector<Summary> fields;
};

struct StudyResult {
    StudyConfig config;
    std::vector<ReplicateRecord> records;
    std::vector<AggregateRow> rows;
};

/// Runs `reps` replicates with seeds derive_seed(base_seed, r), each tuned by
/// the configured criterion. Replicate failures are recorded, not thrown.
StudyResult run_study(const StudyConfig& cfg);

AggregateRow aggregate(const std::string& label, const std::vector<const SimulationReport*>& reports,
                       std::size_t reps, std::size_t fitted_q);

void write_aggregate_csv(std::ostream& os, const StudyResult& result);
void write_replicate_csv(std::ostream& os, const StudyResult& result);

}  // namespace lmmsel
