#include "lmmsel/cli/serialize.hpp"

#include <fstream>

namespace lmmsel::cli {

namespace {

json one_based(const IndexSet& set) {
    json out = json::array();
    for (std::size_t j : set) out.push_back(j + 1);
    return out;
}

json optional_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json report_json(const SimulationReport& r) {
    json out = {{"support_exact", r.support_exact}, {"support_size", r.support_size}, {"tp", r.tp},
                {"sigma2_e", r.sigma2_e},           {"beta_on_support", r.beta_on_support},
                {"mse", r.mse},                     {"snr", r.snr}};
    if (r.mixed) {
        out["truth"] = r.truth;
        out["sigma2"] = r.sigma2;
        out["false_deletion"] = r.false_deletion;
        out["spurious_deleted"] = r.spurious_deleted;
    }
    return out;
}

}  // namespace

json fit_block(const MixedModelData& data, const FitResult& fit) {
    json beta = json::array();
    for (std::size_t j = 0; j < data.p(); ++j)
        beta.push_back({{"name", data.column_names()[j]}, {"value", fit.state.beta(static_cast<Eigen::Index>(j))}});
    json variances = json::array();
    for (std::size_t k = 0; k < data.q(); ++k)
        variances.push_back({{"effect", data.effect(k).name},
                             {"sigma2", fit.state.sigma2[k]},
                             {"active", contains(fit.state.active, k)}});
    json deleted = json::array();
    for (const auto& d : fit.deleted)
        deleted.push_back({{"effect", data.effect(d.effect).name}, {"iteration", d.iteration}});
    json trajectory = json::array();
    for (double v : fit.trajectory) trajectory.push_back(optional_number(v));

    return {{"lambda", fit.lambda},
            {"selector", fit.selector},
            {"beta", std::move(beta)},
            {"sigma2_e", fit.state.sigma2_e},
            {"variances", std::move(variances)},
            {"support", one_based(fit.support)},
            {"support_names",
             [&] {
                 json names = json::array();
                 for (std::size_t j : fit.support) names.push_back(data.column_names()[j]);
                 return names;
             }()},
            {"active_effects", one_based(fit.state.active)},
            {"deleted", std::move(deleted)},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"reason", fit.reason},
            {"objective", fit.objective},
            {"trajectory", std::move(trajectory)},
            {"max_factorized_dim", fit.max_factorized_dim}};
}

ParameterState state_from_block(const MixedModelData& data, const json& block) {
    ParameterState s;
    const auto& beta = block.at("beta");
    if (beta.size() != data.p())
        throw DimensionError("fit file has " + std::to_string(beta.size()) + " coefficients, data has " +
                             std::to_string(data.p()) + " columns");
    s.beta.resize(static_cast<Eigen::Index>(data.p()));
    for (std::size_t j = 0; j < data.p(); ++j) s.beta(static_cast<Eigen::Index>(j)) = beta[j].at("value").get<double>();
    const auto& vars = block.at("variances");
    if (vars.size() != data.q())
        throw DimensionError("fit file has " + std::to_string(vars.size()) + " random effects, data has " +
                             std::to_string(data.q()));
    s.sigma2.assign(data.q(), 0.0);
    for (std::size_t k = 0; k < data.q(); ++k) {
        s.sigma2[k] = vars[k].at("sigma2").get<double>();
        if (vars[k].at("active").get<bool>()) s.active.push_back(k);
    }
    s.sigma2_e = block.at("sigma2_e").get<double>();
    s.validate(data);
    return s;
}

json bic_value(const BicValue& v) {
    return {{"lambda", v.lambda},
            {"loglik_part", v.loglik_part},
            {"df", v.df},
            {"bic", v.bic},
            {"ebic", v.ebic},
            {"support_size", v.support_size},
            {"support", one_based(v.support)},
            {"sigma2_e", v.sigma2_e},
            {"active_effects", v.active_effects},
            {"converged", v.converged},
            {"degenerate", v.degenerate},
            {"note", v.note}};
}

json study_json(const StudyResult& result) {
    const auto& cfg = result.config;
    json rows = json::array();
    for (const auto& row : result.rows) {
        json fields = json::object();
        for (const auto& f : row.fields) {
            if (!f.defined) {
                fields[f.field] = nullptr;
                continue;
            }
            fields[f.field] = {{"mean", f.mean}, {"sd", f.sd ? json(*f.sd) : json(nullptr)}};
        }
        rows.push_back({{"method", row.label}, {"reps", row.reps}, {"failures", row.failures}, {"fields", fields}});
    }
    json reps = json::array();
    for (const auto& rec : result.records) {
        json r = {{"replicate", rec.index}, {"seed", rec.seed}, {"failed", rec.failed}};
        if (rec.failed) {
            r["error"] = rec.error;
        } else {
            r["lambda"] = rec.lambda;
            r["report"] = report_json(rec.report);
            if (rec.refit) r["refit"] = report_json(*rec.refit);
            if (rec.refit_failed) r["refit_error"] = rec.refit_error;
        }
        reps.push_back(std::move(r));
    }
    return {{"schema", kStudySchema},
            {"model", cfg.scenario.name},
            {"method", cfg.method},
            {"reps", cfg.reps},
            {"base_seed", cfg.base_seed},
            {"criterion", cfg.criterion == Criterion::bic ? "bic" : "ebic"},
            {"grid_size", cfg.grid_size},
            {"min_ratio", cfg.min_ratio},
            {"edge_refinement", cfg.edge_refinement},
            {"refit", cfg.refit},
            {"aggregate", std::move(rows)},
            {"replicates", std::move(reps)}};
}

json truth_json(const GroundTruth& truth) {
    json u = json::array();
    for (const auto& block : truth.u) u.push_back(std::vector<double>(block.data(), block.data() + block.size()));
    return {{"schema", kTruthSchema},
            {"support", one_based(truth.support)},
            {"beta", std::vector<double>(truth.beta.data(), truth.beta.data() + truth.beta.size())},
            {"true_effects", one_based(truth.true_effects)},
            {"u", std::move(u)},
            {"snr", truth.snr}};
}

IndexSet support_from_truth(const json& truth) {
    std::vector<std::size_t> out;
    for (const auto& j : truth.at("support")) {
        const auto v = j.get<long long>();
        if (v < 1) throw DataError("truth support entries are 1-based column numbers");
        out.push_back(static_cast<std::size_t>(v - 1));
    }
    return make_index_set(std::move(out));
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << doc.dump(2) << '\n';
}

}  // namespace lmmsel::cli
