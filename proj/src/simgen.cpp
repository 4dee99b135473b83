#include "lmmsel/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "lmmsel/rng.hpp"

namespace lmmsel {

namespace {

enum Stream : std::uint64_t { kDesign = 0, kEffects = 1, kNoise = 2, kSupport = 3 };

GroupingFactor blocked_factor(std::size_t n, std::size_t per_level) {
    std::vector<std::size_t> levels(n);
    for (std::size_t i = 0; i < n; ++i) levels[i] = i / per_level;
    return GroupingFactor(std::move(levels), (n + per_level - 1) / per_level);
}

Matrix draw_design(const SimulationScenario& sc, Philox4x32& rng) {
    const auto n = static_cast<Eigen::Index>(sc.n);
    const auto p = static_cast<Eigen::Index>(sc.p);
    Matrix X(n, p);
    X.col(0).setOnes();
    const double innovation = std::sqrt(1.0 - sc.rho * sc.rho);
    // Row-major draw: each row is one observation of the (AR(1)) covariate vector.
    for (Eigen::Index i = 0; i < n; ++i) {
        double prev = 0.0;
        for (Eigen::Index j = 1; j < p; ++j) {
            const double z = rng.normal();
            prev = j == 1 ? z : sc.rho * prev + innovation * z;
            X(i, j) = prev;
        }
    }
    return standardize(X, {0}).X;
}

IndexSet draw_support(const SimulationScenario& sc, Philox4x32& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t j = 2; j < sc.p; ++j)
        if (!contains(sc.true_support, j)) pool.push_back(j);
    IndexSet out = sc.true_support;
    // Partial Fisher-Yates: the first `random_support` entries are a uniform draw.
    for (std::size_t i = 0; i < sc.random_support; ++i) {
        const std::size_t pick = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[pick]);
        out.push_back(pool[i]);
    }
    return make_index_set(std::move(out));
}

std::string fmt17(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string csv_number(double v) { return std::isfinite(v) ? fmt17(v) : std::string(); }

}  // namespace

SimulationScenario scenario(const std::string& name) {
    SimulationScenario sc;
    sc.name = name;
    sc.n = 120;
    sc.true_q = 2;
    sc.fitted_q = 2;
    sc.group_sizes = {6, 6};
    if (name == "M1") {
        sc.p = 80;
        sc.beta_value = 2.0 / 3.0;
        sc.true_support = {0, 1, 2, 3, 4};
        sc.fitted_q = 3;
    } else if (name == "M2") {
        sc.p = 300;
        sc.beta_value = 0.75;
        sc.true_support = {0, 1};
        sc.random_support = 3;
        sc.rho = 0.5;
    } else if (name == "M3") {
        sc.p = 300;
        sc.beta_value = 2.0 / 3.0;
        sc.true_support = {0, 1, 2, 3, 4};
        sc.group_sizes = {6, 8};
    } else if (name == "M4") {
        sc.p = 600;
        sc.beta_value = 2.0 / 3.0;
        sc.true_support = {0, 1, 2, 3, 4};
    } else {
        throw ConfigError("unknown simulation model '" + name + "' (expected M1, M2, M3 or M4)");
    }
    return sc;
}

std::vector<std::string> scenario_names() { return {"M1", "M2", "M3", "M4"}; }

Simulated generate(const SimulationScenario& sc, std::uint64_t seed, const GenerateOptions& opts) {
    if (sc.group_sizes.size() != sc.true_q) throw ConfigError("scenario: one group size per true effect");
    if (sc.fitted_q < sc.true_q || sc.p < sc.fitted_q + 1) throw ConfigError("scenario: inconsistent effect counts");

    Philox4x32 design_rng(seed, kDesign);
    const Matrix X = draw_design(sc, design_rng);

    GroundTruth truth;
    Philox4x32 support_rng(opts.fixed_support_seed.value_or(seed), kSupport);
    truth.support = draw_support(sc, support_rng);
    truth.beta = Vector::Zero(static_cast<Eigen::Index>(sc.p));
    for (std::size_t j : truth.support) truth.beta(static_cast<Eigen::Index>(j)) = sc.beta_value;
    truth.signal = X * truth.beta;

    std::vector<GroupingFactor> factors;
    for (std::size_t per_level : sc.group_sizes) factors.push_back(blocked_factor(sc.n, per_level));

    std::vector<RandomEffectSpec> effects;
    for (std::size_t k = 0; k < sc.fitted_q; ++k) {
        RandomEffectSpec spec;
        spec.name = "u" + std::to_string(k + 1);
        // Extra (spurious) effects reuse the first partition.
        spec.factor = factors[k < sc.true_q ? k : 0];
        spec.covariate_column = k;
        spec.covariate = X.col(static_cast<Eigen::Index>(k));
        effects.push_back(std::move(spec));
    }

    Philox4x32 effect_rng(seed, kEffects);
    truth.noise = Vector::Zero(static_cast<Eigen::Index>(sc.n));
    for (std::size_t k = 0; k < sc.true_q; ++k) {
        Vector uk(static_cast<Eigen::Index>(factors[k].level_count()));
        for (Eigen::Index l = 0; l < uk.size(); ++l) uk(l) = effect_rng.normal();
        for (std::size_t i = 0; i < sc.n; ++i)
            truth.noise(static_cast<Eigen::Index>(i)) +=
                X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) *
                uk(static_cast<Eigen::Index>(factors[k].level(i)));
        truth.u.push_back(std::move(uk));
        truth.true_effects.push_back(k);
    }

    Philox4x32 noise_rng(seed, kNoise);
    truth.eps.resize(static_cast<Eigen::Index>(sc.n));
    for (Eigen::Index i = 0; i < truth.eps.size(); ++i) truth.eps(i) = noise_rng.normal();
    truth.noise += truth.eps;
    truth.snr = truth.signal.squaredNorm() / truth.noise.squaredNorm();

    Vector y = truth.signal + truth.noise;
    return {MixedModelData(std::move(y), X, std::move(effects), {0}), std::move(truth)};
}

SimulationReport evaluate(const MixedModelData& data, const FitResult& fit, const GroundTruth& truth) {
    SimulationReport r;
    r.mixed = !fit.state.sigma2.empty();
    r.support_size = fit.support.size();
    for (std::size_t j : fit.support)
        if (contains(truth.support, j)) ++r.tp;
    r.support_exact = fit.support == truth.support;
    r.sigma2_e = fit.state.sigma2_e;
    r.sigma2 = fit.state.sigma2;
    for (std::size_t j : truth.support) r.beta_on_support.push_back(fit.state.beta(static_cast<Eigen::Index>(j)));
    r.mse = (truth.signal - data.X() * fit.state.beta).squaredNorm() / static_cast<double>(data.n());
    r.snr = truth.snr;
    if (r.mixed) {
        r.spurious_deleted = true;
        for (std::size_t k = 0; k < fit.state.sigma2.size(); ++k) {
            const bool alive = contains(fit.state.active, k) && fit.state.sigma2[k] > 0.0;
            if (contains(truth.true_effects, k) && !alive) r.false_deletion = true;
            if (!contains(truth.true_effects, k) && alive) r.spurious_deleted = false;
        }
        r.truth = r.support_exact && !r.false_deletion && r.spurious_deleted;
    }
    return r;
}

std::vector<std::string> study_methods() { return {"lasso", "adlasso", "lasso+", "adlasso+"}; }

AggregateRow aggregate(const std::string& label, const std::vector<const SimulationReport*>& reports,
                       std::size_t reps, std::size_t fitted_q) {
    AggregateRow row;
    row.label = label;
    row.reps = reps;
    row.failures = reps - reports.size();
    const bool mixed = !reports.empty() && reports.front()->mixed;

    auto summarize = [&](const std::string& name, bool applies, auto getter) {
        Summary s;
        s.field = name;
        s.defined = applies && !reports.empty();
        if (s.defined) {
            double sum = 0.0;
            for (const auto* r : reports) sum += getter(*r);
            s.mean = sum / static_cast<double>(reports.size());
            if (reports.size() > 1) {
                double ss = 0.0;
                for (const auto* r : reports) ss += (getter(*r) - s.mean) * (getter(*r) - s.mean);
                s.sd = std::sqrt(ss / static_cast<double>(reports.size() - 1));
            }
        }
        row.fields.push_back(std::move(s));
    };

    summarize("truth", mixed, [](const SimulationReport& r) { return r.truth ? 1.0 : 0.0; });
    summarize("support_exact", true, [](const SimulationReport& r) { return r.support_exact ? 1.0 : 0.0; });
    summarize("support_size", true, [](const SimulationReport& r) { return static_cast<double>(r.support_size); });
    summarize("tp", true, [](const SimulationReport& r) { return static_cast<double>(r.tp); });
    summarize("sigma2_e", true, [](const SimulationReport& r) { return r.sigma2_e; });
    for (std::size_t k = 0; k < fitted_q; ++k)
        summarize("sigma2_" + std::to_string(k + 1), mixed,
                  [k](const SimulationReport& r) { return k < r.sigma2.size() ? r.sigma2[k] : 0.0; });
    summarize("mse", true, [](const SimulationReport& r) { return r.mse; });
    summarize("snr", true, [](const SimulationReport& r) { return r.snr; });
    summarize("false_deletion", mixed, [](const SimulationReport& r) { return r.false_deletion ? 1.0 : 0.0; });
    summarize("spurious_deleted", mixed,
              [](const SimulationReport& r) { return r.spurious_deleted ? 1.0 : 0.0; });
    return row;
}

StudyResult run_study(const StudyConfig& cfg) {
    if (cfg.reps == 0) throw ConfigError("reps must be at least 1");
    const auto methods = study_methods();
    if (std::find(methods.begin(), methods.end(), cfg.method) == methods.end())
        throw ConfigError("unsupported method '" + cfg.method + "' (expected lasso, adlasso, lasso+ or adlasso+)");
    const bool mixed = cfg.method.back() == '+';
    const std::string selector = mixed ? cfg.method.substr(0, cfg.method.size() - 1) : cfg.method;
    cfg.ecm.validate();

    StudyResult result;
    result.config = cfg;
    result.records.resize(cfg.reps);

    auto run_replicate = [&](std::size_t r) {
        ReplicateRecord& rec = result.records[r];
        rec.index = r;
        rec.seed = derive_seed(cfg.base_seed, r);
        try {
            Simulated sim = generate(cfg.scenario, rec.seed, cfg.generate);
            rec.snr = sim.truth.snr;
            const MixedModelData data = mixed ? std::move(sim.data) : sim.data.without_effects();

            auto sel = make_selector(selector);
            sel->prepare(data.X(), data.y());
            const auto grid = lambda_grid(data, cfg.grid_size, cfg.min_ratio, sel->penalty_weights(data.p()));

            TuningConfig tcfg;
            tcfg.ecm = cfg.ecm;
            tcfg.ecm.selector = selector;
            tcfg.criterion = cfg.criterion;
            tcfg.cold_start = cfg.cold_start;
            tcfg.edge_refinement = cfg.edge_refinement;
            const TuningResult tuned = tune(data, grid, tcfg);
            rec.lambda = tuned.lambda;
            rec.report = evaluate(data, tuned.fit, sim.truth);

            if (cfg.refit) {
                try {
                    const FitResult rf = refit(data, tuned.fit.support, tuned.fit.state.active, tcfg.ecm);
                    rec.refit = evaluate(data, rf, sim.truth);
                } catch (const Error& e) {
                    rec.refit_failed = true;
                    rec.refit_error = e.what();
                }
            }
        } catch (const Error& e) {
            rec.failed = true;
            rec.error = e.what();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, cfg.reps));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < cfg.reps; r = next++) run_replicate(r);
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    const std::size_t fitted_q = mixed ? cfg.scenario.fitted_q : 0;
    std::vector<const SimulationReport*> main, refits;
    for (const auto& rec : result.records) {
        if (rec.failed) continue;
        main.push_back(&rec.report);
        if (rec.refit) refits.push_back(&*rec.refit);
    }
    result.rows.push_back(aggregate(cfg.method, main, cfg.reps, fitted_q));
    if (cfg.refit) result.rows.push_back(aggregate(cfg.method + " refit", refits, cfg.reps, fitted_q));
    return result;
}

void write_aggregate_csv(std::ostream& os, const StudyResult& result) {
    if (result.rows.empty()) return;
    os << "model,method,reps,failures";
    for (const auto& f : result.rows.front().fields) os << ',' << f.field << ',' << f.field << "_sd";
    os << '\n';
    for (const auto& row : result.rows) {
        os << result.config.scenario.name << ',' << row.label << ',' << row.reps << ',' << row.failures;
        for (const auto& f : row.fields) {
            os << ',' << (f.defined ? fmt17(f.mean) : std::string());
            os << ',' << (f.defined && f.sd ? fmt17(*f.sd) : std::string());
        }
        os << '\n';
    }
}

void write_replicate_csv(std::ostream& os, const StudyResult& result) {
    const std::size_t fitted_q = result.rows.empty() ? 0 : [&] {
        std::size_t q = 0;
        for (const auto& f : result.rows.front().fields)
            if (f.field.rfind("sigma2_", 0) == 0 && f.field != "sigma2_e") ++q;
        return q;
    }();
    const std::size_t support_len =
        result.config.scenario.true_support.size() + result.config.scenario.random_support;

    os << "replicate,seed,pass,failed,lambda,truth,support_exact,support_size,tp,sigma2_e";
    for (std::size_t k = 0; k < fitted_q; ++k) os << ",sigma2_" << k + 1;
    for (std::size_t j = 0; j < support_len; ++j) os << ",beta_J" << j + 1;
    os << ",mse,snr,false_deletion,spurious_deleted,error\n";

    auto emit = [&](const ReplicateRecord& rec, const std::string& pass, const SimulationReport* r, bool failed,
                    const std::string& error) {
        os << rec.index << ',' << rec.seed << ',' << pass << ',' << (failed ? 1 : 0) << ','
           << csv_number(rec.lambda);
        if (r == nullptr) {
            os << ",,,,,";
            for (std::size_t k = 0; k < fitted_q + support_len; ++k) os << ',';
            os << ',' << csv_number(rec.snr) << ",,,";
        } else {
            os << ',' << (r->mixed ? std::to_string(r->truth ? 1 : 0) : std::string()) << ','
               << (r->support_exact ? 1 : 0) << ',' << r->support_size << ',' << r->tp << ','
               << fmt17(r->sigma2_e);
            for (std::size_t k = 0; k < fitted_q; ++k)
                os << ',' << (k < r->sigma2.size() ? fmt17(r->sigma2[k]) : std::string());
            for (std::size_t j = 0; j < support_len; ++j)
                os << ',' << (j < r->beta_on_support.size() ? fmt17(r->beta_on_support[j]) : std::string());
            os << ',' << fmt17(r->mse) << ',' << fmt17(r->snr) << ','
               << (r->mixed ? std::to_string(r->false_deletion ? 1 : 0) : std::string()) << ','
               << (r->mixed ? std::to_string(r->spurious_deleted ? 1 : 0) : std::string());
        }
        std::string clean = error;
        std::replace(clean.begin(), clean.end(), ',', ';');
        std::replace(clean.begin(), clean.end(), '\n', ' ');
        os << ',' << clean << '\n';
    };

    for (const auto& rec : result.records) {
        emit(rec, "main", rec.failed ? nullptr : &rec.report, rec.failed, rec.error);
        if (result.config.refit && !rec.failed)
            emit(rec, "refit", rec.refit ? &*rec.refit : nullptr, rec.refit_failed, rec.refit_error);
    }
}

}  // namespace lmmsel
