#include "lmmsel/tuning.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace lmmsel {

double log_binomial(std::size_t n, std::size_t k) {
    if (k > n) return -std::numeric_limits<double>::infinity();
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

double lambda_max(const MixedModelData& data, const Vector& weights) {
    const IndexSet exempt = data.exempt_columns(data.all_effects());
    Vector resid = data.y();
    if (!exempt.empty()) {
        Matrix XU(data.X().rows(), static_cast<Eigen::Index>(exempt.size()));
        for (std::size_t c = 0; c < exempt.size(); ++c)
            XU.col(static_cast<Eigen::Index>(c)) = data.X().col(static_cast<Eigen::Index>(exempt[c]));
        resid -= XU * XU.colPivHouseholderQr().solve(data.y());
    }
    const Vector score = data.X().transpose() * resid;
    double top = -1.0;
    for (std::size_t j = 0; j < data.p(); ++j) {
        if (contains(exempt, j)) continue;
        const double w = weights.size() == 0 ? 1.0 : weights(static_cast<Eigen::Index>(j));
        if (!(w > 0.0)) continue;
        top = std::max(top, 2.0 * std::abs(score(static_cast<Eigen::Index>(j))) / w);
    }
    if (top < 0.0) throw ConfigError("no penalized column: lambda grid is undefined");
    return top * (1.0 + 1e-10);
}

std::vector<double> lambda_grid(const MixedModelData& data, std::size_t count, double min_ratio,
                                const Vector& weights) {
    if (count < 2) throw ConfigError("lambda grid needs at least 2 points");
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw ConfigError("min_ratio must lie in (0, 1)");
    const double top = lambda_max(data, weights);
    const double step = std::log(min_ratio) / static_cast<double>(count - 1);
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) grid[i] = top * std::exp(step * static_cast<double>(i));
    grid.back() = top * min_ratio;
    return grid;
}

BicValue bic(const MixedModelData& data, const FitResult& fit) {
    BicValue v;
    v.lambda = fit.lambda;
    v.loglik_part = marginal_loglik_part(data, fit.state);
    v.support_size = fit.support.size();
    v.support = fit.support;
    v.active_effects = 0;
    for (std::size_t k : fit.state.active)
        if (fit.state.sigma2[k] > 0.0) ++v.active_effects;
    v.df = v.active_effects + 1 + v.support_size;
    v.bic = v.loglik_part + static_cast<double>(v.df) * std::log(static_cast<double>(data.n()));
    v.ebic = v.bic + 2.0 * log_binomial(data.p(), v.support_size);
    v.sigma2_e = fit.state.sigma2_e;
    v.converged = fit.converged;
    return v;
}

namespace {

// Why a finished fit cannot be used for selection, or empty when it can.
std::string degeneracy(const MixedModelData& data, const FitResult& f, double floor) {
    if (f.state.sigma2_e < floor) return "residual variance below floor";
    // The model requires N + |J| < n; at or past it the likelihood is unbounded.
    if (data.total_levels(f.state.active) + f.support.size() >= data.n())
        return "random levels plus selected fixed effects reach n";
    return {};
}

}  // namespace

TuningResult tune(const MixedModelData& data, const std::vector<double>& grid, const TuningConfig& cfg) {
    if (grid.empty()) throw TuningError("empty lambda grid");
    const double var_y = (data.y().array() - data.y().mean()).square().mean();
    const double floor = cfg.sigma2_floor_ratio * var_y;

    const std::size_t m = grid.size();
    std::vector<BicValue> path(m);
    std::vector<std::optional<FitResult>> fits(m);
    std::vector<std::string> failure(m);

    auto run_one = [&](std::size_t i, const std::optional<ParameterState>& start) {
        EcmConfig ecm = cfg.ecm;
        ecm.lambda = grid[i];
        ecm.start = start;
        try {
            fits[i] = fit(data, ecm);
        } catch (const Error& e) {
            failure[i] = e.what();
        }
    };

    auto mark = [&](std::size_t i, const std::string& note) {
        path[i].lambda = grid[i];
        path[i].degenerate = true;
        path[i].note = note;
    };

    // Returns false when entry i starts the degenerate tail.
    auto assess = [&](std::size_t i) {
        if (!fits[i]) {
            mark(i, failure[i]);
            return false;
        }
        path[i] = bic(data, *fits[i]);
        path[i].note = degeneracy(data, *fits[i], floor);
        path[i].degenerate = !path[i].note.empty();
        return !path[i].degenerate;
    };

    if (!cfg.cold_start) {
        std::optional<ParameterState> prev;
        bool truncated = false;
        for (std::size_t i = 0; i < m; ++i) {
            if (truncated) {
                mark(i, "beyond degenerate point");
                continue;
            }
            run_one(i, prev);
            if (!assess(i)) {
                truncated = true;
                continue;
            }
            prev = fits[i]->state;
        }
    } else {
        const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, m));
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < m; i = next++) run_one(i, std::nullopt);
        };
        if (workers == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        bool truncated = false;
        for (std::size_t i = 0; i < m; ++i) {
            if (truncated) {
                mark(i, "beyond degenerate point");
                fits[i].reset();
                continue;
            }
            if (!assess(i)) truncated = true;
        }
    }

    TuningResult out;

    // Edge refinement: the first degenerate grid entry marks where the support
    // explodes; the interval just above it is where the criterion minimum
    // usually sits, so it is resolved more finely.
    std::size_t edge = m;
    for (std::size_t i = 0; i < m; ++i)
        if (path[i].degenerate) {
            edge = i;
            break;
        }
    std::vector<std::optional<FitResult>> refined;
    if (cfg.edge_refinement > 0 && edge > 0 && edge < m) {
        const std::size_t r = cfg.edge_refinement;
        const double ratio = grid[edge] / grid[edge - 1];
        std::optional<ParameterState> prev;
        if (!cfg.cold_start) prev = fits[edge - 1]->state;
        bool truncated = false;
        for (std::size_t s = 1; s <= r; ++s) {
            const double lambda = grid[edge - 1] * std::pow(ratio, static_cast<double>(s) / static_cast<double>(r + 1));
            BicValue v;
            v.lambda = lambda;
            if (truncated) {
                v.degenerate = true;
                v.note = "beyond degenerate point";
                out.refinement.push_back(std::move(v));
                refined.emplace_back();
                continue;
            }
            EcmConfig ecm = cfg.ecm;
            ecm.lambda = lambda;
            ecm.start = prev;
            std::optional<FitResult> f;
            try {
                f = fit(data, ecm);
            } catch (const Error& e) {
                v.degenerate = true;
                v.note = e.what();
            }
            if (f) {
                v = bic(data, *f);
                v.note = degeneracy(data, *f, floor);
                v.degenerate = !v.note.empty();
            }
            if (v.degenerate) {
                truncated = true;
                f.reset();
            } else if (!cfg.cold_start) {
                prev = f->state;
            }
            out.refinement.push_back(std::move(v));
            refined.push_back(std::move(f));
        }
    }

    out.path = std::move(path);
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    auto consider = [&](const BicValue& v, std::size_t i, bool is_refined) {
        if (v.degenerate) return;
        const double value = cfg.criterion == Criterion::bic ? v.bic : v.ebic;
        if (!found || value < best) {
            best = value;
            out.chosen = i;
            out.chosen_refined = is_refined;
            found = true;
        }
    };
    for (std::size_t i = 0; i < m; ++i) consider(out.path[i], i, false);
    for (std::size_t i = 0; i < out.refinement.size(); ++i) consider(out.refinement[i], i, true);
    if (!found) throw TuningError("every lambda on the grid is degenerate");
    if (out.chosen_refined) {
        out.lambda = out.refinement[out.chosen].lambda;
        out.fit = std::move(*refined[out.chosen]);
    } else {
        out.lambda = grid[out.chosen];
        out.fit = std::move(*fits[out.chosen]);
    }
    return out;
}

}  // namespace lmmsel
