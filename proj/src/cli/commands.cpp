#include "lmmsel/cli/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "CLI11.hpp"
#include "lmmsel/cli/csv.hpp"
#include "lmmsel/cli/serialize.hpp"

#ifndef LMMSEL_VERSION
#define LMMSEL_VERSION "0.0.0"
#endif

namespace lmmsel::cli {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest plumbing

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256 initialization failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> argv)
        : command_(std::move(command)), argv_(std::move(argv)) {}

    void input(const std::string& path) { inputs_.push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
    void output(const std::string& path) { outputs_.push_back(path); }
    void config(json c) { config_ = std::move(c); }
    void seed(std::uint64_t s) { seed_ = s; }

    // Starts (or restarts) timing of a named phase.
    void phase(const std::string& name) {
        stop();
        current_ = name;
        start_ = std::chrono::steady_clock::now();
    }
    void stop() {
        if (current_.empty()) return;
        timings_[current_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        current_.clear();
    }

    void write(const fs::path& dir) {
        stop();
        json doc = {{"schema", kManifestSchema},
                    {"command", command_},
                    {"argv", argv_},
                    {"version", LMMSEL_VERSION},
                    {"config", config_},
                    {"seed", seed_ ? json(*seed_) : json(nullptr)},
                    {"inputs", inputs_},
                    {"outputs", outputs_},
                    {"timings_seconds", timings_}};
        write_json((dir / "manifest.json").string(), doc);
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    json inputs_ = json::array();
    std::vector<std::string> outputs_;
    json config_ = json::object();
    std::optional<std::uint64_t> seed_;
    std::map<std::string, double> timings_;
    std::string current_;
    std::chrono::steady_clock::time_point start_;
};

fs::path prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
    return fs::path(dir);
}

// ---------------------------------------------------------------------------
// Data ingestion

struct DataOptions {
    std::string y;
    std::string x;
    std::string groups;
    std::string covariate_cols;
    std::vector<std::string> relationships;
    bool standardize = false;
    bool penalize_intercept = false;
    bool add_intercept = false;

    json snapshot() const {
        return {{"y", y},
                {"x", x},
                {"groups", groups},
                {"covariate_cols", covariate_cols},
                {"relationships", relationships},
                {"standardize", standardize},
                {"penalize_intercept", penalize_intercept},
                {"add_intercept", add_intercept}};
    }
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
    cmd->add_option("--y", o.y, "response CSV (header + one column)")->required();
    cmd->add_option("--x", o.x, "design CSV (header = column names)")->required();
    cmd->add_option("--groups", o.groups, "grouping CSV, one 1-based integer column per random effect");
    cmd->add_option("--covariate-cols", o.covariate_cols,
                    "comma list aligned with the group columns: X column name or 1-based number "
                    "interacted with the factor, '-' for a plain intercept effect");
    cmd->add_option("--relationship", o.relationships,
                    "K=PATH: relationship matrix (N_k x N_k CSV with header) for group column K")
        ->take_all();
    cmd->add_flag("--standardize", o.standardize, "center and scale non-intercept columns before fitting");
    cmd->add_flag("--penalize-intercept", o.penalize_intercept, "apply the l1 penalty to the intercept too");
    cmd->add_flag("--add-intercept", o.add_intercept, "prepend a column of ones named 'intercept'");
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
    }
    return out;
}

// Resolves a column given by name or by 1-based number.
std::size_t resolve_column(const std::string& token, const std::vector<std::string>& names, const std::string& what) {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == token) return j;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(token, &used);
        if (used == token.size() && v >= 1 && static_cast<std::size_t>(v) <= names.size())
            return static_cast<std::size_t>(v - 1);
    } catch (const std::exception&) {
    }
    throw ConfigError("unknown " + what + " '" + token + "'");
}

struct Loaded {
    MixedModelData data;
    std::optional<Standardized> standardization;
    std::optional<std::size_t> intercept;
};

Loaded load_data(const DataOptions& o, Manifest& manifest) {
    manifest.input(o.y);
    manifest.input(o.x);
    Vector y = read_vector(o.y);
    const CsvTable xt = read_csv(o.x);
    Matrix X = numeric_matrix(xt, o.x);
    std::vector<std::string> names = xt.header;
    if (o.add_intercept) {
        Matrix with(X.rows(), X.cols() + 1);
        with.col(0).setOnes();
        with.rightCols(X.cols()) = X;
        X = std::move(with);
        names.insert(names.begin(), "intercept");
    }
    if (X.rows() != y.size())
        throw DimensionError(fmt::format("{} has {} rows but {} has {}", o.x, X.rows(), o.y, y.size()));

    std::optional<std::size_t> intercept;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        if ((X.col(j).array() == 1.0).all()) {
            intercept = static_cast<std::size_t>(j);
            break;
        }

    std::optional<Standardized> st;
    if (o.standardize) {
        st = standardize(X, intercept ? IndexSet{*intercept} : IndexSet{});
        X = st->X;
    }

    std::vector<RandomEffectSpec> effects;
    if (!o.groups.empty()) {
        manifest.input(o.groups);
        const CsvTable gt = read_csv(o.groups);
        const auto cols = integer_columns(gt, o.groups);
        if (gt.rows.size() != static_cast<std::size_t>(y.size()))
            throw DimensionError(fmt::format("{} has {} rows but {} has {}", o.groups, gt.rows.size(), o.y, y.size()));
        std::vector<std::string> cov;
        if (!o.covariate_cols.empty()) {
            cov = split(o.covariate_cols, ',');
            if (cov.size() != cols.size())
                throw ConfigError(fmt::format("--covariate-cols has {} entries for {} group columns", cov.size(),
                                              cols.size()));
        }
        for (std::size_t k = 0; k < cols.size(); ++k) {
            RandomEffectSpec spec;
            spec.name = gt.header[k].empty() ? "u" + std::to_string(k + 1) : gt.header[k];
            try {
                spec.factor = GroupingFactor::from_one_based(cols[k]);
            } catch (const Error& e) {
                throw DataError(o.groups + ", column '" + spec.name + "': " + e.what());
            }
            if (!cov.empty() && cov[k] != "-" && !cov[k].empty())
                spec.covariate_column = resolve_column(cov[k], names, "covariate column");
            effects.push_back(std::move(spec));
        }
        std::vector<std::string> effect_names;
        for (const auto& e : effects) effect_names.push_back(e.name);
        for (const auto& rel : o.relationships) {
            const auto eq = rel.find('=');
            if (eq == std::string::npos) throw ConfigError("--relationship expects K=PATH, got '" + rel + "'");
            const std::size_t k = resolve_column(rel.substr(0, eq), effect_names, "group column");
            const std::string path = rel.substr(eq + 1);
            manifest.input(path);
            effects[k].relationship = numeric_matrix(read_csv(path), path);
        }
    } else if (!o.covariate_cols.empty() || !o.relationships.empty()) {
        throw ConfigError("--covariate-cols and --relationship need --groups");
    }

    IndexSet base;
    if (intercept && !o.penalize_intercept) base.push_back(*intercept);
    return {MixedModelData(std::move(y), std::move(X), std::move(effects), base, std::move(names)), std::move(st),
            intercept};
}

json data_summary(const Loaded& l) {
    json effects = json::array();
    for (std::size_t k = 0; k < l.data.q(); ++k) {
        const auto& e = l.data.effect(k);
        effects.push_back({{"name", e.name},
                           {"levels", e.factor.level_count()},
                           {"covariate", e.covariate_column ? json(l.data.column_names()[*e.covariate_column])
                                                            : json(nullptr)},
                           {"relationship", e.relationship.has_value()}});
    }
    return {{"n", l.data.n()},
            {"p", l.data.p()},
            {"q", l.data.q()},
            {"intercept", l.intercept ? json(l.data.column_names()[*l.intercept]) : json(nullptr)},
            {"penalty_exempt", [&] {
                 json names = json::array();
                 for (std::size_t j : l.data.unpenalized_base()) names.push_back(l.data.column_names()[j]);
                 return names;
             }()},
            {"standardized", l.standardization.has_value()},
            {"effects", std::move(effects)}};
}

// Adds the original-scale coefficients when the design was standardized.
void add_original_scale(json& block, const Loaded& l, const FitResult& fit) {
    if (!l.standardization) return;
    const Vector b = unstandardize_coefficients(fit.state.beta, *l.standardization, l.intercept);
    json beta = json::array();
    for (std::size_t j = 0; j < l.data.p(); ++j)
        beta.push_back({{"name", l.data.column_names()[j]}, {"value", b(static_cast<Eigen::Index>(j))}});
    block["beta_original_scale"] = std::move(beta);
}

// ---------------------------------------------------------------------------
// Shared fit options

struct FitOptions {
    std::string selector = "lasso";
    std::size_t max_iter = 300;
    std::optional<std::size_t> support_cap;
    bool refit = false;

    EcmConfig ecm() const {
        EcmConfig c;
        c.selector = selector;
        c.max_iter = max_iter;
        c.support_cap = support_cap;
        c.validate();
        return c;
    }
    json snapshot() const {
        return {{"selector", selector},
                {"max_iter", max_iter},
                {"support_cap", support_cap ? json(*support_cap) : json(nullptr)},
                {"refit", refit}};
    }
};

void add_fit_options(CLI::App* cmd, FitOptions& o) {
    cmd->add_option("--selector", o.selector, "fixed-effect selector")
        ->check(CLI::IsMember(selector_names()))
        ->capture_default_str();
    cmd->add_option("--max-iter", o.max_iter, "ECM iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--support-cap", o.support_cap, "abort when more fixed effects are selected (default min(n-1,p))");
    cmd->add_flag("--refit", o.refit, "append an unpenalized ML refit of the selected model");
}

json refit_block(const Loaded& l, const FitResult& fit, const EcmConfig& ecm) {
    const FitResult rf = refit(l.data, fit.support, fit.state.active, ecm);
    json block = fit_block(l.data, rf);
    add_original_scale(block, l, rf);
    return block;
}

std::string fit_path(const fs::path& dir) { return (dir / "fit.json").string(); }

// ---------------------------------------------------------------------------
// Commands

struct FitCommand {
    DataOptions data;
    FitOptions fit;
    double lambda = -1.0;
    std::string out_dir = ".";

    int run(Manifest& m, std::ostream& out) {
        if (lambda < 0.0) throw ConfigError("--lambda must be >= 0");
        m.config({{"data", data.snapshot()}, {"fit", fit.snapshot()}, {"lambda", lambda}, {"out_dir", out_dir}});
        m.phase("load");
        const Loaded l = load_data(data, m);
        if (lambda == 0.0 && l.data.p() >= l.data.n()) throw ConfigError("penalty required when p ≥ n");
        const fs::path dir = prepare_out_dir(out_dir);

        m.phase("fit");
        EcmConfig ecm = fit.ecm();
        ecm.lambda = lambda;
        const FitResult result = lmmsel::fit(l.data, ecm);
        json doc = {{"schema", kFitSchema}, {"command", "fit"}, {"data", data_summary(l)}};
        doc["fit"] = fit_block(l.data, result);
        add_original_scale(doc["fit"], l, result);
        if (fit.refit) {
            m.phase("refit");
            doc["refit"] = refit_block(l, result, ecm);
        }

        m.phase("write");
        write_json(fit_path(dir), doc);
        m.output(fit_path(dir));
        m.write(dir);
        out << fmt::format("lambda {} |J| {} active effects {} objective {} -> {}\n", format_double(lambda),
                           result.support.size(), result.state.active.size(), format_double(result.objective),
                           fit_path(dir));
        return kExitOk;
    }
};

struct TuneCommand {
    DataOptions data;
    FitOptions fit;
    std::size_t grid_size = 50;
    double min_ratio = 0.01;
    std::string criterion = "bic";
    bool cold_start = false;
    std::size_t threads = 1;
    std::size_t edge_refinement = 10;
    std::string truth;
    std::string out_dir = ".";

    void write_path(const std::string& path, const std::vector<BicValue>& entries,
                    const std::optional<IndexSet>& truth_support) const {
        std::ofstream os(path);
        if (!os) throw DataError("cannot write " + path);
        os << "lambda,bic,ebic,support_size,sigma2_e,degenerate,loglik_part,df,active_effects,converged";
        if (truth_support) os << ",tp";
        os << ",note\n";
        for (const auto& v : entries) {
            const bool fitted = !v.degenerate || v.df > 0;
            auto num = [&](double x) { return fitted ? format_double(x) : std::string(); };
            os << format_double(v.lambda) << ',' << num(v.bic) << ',' << num(v.ebic) << ','
               << (fitted ? std::to_string(v.support_size) : "") << ',' << num(v.sigma2_e) << ','
               << (v.degenerate ? 1 : 0) << ',' << num(v.loglik_part) << ','
               << (fitted ? std::to_string(v.df) : "") << ',' << (fitted ? std::to_string(v.active_effects) : "")
               << ',' << (fitted ? (v.converged ? "1" : "0") : "");
            if (truth_support) {
                std::size_t tp = 0;
                for (std::size_t j : v.support) tp += contains(*truth_support, j) ? 1 : 0;
                os << ',' << (fitted ? std::to_string(tp) : "");
            }
            os << ',' << csv_field(v.note) << '\n';
        }
    }

    int run(Manifest& m, std::ostream& out) {
        if (criterion != "bic" && criterion != "ebic") throw ConfigError("--criterion must be bic or ebic");
        m.config({{"data", data.snapshot()},
                  {"fit", fit.snapshot()},
                  {"grid_size", grid_size},
                  {"min_ratio", min_ratio},
                  {"criterion", criterion},
                  {"cold_start", cold_start},
                  {"threads", threads},
                  {"edge_refinement", edge_refinement},
                  {"truth", truth},
                  {"out_dir", out_dir}});
        m.phase("load");
        const Loaded l = load_data(data, m);
        std::optional<IndexSet> truth_support;
        if (!truth.empty()) {
            m.input(truth);
            truth_support = support_from_truth(read_json(truth));
            for (std::size_t j : *truth_support)
                if (j >= l.data.p()) throw DataError("truth support column out of range");
        }
        const fs::path dir = prepare_out_dir(out_dir);

        m.phase("tune");
        TuningConfig tcfg;
        tcfg.ecm = fit.ecm();
        tcfg.criterion = criterion == "bic" ? Criterion::bic : Criterion::ebic;
        tcfg.cold_start = cold_start;
        tcfg.threads = threads;
        tcfg.edge_refinement = edge_refinement;
        auto sel = make_selector(fit.selector);
        sel->prepare(l.data.X(), l.data.y());
        const auto grid = lambda_grid(l.data, grid_size, min_ratio, sel->penalty_weights(l.data.p()));
        const TuningResult tr = tune(l.data, grid, tcfg);

        json doc = {{"schema", kFitSchema}, {"command", "tune"}, {"data", data_summary(l)}};
        doc["fit"] = fit_block(l.data, tr.fit);
        add_original_scale(doc["fit"], l, tr.fit);
        doc["tuning"] = {{"criterion", criterion},
                         {"lambda", tr.lambda},
                         {"chosen_index", tr.chosen},
                         {"chosen_from_refinement", tr.chosen_refined},
                         {"grid_size", grid_size},
                         {"min_ratio", min_ratio},
                         {"edge_refinement", edge_refinement},
                         {"cold_start", cold_start}};
        if (truth_support) {
            std::size_t tp = 0;
            for (std::size_t j : tr.fit.support) tp += contains(*truth_support, j) ? 1 : 0;
            doc["tuning"]["tp"] = tp;
            doc["tuning"]["support_exact"] = tr.fit.support == *truth_support;
        }
        if (fit.refit) {
            m.phase("refit");
            doc["refit"] = refit_block(l, tr.fit, tcfg.ecm);
        }

        m.phase("write");
        const std::string path_csv = (dir / "path.csv").string();
        const std::string refine_csv = (dir / "refinement.csv").string();
        write_path(path_csv, tr.path, truth_support);
        write_path(refine_csv, tr.refinement, truth_support);
        write_json(fit_path(dir), doc);
        for (const auto& p : {path_csv, refine_csv, fit_path(dir)}) m.output(p);
        m.write(dir);
        out << fmt::format("chosen lambda {} |J| {}{} -> {}\n", format_double(tr.lambda), tr.fit.support.size(),
                           truth_support ? fmt::format(" TP {}", doc["tuning"]["tp"].get<std::size_t>()) : "",
                           path_csv);
        return kExitOk;
    }
};

struct SimulateCommand {
    std::string model;
    std::size_t reps = 100;
    std::uint64_t seed = 1;
    std::string method = "lasso+";
    std::optional<double> alpha;
    bool refit = false;
    std::size_t threads = 1;
    std::size_t grid_size = 50;
    double min_ratio = 0.01;
    std::string criterion = "bic";
    bool cold_start = false;
    std::size_t edge_refinement = 10;
    std::optional<std::uint64_t> fixed_support_seed;
    std::string out_dir = ".";

    int run(Manifest& m, std::ostream& out) {
        const auto methods = study_methods();
        if (std::find(methods.begin(), methods.end(), method) == methods.end())
            throw ConfigError("unsupported method '" + method + "' (supported: lasso, adlasso, lasso+, adlasso+)");
        if (alpha) throw ConfigError("--alpha only applies to procbol-type methods, which are not supported");
        if (reps == 0) throw ConfigError("--reps must be at least 1");
        if (criterion != "bic" && criterion != "ebic") throw ConfigError("--criterion must be bic or ebic");

        StudyConfig cfg;
        cfg.scenario = scenario(model);
        cfg.reps = reps;
        cfg.method = method;
        cfg.base_seed = seed;
        cfg.refit = refit;
        cfg.threads = threads;
        cfg.grid_size = grid_size;
        cfg.min_ratio = min_ratio;
        cfg.criterion = criterion == "bic" ? Criterion::bic : Criterion::ebic;
        cfg.cold_start = cold_start;
        cfg.edge_refinement = edge_refinement;
        cfg.generate.fixed_support_seed = fixed_support_seed;
        m.config({{"model", model},
                  {"reps", reps},
                  {"method", method},
                  {"refit", refit},
                  {"threads", threads},
                  {"grid_size", grid_size},
                  {"min_ratio", min_ratio},
                  {"criterion", criterion},
                  {"cold_start", cold_start},
                  {"edge_refinement", edge_refinement},
                  {"fixed_support_seed", fixed_support_seed ? json(*fixed_support_seed) : json(nullptr)},
                  {"out_dir", out_dir}});
        m.seed(seed);
        const fs::path dir = prepare_out_dir(out_dir);

        m.phase("simulate");
        const StudyResult result = run_study(cfg);

        m.phase("write");
        const std::string agg = (dir / "aggregate.csv").string();
        const std::string per = (dir / "replicates.csv").string();
        const std::string js = (dir / "study.json").string();
        {
            std::ofstream os(agg);
            if (!os) throw DataError("cannot write " + agg);
            write_aggregate_csv(os, result);
        }
        {
            std::ofstream os(per);
            if (!os) throw DataError("cannot write " + per);
            write_replicate_csv(os, result);
        }
        write_json(js, study_json(result));
        for (const auto& p : {agg, per, js}) m.output(p);
        m.write(dir);
        write_aggregate_csv(out, result);
        return kExitOk;
    }
};

struct GenerateCommand {
    std::string model;
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> fixed_support_seed;
    std::string out_dir = ".";

    int run(Manifest& m, std::ostream& out) {
        const SimulationScenario sc = scenario(model);
        m.config({{"model", model},
                  {"fixed_support_seed", fixed_support_seed ? json(*fixed_support_seed) : json(nullptr)},
                  {"out_dir", out_dir}});
        m.seed(seed);
        const fs::path dir = prepare_out_dir(out_dir);
        m.phase("generate");
        GenerateOptions opts;
        opts.fixed_support_seed = fixed_support_seed;
        const Simulated sim = generate(sc, seed, opts);
        const auto& d = sim.data;

        m.phase("write");
        const std::string ypath = (dir / "y.csv").string();
        const std::string xpath = (dir / "x.csv").string();
        const std::string gpath = (dir / "groups.csv").string();
        const std::string tpath = (dir / "truth.json").string();
        {
            std::ofstream os(ypath);
            os << "y\n";
            for (Eigen::Index i = 0; i < d.y().size(); ++i) os << format_double(d.y()(i)) << '\n';
        }
        {
            std::ofstream os(xpath);
            for (std::size_t j = 0; j < d.p(); ++j) os << (j ? "," : "") << d.column_names()[j];
            os << '\n';
            for (Eigen::Index i = 0; i < d.X().rows(); ++i) {
                for (Eigen::Index j = 0; j < d.X().cols(); ++j) os << (j ? "," : "") << format_double(d.X()(i, j));
                os << '\n';
            }
        }
        std::string covariates;
        {
            std::ofstream os(gpath);
            for (std::size_t k = 0; k < d.q(); ++k) os << (k ? "," : "") << d.effect(k).name;
            os << '\n';
            for (std::size_t i = 0; i < d.n(); ++i) {
                for (std::size_t k = 0; k < d.q(); ++k) os << (k ? "," : "") << d.effect(k).factor.level(i) + 1;
                os << '\n';
            }
            for (std::size_t k = 0; k < d.q(); ++k)
                covariates += (k ? "," : "") + d.column_names()[*d.effect(k).covariate_column];
        }
        json truth = truth_json(sim.truth);
        truth["model"] = sc.name;
        truth["seed"] = seed;
        truth["covariate_cols"] = covariates;
        write_json(tpath, truth);
        for (const auto& p : {ypath, xpath, gpath, tpath}) m.output(p);
        m.write(dir);
        out << fmt::format("{} seed {} -> {} (use --covariate-cols {})\n", sc.name, seed, dir.string(), covariates);
        return kExitOk;
    }
};

struct VerifyCommand {
    DataOptions data;
    std::string fit_file;
    std::string block = "fit";
    double tolerance = 1e-10;

    int run(Manifest& m, std::ostream& out) {
        m.config({{"data", data.snapshot()}, {"fit_file", fit_file}, {"block", block}, {"tolerance", tolerance}});
        m.phase("load");
        m.input(fit_file);
        const json doc = read_json(fit_file);
        if (doc.value("schema", "") != kFitSchema)
            throw DataError(fit_file + ": not a fit result (schema " + doc.value("schema", "?") + ")");
        if (!doc.contains(block)) throw ConfigError(fit_file + " has no '" + block + "' block");
        const json& b = doc.at(block);
        const Loaded l = load_data(data, m);

        m.phase("verify");
        const ParameterState state = state_from_block(l.data, b);
        const double lambda = b.at("lambda").get<double>();
        auto sel = make_selector(b.at("selector").get<std::string>());
        sel->prepare(l.data.X(), l.data.y());
        const Vector w = penalty_weights(l.data, state.active, sel->penalty_weights(l.data.p()));
        const double recomputed = neg2_penalized_marginal(l.data, state, lambda, w);
        const double stored = b.at("objective").get<double>();
        const double diff = std::abs(recomputed - stored);
        const bool ok = diff <= tolerance * std::max(1.0, std::abs(stored));
        out << json{{"block", block},
                    {"stored_objective", stored},
                    {"recomputed_objective", recomputed},
                    {"abs_diff", diff},
                    {"tolerance", tolerance},
                    {"ok", ok}}
                   .dump()
            << '\n';
        return ok ? kExitOk : kExitNumeric;
    }
};

std::string error_type(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const DataError*>(&e)) return "data";
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
    if (dynamic_cast<const DegenerateColumnError*>(&e)) return "degenerate_column";
    if (dynamic_cast<const RankError*>(&e)) return "rank";
    if (dynamic_cast<const SupportCapError*>(&e)) return "support_cap";
    if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric";
    if (dynamic_cast<const TuningError*>(&e)) return "tuning";
    if (dynamic_cast<const json::exception*>(&e)) return "data";
    return "internal";
}

void report_error(std::ostream& err, const std::string& command, const std::exception& e, int code) {
    json j = {{"error", {{"type", error_type(e)}, {"message", e.what()}, {"command", command}, {"exit_code", code}}}};
    if (const auto* cap = dynamic_cast<const SupportCapError*>(&e)) {
        j["error"]["support_size"] = cap->support_size();
        j["error"]["cap"] = cap->cap();
    }
    if (const auto* col = dynamic_cast<const DegenerateColumnError*>(&e)) j["error"]["column"] = col->column() + 1;
    err << j.dump() << '\n';
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const DegenerateColumnError*>(&e) || dynamic_cast<const RankError*>(&e) ||
        dynamic_cast<const json::exception*>(&e))
        return kExitData;
    return kExitNumeric;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fixed-effect selection in linear mixed models by l1-penalized ECM", "lmmsel"};
    app.set_version_flag("--version", std::string(LMMSEL_VERSION));
    app.require_subcommand(1);

    FitCommand fit_cmd;
    auto* fit = app.add_subcommand("fit", "fit at a fixed lambda");
    add_data_options(fit, fit_cmd.data);
    add_fit_options(fit, fit_cmd.fit);
    fit->add_option("--lambda", fit_cmd.lambda, "penalty level")->required();
    fit->add_option("--out-dir", fit_cmd.out_dir, "output directory")->capture_default_str();

    TuneCommand tune_cmd;
    auto* tune = app.add_subcommand("tune", "fit a lambda path and choose lambda by BIC/EBIC");
    add_data_options(tune, tune_cmd.data);
    add_fit_options(tune, tune_cmd.fit);
    tune->add_option("--grid-size", tune_cmd.grid_size, "number of lambda values")->capture_default_str();
    tune->add_option("--min-ratio", tune_cmd.min_ratio, "smallest lambda / lambda_max")->capture_default_str();
    tune->add_option("--criterion", tune_cmd.criterion, "bic or ebic")->capture_default_str();
    tune->add_flag("--cold-start", tune_cmd.cold_start, "initialize every lambda independently");
    tune->add_option("--threads", tune_cmd.threads, "worker threads for --cold-start")->capture_default_str();
    tune->add_option("--edge-refine", tune_cmd.edge_refinement,
                     "extra lambdas fitted just above the first degenerate grid point (0 disables)")
        ->capture_default_str();
    tune->add_option("--truth", tune_cmd.truth, "truth.json from 'generate': adds TP to the outputs");
    tune->add_option("--out-dir", tune_cmd.out_dir, "output directory")->capture_default_str();

    SimulateCommand sim_cmd;
    auto* sim = app.add_subcommand("simulate", "run a simulation study on M1..M4");
    sim->add_option("--model", sim_cmd.model, "M1, M2, M3 or M4")->required();
    sim->add_option("--reps", sim_cmd.reps, "number of replicates")->capture_default_str();
    sim->add_option("--seed", sim_cmd.seed, "base seed")->capture_default_str();
    sim->add_option("--method", sim_cmd.method, "lasso, adlasso, lasso+ or adlasso+")->capture_default_str();
    sim->add_option("--alpha", sim_cmd.alpha, "procbol level (procbol-type methods are not supported)");
    sim->add_flag("--refit", sim_cmd.refit, "also score an unpenalized ML refit of each selected model");
    sim->add_option("--threads", sim_cmd.threads, "replicates run concurrently")->capture_default_str();
    sim->add_option("--grid-size", sim_cmd.grid_size, "lambda values per replicate")->capture_default_str();
    sim->add_option("--min-ratio", sim_cmd.min_ratio, "smallest lambda / lambda_max")->capture_default_str();
    sim->add_option("--criterion", sim_cmd.criterion, "bic or ebic")->capture_default_str();
    sim->add_flag("--cold-start", sim_cmd.cold_start, "initialize every lambda independently");
    sim->add_option("--edge-refine", sim_cmd.edge_refinement, "edge refinement points (0 disables)")
        ->capture_default_str();
    sim->add_option("--fixed-support-seed", sim_cmd.fixed_support_seed,
                    "M2: draw the random part of J once from this seed");
    sim->add_option("--out-dir", sim_cmd.out_dir, "output directory")->capture_default_str();

    GenerateCommand gen_cmd;
    auto* gen = app.add_subcommand("generate", "write one simulated data set as CSV files");
    gen->add_option("--model", gen_cmd.model, "M1, M2, M3 or M4")->required();
    gen->add_option("--seed", gen_cmd.seed, "replicate seed")->capture_default_str();
    gen->add_option("--fixed-support-seed", gen_cmd.fixed_support_seed, "M2: seed of the support draw");
    gen->add_option("--out-dir", gen_cmd.out_dir, "output directory")->capture_default_str();

    VerifyCommand ver_cmd;
    auto* ver = app.add_subcommand("verify", "recompute the objective stored in a fit result");
    add_data_options(ver, ver_cmd.data);
    ver->add_option("--fit", ver_cmd.fit_file, "fit.json written by 'fit' or 'tune'")->required();
    ver->add_option("--block", ver_cmd.block, "fit or refit")->capture_default_str();
    ver->add_option("--tolerance", ver_cmd.tolerance, "relative tolerance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        json j = {{"error", {{"type", "usage"}, {"message", e.what()}, {"exit_code", kExitUsage}}}};
        err << j.dump() << '\n';
        return kExitUsage;
    }

    std::vector<std::string> args(argv, argv + argc);
    CLI::App* chosen = app.get_subcommands().front();
    Manifest manifest(chosen->get_name(), args);
    try {
        if (chosen == fit) return fit_cmd.run(manifest, out);
        if (chosen == tune) return tune_cmd.run(manifest, out);
        if (chosen == sim) return sim_cmd.run(manifest, out);
        if (chosen == gen) return gen_cmd.run(manifest, out);
        return ver_cmd.run(manifest, out);
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        report_error(err, chosen->get_name(), e, code);
        return code;
    }
}

}  // namespace lmmsel::cli
