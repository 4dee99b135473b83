#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lmmsel/cli/commands.hpp"
#include "lmmsel/cli/csv.hpp"
#include "lmmsel/cli/serialize.hpp"

using namespace lmmsel;
using namespace lmmsel::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "lmmsel");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("lmmsel_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> data_args(const fs::path& gen) {
    return {"--y", (gen / "y.csv").string(), "--x", (gen / "x.csv").string(), "--groups",
            (gen / "groups.csv").string(), "--covariate-cols", "x1,x2,x3"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

fs::path generated_m1() {
    static const fs::path dir = [] {
        const fs::path d = scratch("gen_m1");
        REQUIRE(invoke({"generate", "--model", "M1", "--seed", "3", "--out-dir", d.string()}).code == kExitOk);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("csv parsing") {
    std::istringstream in("a,\"b,c\"\n1,\"x\"\"y\"\n\n2,\"multi\nline\"\n");
    const auto t = parse_csv(in, "mem");
    CHECK(t.header == std::vector<std::string>{"a", "b,c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x\"y");
    CHECK(t.rows[1][1] == "multi\nline");
    std::istringstream bad("a,b\n1\n");
    CHECK_THROWS_AS(parse_csv(bad, "mem"), DataError);
    std::istringstream text("a\nfoo\n");
    CHECK_THROWS_AS(numeric_matrix(parse_csv(text, "mem"), "mem"), DataError);
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("plain") == "plain");
}

TEST_CASE("doubles survive formatting") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("generate writes a readable data set") {
    const auto gen = generated_m1();
    CHECK(fs::exists(gen / "y.csv"));
    CHECK(fs::exists(gen / "manifest.json"));
    const auto x = read_csv((gen / "x.csv").string());
    CHECK(x.columns() == 80);
    CHECK(x.rows.size() == 120);
    const auto g = read_csv((gen / "groups.csv").string());
    CHECK(g.columns() == 3);
    const auto truth = read_json((gen / "truth.json").string());
    CHECK(support_from_truth(truth) == IndexSet{0, 1, 2, 3, 4});
    CHECK(truth.at("covariate_cols") == "x1,x2,x3");
}

TEST_CASE("fit writes the parameter blocks") {
    const auto gen = generated_m1();
    const auto out = scratch("fit");
    const auto r = invoke(cat(cat({"fit"}, data_args(gen)), {"--lambda", "40", "--refit", "--out-dir", out.string()}));
    REQUIRE(r.code == kExitOk);
    const auto doc = read_json((out / "fit.json").string());
    CHECK(doc.at("schema") == kFitSchema);
    CHECK(doc.at("fit").at("beta").size() == 80);
    CHECK(doc.at("fit").at("variances").size() <= 3);
    CHECK(doc.contains("refit"));
    const auto manifest = read_json((out / "manifest.json").string());
    CHECK(manifest.at("inputs").size() == 3);
    CHECK(manifest.at("inputs")[0].at("sha256").get<std::string>().size() == 64);

    const auto v = invoke(cat(cat({"verify"}, data_args(gen)), {"--fit", (out / "fit.json").string()}));
    CHECK(v.code == kExitOk);
    const auto vr = invoke(
        cat(cat({"verify"}, data_args(gen)), {"--fit", (out / "fit.json").string(), "--block", "refit"}));
    CHECK(vr.code == kExitOk);
}

TEST_CASE("verify detects a tampered objective") {
    const auto gen = generated_m1();
    const auto out = scratch("tamper");
    REQUIRE(invoke(cat(cat({"fit"}, data_args(gen)), {"--lambda", "40", "--out-dir", out.string()})).code == kExitOk);
    auto doc = read_json((out / "fit.json").string());
    doc["fit"]["objective"] = doc["fit"]["objective"].get<double>() + 1e-3;
    write_json((out / "fit.json").string(), doc);
    const auto v = invoke(cat(cat({"verify"}, data_args(gen)), {"--fit", (out / "fit.json").string()}));
    CHECK(v.code == kExitNumeric);
}

TEST_CASE("lambda zero needs p < n") {
    const fs::path dir = scratch("wide");
    {
        std::ofstream y(dir / "y.csv"), x(dir / "x.csv");
        y << "y\n";
        x << "a,b,c,d\n";
        for (int i = 0; i < 3; ++i) {
            y << i * 0.5 + 1 << '\n';
            x << 1 << ',' << i << ',' << i * i << ',' << (i % 2) << '\n';
        }
    }
    const auto r = invoke({"fit", "--y", (dir / "y.csv").string(), "--x", (dir / "x.csv").string(), "--lambda", "0",
                           "--out-dir", dir.string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("penalty required when p") != std::string::npos);
}

TEST_CASE("tune writes one path row per grid value") {
    const auto gen = generated_m1();
    const auto out = scratch("tune");
    const auto r = invoke(cat(cat({"tune"}, data_args(gen)), {"--grid-size", "12", "--truth",
                                                               (gen / "truth.json").string(), "--out-dir",
                                                               out.string()}));
    REQUIRE(r.code == kExitOk);
    const auto path = read_csv((out / "path.csv").string());
    CHECK(path.rows.size() == 12);
    CHECK(std::find(path.header.begin(), path.header.end(), "tp") != path.header.end());
    CHECK(std::find(path.header.begin(), path.header.end(), "degenerate") != path.header.end());
    const auto doc = read_json((out / "fit.json").string());
    CHECK(doc.at("tuning").contains("tp"));
}

TEST_CASE("simulate is byte-for-byte reproducible") {
    const auto a = scratch("sim_a");
    const auto b = scratch("sim_b");
    const std::vector<std::string> args{"simulate", "--model", "M1", "--reps", "3", "--seed", "7", "--grid-size", "15"};
    REQUIRE(invoke(cat(args, {"--out-dir", a.string()})).code == kExitOk);
    REQUIRE(invoke(cat(args, {"--out-dir", b.string(), "--threads", "2"})).code == kExitOk);
    CHECK(slurp(a / "aggregate.csv") == slurp(b / "aggregate.csv"));
    CHECK(slurp(a / "replicates.csv") == slurp(b / "replicates.csv"));
}

TEST_CASE("usage and data errors map to exit codes") {
    CHECK(invoke({"simulate", "--model", "M1", "--reps", "0"}).code == kExitUsage);
    CHECK(invoke({"simulate", "--model", "M1", "--alpha", "0.1"}).code == kExitUsage);
    CHECK(invoke({"simulate", "--model", "M7"}).code == kExitUsage);
    CHECK(invoke({"bogus"}).code == kExitUsage);
    CHECK(invoke({}).code == kExitUsage);
    const auto missing = invoke({"fit", "--y", "/nonexistent/y.csv", "--x", "/nonexistent/x.csv", "--lambda", "1"});
    CHECK(missing.code == kExitData);
    const auto err = json::parse(missing.err);
    CHECK(err.at("error").at("type") == "data");
    CHECK(exit_code_for(SupportCapError(5, 3)) == kExitNumeric);
    CHECK(exit_code_for(ConvergenceError("x", Vector())) == kExitNumeric);
    CHECK(exit_code_for(DimensionError("x")) == kExitData);
    CHECK(exit_code_for(ConfigError("x")) == kExitUsage);
}
