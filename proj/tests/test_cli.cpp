#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "surftune/report.hpp"
#include "surftune/run_config.hpp"

using namespace surftune;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("surftune_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json sphere_doc(std::size_t instances = 8) {
    json doc;
    doc["parameters"] = json::array({{{"name", "alpha"}, {"lower", 0.0}, {"upper", 10.0}},
                                     {{"name", "beta"}, {"lower", -1.0}, {"upper", 1.0}}});
    for (const auto& inst : make_sphere_instances(instances, {0.7, 0.3}, 0.1, 3))
        doc["instances"].push_back({{"id", inst.id}, {"payload", inst.payload}});
    doc["evaluator"] = {{"type", "builtin"}, {"testbed", "sphere"}, {"noise_sd", 0.01}};
    doc["tuner"] = {{"m0", 10}, {"n0", 3}, {"n_star", 1}, {"m_star", 3}, {"elite_size", 3},
                    {"budget", 120}, {"basis_order", 2}, {"seed", 4}};
    return doc;
}

std::string config_error_text(const json& doc) {
    try {
        parse_run_config(doc);
    } catch (const config_error& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(TUNER_EXE) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfigLoad, MinimalFileGetsDefaults) {
    json doc;
    doc["parameters"] = json::array({{{"name", "a"}, {"lower", 0}, {"upper", 1}},
                                     {{"name", "b"}, {"lower", 0}, {"upper", 1}}});
    for (int j = 0; j < 6; ++j) doc["instances"].push_back({{"id", "i" + std::to_string(j)}, {"payload", "0.5,0.5"}});
    doc["evaluator"] = {{"type", "builtin"}, {"testbed", "sphere"}};
    const auto cfg = parse_run_config(doc);
    EXPECT_EQ(cfg.tuner.m0, 100u);
    EXPECT_EQ(cfg.tuner.m_star, 10u);
    EXPECT_EQ(cfg.tuner.n0, 5u);
    EXPECT_EQ(cfg.tuner.n_star, 1u);
    EXPECT_EQ(cfg.tuner.elite_size, 10u);
    EXPECT_EQ(cfg.tuner.budget, 1000);
    EXPECT_EQ(cfg.tuner.basis_order, 4);
    EXPECT_EQ(cfg.tuner.penalty, Penalty::lasso);
    EXPECT_EQ(cfg.tuner.cv_folds, 5);
    EXPECT_FALSE(cfg.tuner.max_iterations.has_value());
    EXPECT_EQ(cfg.evaluator.sense, Sense::maximize);
    EXPECT_EQ(cfg.evaluator.runs_per_pair, 1);
    EXPECT_EQ(cfg.evaluator.timeout_s, 3600.0);
    EXPECT_EQ(cfg.mode, RunMode::smbo);
}

TEST(RunConfigLoad, ZeroWidthRangeNamesParameter) {
    auto doc = sphere_doc();
    doc["parameters"][1]["lower"] = 1.0;
    const auto msg = config_error_text(doc);
    EXPECT_NE(msg.find("parameters[1]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("beta"), std::string::npos) << msg;
}

TEST(RunConfigLoad, BudgetBelowInitializationStatesMinimum) {
    auto doc = sphere_doc();
    doc["tuner"]["budget"] = 15;
    const auto msg = config_error_text(doc);
    EXPECT_NE(msg.find("20"), std::string::npos) << msg;  // 10 * (3 - 1)
    EXPECT_NE(msg.find("budget"), std::string::npos) << msg;
}

TEST(RunConfigLoad, EveryProblemReportedWithPath) {
    auto doc = sphere_doc();
    doc["tuner"]["m0"] = -1;
    doc["evaluator"]["sense"] = "sideways";
    doc["instances"][2]["id"] = "has,comma";
    doc["extra"] = 1;
    const auto msg = config_error_text(doc);
    for (const char* want : {"tuner.m0", "evaluator.sense", "instances[2].id", "extra: unknown field"})
        EXPECT_NE(msg.find(want), std::string::npos) << want << "\n" << msg;
}

TEST(RunConfigLoad, CommandEvaluatorForms) {
    auto doc = sphere_doc();
    doc["evaluator"] = {{"type", "command"}, {"command", json::array({"python3", "eval.py"})}, {"sense", "minimize"},
                        {"timeout_s", 5}, {"runs_per_pair", 2}};
    doc["tuner"]["budget"] = 40;
    const auto cfg = parse_run_config(doc);
    EXPECT_EQ(cfg.evaluator.kind, EvaluatorKind::command);
    EXPECT_EQ(cfg.evaluator.command, (std::vector<std::string>{"python3", "eval.py"}));
    EXPECT_EQ(cfg.evaluator.sense, Sense::minimize);
    doc["tuner"]["budget"] = 39;  // 10 * 2 * 2 needed
    EXPECT_NE(config_error_text(doc).find("40"), std::string::npos);
    doc["evaluator"]["command"] = 3;
    EXPECT_NE(config_error_text(doc).find("evaluator.command"), std::string::npos);
}

TEST(RunConfigLoad, FileErrors) {
    TempDir tmp;
    EXPECT_THROW(load_run_config(tmp.path / "missing.json"), config_error);
    std::ofstream(tmp.path / "bad.json") << "{\"parameters\": [";
    try {
        load_run_config(tmp.path / "bad.json");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos);
    }
}

TEST(RunConfigLoad, SpherePayloadMustMatchDimension) {
    auto doc = sphere_doc();
    doc["instances"][0]["payload"] = "0.5";
    EXPECT_NE(config_error_text(doc).find("instances[0].payload"), std::string::npos);
}

TEST(Reports, SmokeRunWritesAllFiles) {
    TempDir tmp;
    auto cfg = parse_run_config(sphere_doc());
    cfg.output_dir = (tmp.path / "out").string();
    ASSERT_EQ(run_and_report(cfg), 0);
    for (const char* f : {"result.json", "trace.csv", "archive.csv", "summary.txt"})
        EXPECT_TRUE(fs::exists(tmp.path / "out" / f)) << f;
    const auto result = json::parse(slurp(tmp.path / "out" / "result.json"));
    const long used = result["metadata"]["evaluations_used"];
    EXPECT_LE(used, 120);
    EXPECT_EQ(line_count(tmp.path / "out" / "archive.csv"), static_cast<std::size_t>(used) + 1);
    EXPECT_EQ(result["metadata"]["seed"], 4);
    EXPECT_FALSE(result["elites"].empty());
    EXPECT_TRUE(result["elites"][0]["raw"].contains("alpha"));
    EXPECT_TRUE(result["elites"][0]["unit"].contains("beta"));
    EXPECT_TRUE(result["model"]["unit"].contains("terms"));
    EXPECT_TRUE(result["model"]["raw"].contains("intercept_standard_error"));
    EXPECT_TRUE(result["model"].contains("lambda"));
    const auto summary = slurp(tmp.path / "out" / "summary.txt");
    EXPECT_NE(summary.find("y = "), std::string::npos);
    EXPECT_NE(summary.find("alpha"), std::string::npos);
    const auto trace = slurp(tmp.path / "out" / "trace.csv");
    EXPECT_EQ(trace.rfind("iteration,evaluations_used,best_p,lambda,support_size", 0), 0u);
}

TEST(Reports, SameSeedGivesIdenticalResultApartFromTimestamp) {
    TempDir tmp;
    auto cfg = parse_run_config(sphere_doc());
    std::string texts[2];
    for (int i = 0; i < 2; ++i) {
        cfg.output_dir = (tmp.path / ("run" + std::to_string(i))).string();
        ASSERT_EQ(run_and_report(cfg, i == 0 ? 1 : 3), 0);
        auto j = json::parse(slurp(fs::path(cfg.output_dir) / "result.json"));
        EXPECT_TRUE(j["metadata"].contains("created_at"));
        j["metadata"].erase("created_at");
        texts[i] = slurp(fs::path(cfg.output_dir) / "result.json");
        // strip the timestamp line for a byte comparison
        const auto pos = texts[i].find("\"created_at\"");
        texts[i].erase(pos, texts[i].find('\n', pos) - pos);
    }
    EXPECT_EQ(texts[0], texts[1]);
    EXPECT_EQ(slurp(tmp.path / "run0" / "archive.csv"), slurp(tmp.path / "run1" / "archive.csv"));
    EXPECT_EQ(slurp(tmp.path / "run0" / "trace.csv"), slurp(tmp.path / "run1" / "trace.csv"));
}

TEST(Reports, ArchiveCsvReproducesPerformances) {
    for (auto sense : {"maximize", "minimize"}) {
        TempDir tmp;
        auto doc = sphere_doc();
        doc["evaluator"]["sense"] = sense;
        doc["evaluator"]["runs_per_pair"] = 2;
        doc["tuner"]["budget"] = 240;
        auto cfg = parse_run_config(doc);
        cfg.output_dir = tmp.path.string();
        ASSERT_EQ(run_and_report(cfg), 0);
        std::ifstream in(tmp.path / "archive.csv");
        const auto archive = read_archive_csv(in, 2, cfg.evaluator.sense);
        const auto p = summarize_all(archive);
        const auto result = json::parse(slurp(tmp.path / "result.json"));
        ASSERT_EQ(result["performance"].size(), p.size());
        for (const auto& row : result["performance"]) EXPECT_EQ(row["p"].get<double>(), p.at(row["id"].get<long>()));
        for (const auto& e : result["elites"]) EXPECT_EQ(e["p"].get<double>(), p.at(e["id"].get<long>()));
    }
}

TEST(Reports, AbortStillFlushesTraceAndArchive) {
    TempDir tmp;
    const auto script = tmp.path / "eval.sh";
    std::ofstream(script) << "#!/bin/sh\nread line\n"
                          << "n=$(cat '" << (tmp.path / "count").string() << "' 2>/dev/null || echo 0)\n"
                          << "n=$((n+1)); echo $n > '" << (tmp.path / "count").string() << "'\n"
                          << "if [ $n -gt 25 ]; then exit 1; fi\necho 0.$n\n";
    fs::permissions(script, fs::perms::owner_all);
    auto doc = sphere_doc();
    doc["evaluator"] = {{"type", "command"}, {"command", script.string()}};
    auto cfg = parse_run_config(doc);
    cfg.output_dir = (tmp.path / "out").string();
    EXPECT_EQ(run_and_report(cfg), 2);
    // 20 initial evaluations plus 5 elite top-ups before the evaluator breaks
    EXPECT_EQ(line_count(tmp.path / "out" / "archive.csv"), 26u);
    EXPECT_TRUE(fs::exists(tmp.path / "out" / "trace.csv"));
    const auto result = json::parse(slurp(tmp.path / "out" / "result.json"));
    EXPECT_TRUE(result["metadata"]["aborted"].get<bool>());
    EXPECT_NE(slurp(tmp.path / "out" / "summary.txt").find("ABORTED"), std::string::npos);
}

TEST(Reports, CsvNumbersRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.30000000000000004})
        EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
    EXPECT_EQ(format_double(std::nan("")), "");
}

TEST(Cli, ExitStatuses) {
    TempDir tmp;
    const auto good = tmp.path / "good.json";
    std::ofstream(good) << sphere_doc().dump(2);
    EXPECT_EQ(run_cli("validate --config " + good.string()), 0);
    EXPECT_EQ(run_cli("run --config " + good.string() + " --out " + (tmp.path / "o").string() + " --seed 9 -q"), 0);
    const auto result = json::parse(slurp(tmp.path / "o" / "result.json"));
    EXPECT_EQ(result["metadata"]["seed"], 9);
    EXPECT_EQ(run_cli("run --config " + good.string() + " --out " + (tmp.path / "b").string() + " --baseline -q"), 0);
    EXPECT_EQ(json::parse(slurp(tmp.path / "b" / "result.json"))["metadata"]["mode"], "random-search");

    auto bad = sphere_doc();
    bad["parameters"][0]["upper"] = 0.0;
    std::ofstream(tmp.path / "bad.json") << bad.dump();
    EXPECT_EQ(run_cli("validate --config " + (tmp.path / "bad.json").string()), 1);
    EXPECT_EQ(run_cli("run --config " + (tmp.path / "nope.json").string()), 1);
    EXPECT_EQ(run_cli("frobnicate"), 1);

    auto failing = sphere_doc();
    failing["evaluator"] = {{"type", "command"}, {"command", "cat >/dev/null; exit 4"}};
    std::ofstream(tmp.path / "fail.json") << failing.dump();
    EXPECT_EQ(run_cli("run --config " + (tmp.path / "fail.json").string() + " --out " + (tmp.path / "f").string()), 2);
    EXPECT_TRUE(fs::exists(tmp.path / "f" / "archive.csv"));
}

TEST(Cli, NoEvaluatorLaunchedForInvalidConfig) {
    TempDir tmp;
    const auto marker = tmp.path / "launched";
    auto doc = sphere_doc();
    doc["evaluator"] = {{"type", "command"}, {"command", "touch '" + marker.string() + "'; echo 1"}};
    doc["tuner"]["cv_folds"] = 1;
    std::ofstream(tmp.path / "c.json") << doc.dump();
    EXPECT_EQ(run_cli("run --config " + (tmp.path / "c.json").string() + " --out " + (tmp.path / "o").string()), 1);
    EXPECT_FALSE(fs::exists(marker));
}
