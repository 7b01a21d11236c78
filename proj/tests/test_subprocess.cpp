#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "surftune/subprocess.hpp"

using namespace surftune;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("surftune_sub_" + std::to_string(::getpid()) + "_" +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string script(const std::string& name, const std::string& body) const {
        const auto p = path / name;
        std::ofstream(p) << "#!/bin/sh\n" << body << '\n';
        fs::permissions(p, fs::perms::owner_all);
        return p.string();
    }
};

const ParameterSpace space({{"alpha", 0.0, 10.0}, {"beta", -1.0, 1.0}});

Configuration config() {
    const double u[] = {0.25, 1.0};
    return make_configuration(7, u, space, Origin::initial_sample, 0);
}

}  // namespace

TEST(Protocol, RequestLineLayout) {
    EXPECT_EQ(evaluator_request_line(space, config(), {"i1", "uf1.dat"}, 42),
              "{\"params\":{\"alpha\":2.5,\"beta\":1.0},\"instance\":\"uf1.dat\",\"seed\":42}\n");
}

TEST(Protocol, MissingPayloadSendsId) {
    EXPECT_EQ(evaluator_request_line(space, config(), {"i1", ""}, 3),
              "{\"params\":{\"alpha\":2.5,\"beta\":1.0},\"instance\":\"i1\",\"seed\":3}\n");
}

TEST(Protocol, OutputParsing) {
    EXPECT_EQ(parse_evaluator_output("0.5"), 0.5);
    EXPECT_EQ(parse_evaluator_output("  -1.25e-3\n"), -1.25e-3);
    EXPECT_EQ(parse_evaluator_output(".5\n"), 0.5);
    EXPECT_EQ(parse_evaluator_output("+3."), 3.0);
    for (const char* bad : {"", "\n", "abc", "1.0 2.0", "nan", "inf", "1,5", "0x10", "1.0\nextra"})
        EXPECT_THROW(parse_evaluator_output(bad), tuning_error) << bad;
}

TEST(CommandEvaluator, SendsRequestAndReadsValue) {
    TempDir tmp;
    const auto log = (tmp.path / "request.txt").string();
    const auto cmd = tmp.script("ok.sh", "read line\nprintf '%s' \"$line\" > '" + log + "'\necho ' 0.75 '");
    CommandEvaluator ev(space, {cmd});
    EXPECT_EQ(ev.run(config(), {"i1", "payload x"}, 9), 0.75);
    std::ifstream in(log);
    std::string got((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(got, "{\"params\":{\"alpha\":2.5,\"beta\":1.0},\"instance\":\"payload x\",\"seed\":9}");
}

TEST(CommandEvaluator, ArgvFormSkipsShell) {
    TempDir tmp;
    const auto cmd = tmp.script("arg.sh", "cat >/dev/null\necho \"$1\"");
    CommandEvaluator ev(space, {cmd, "0.125"});
    EXPECT_EQ(ev.run(config(), {"i1", ""}, 1), 0.125);
}

TEST(CommandEvaluator, MinimizeSenseStoresNegated) {
    TempDir tmp;
    const auto cmd = tmp.script("quarter.sh", "cat >/dev/null\necho 0.25");
    CommandEvaluator ev(space, {cmd});
    PerformanceArchive a;
    evaluate(config(), {"i1", ""}, 3, ev, Sense::minimize, a);
    EXPECT_EQ(a.observations().at(0).raw_value, -0.25);
}

TEST(CommandEvaluator, NonZeroExitFails) {
    TempDir tmp;
    CommandEvaluator ev(space, {tmp.script("fail.sh", "cat >/dev/null\necho 1.0\nexit 3")});
    PerformanceArchive a;
    try {
        evaluate(config(), {"i9", ""}, 1, ev, Sense::maximize, a);
        FAIL();
    } catch (const evaluation_failure& e) {
        EXPECT_EQ(e.config_id, 7);
        EXPECT_EQ(e.instance_id, "i9");
        EXPECT_NE(std::string(e.what()).find("status 3"), std::string::npos);
    }
    EXPECT_EQ(a.evaluation_count(), 0);
}

TEST(CommandEvaluator, NonNumericOutputFails) {
    TempDir tmp;
    CommandEvaluator ev(space, {tmp.script("bad.sh", "echo 'result: 0.5'")});
    EXPECT_THROW(ev.run(config(), {"i1", ""}, 1), evaluation_failure);
}

TEST(CommandEvaluator, MissingProgramFails) {
    CommandEvaluator ev(space, {"/nonexistent/evaluator", "x"});
    EXPECT_THROW(ev.run(config(), {"i1", ""}, 1), evaluation_failure);
}

TEST(CommandEvaluator, TimeoutKillsChild) {
    TempDir tmp;
    CommandEvaluator ev(space, {tmp.script("slow.sh", "sleep 30\necho 1")}, 0.3);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ev.run(config(), {"i1", ""}, 1);
        FAIL();
    } catch (const evaluation_failure& e) {
        EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
}

TEST(CommandEvaluator, FlakyEvaluatorRecoversOnRetry) {
    TempDir tmp;
    const auto marker = (tmp.path / "called").string();
    const auto cmd = tmp.script("flaky.sh", "cat >/dev/null\nif [ -e '" + marker + "' ]; then echo 0.9; else touch '" +
                                                marker + "'; exit 1; fi");
    CommandEvaluator ev(space, {cmd});
    const auto c = config();
    const InstanceDescriptor inst{"i1", ""};
    PerformanceArchive a;
    run_batch({{&c, &inst, 5}}, ev, {}, a);
    ASSERT_EQ(a.evaluation_count(), 1);
    EXPECT_EQ(a.observations()[0].raw_value, 0.9);
    EXPECT_EQ(a.observations()[0].seed, retry_seed(5));
}

TEST(CommandEvaluator, ConcurrentJobs) {
    TempDir tmp;
    const auto cmd = tmp.script("seed.sh", "read line\necho \"$line\" | sed 's/.*\"seed\":\\([0-9]*\\).*/\\1/'");
    CommandEvaluator ev(space, {cmd});
    std::vector<Configuration> cs;
    for (long i = 0; i < 12; ++i) {
        const double u[] = {0.5, 0.5};
        cs.push_back(make_configuration(i, u, space, Origin::initial_sample, 0));
    }
    const InstanceDescriptor inst{"i1", ""};
    std::vector<EvalTask> tasks;
    for (const auto& c : cs) tasks.push_back({&c, &inst, static_cast<std::uint64_t>(100 + c.id)});
    PerformanceArchive a;
    run_batch(tasks, ev, {Sense::maximize, 1, 4}, a);
    ASSERT_EQ(a.evaluation_count(), 12);
    for (long i = 0; i < 12; ++i) EXPECT_EQ(a.observations()[static_cast<std::size_t>(i)].raw_value, 100.0 + i);
}
