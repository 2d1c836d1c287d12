#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "nncov/formats.hpp"
#include "nncov/hash.hpp"

namespace nncov {
namespace {

namespace fs = std::filesystem;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// One temporary directory per test, populated with a small trained pipeline.
class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("nncov_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void pipeline() {
        ASSERT_EQ(run({"gen-data", "--n", "200", "--seed", "3", "--out", path("train.ds"), "--test-out",
                       path("test.ds"), "--test-count", "50"})
                      .code,
                  0);
        ASSERT_EQ(run({"train", "--data", path("train.ds"), "--out", path("model.json"), "--hidden", "6,5",
                       "--epochs", "10"})
                      .code,
                  0);
        ASSERT_EQ(run({"profile", "--model", path("model.json"), "--data", path("train.ds"), "--out",
                       path("profile.json")})
                      .code,
                  0);
    }

    std::vector<std::string> cover_args(const std::string& data, const std::string& out) const {
        return {"cover", "--model", path("model.json"), "--profile", path("profile.json"), "--data", data,
                "--out", out};
    }

    fs::path dir_;
};

TEST_F(Cli, GenDataIsIdempotent) {
    ASSERT_EQ(run({"gen-data", "--kind", "moons", "--n", "64", "--seed", "5", "--out", path("a.ds")}).code, 0);
    ASSERT_EQ(run({"gen-data", "--kind", "moons", "--n", "64", "--seed", "5", "--out", path("b.ds")}).code, 0);
    EXPECT_EQ(read_file(path("a.ds")), read_file(path("b.ds")));
    EXPECT_EQ(parse_dataset(read_file(path("a.ds"))).size(), 64u);
}

TEST_F(Cli, ZeroRateTrainingReproducesTheInitialModel) {
    pipeline();
    ASSERT_EQ(run({"train", "--data", path("train.ds"), "--out", path("same.json"), "--init",
                   path("model.json"), "--lr", "0", "--epochs", "3"})
                  .code,
              0);
    EXPECT_EQ(model_id(parse_model(read_file(path("same.json")))),
              model_id(parse_model(read_file(path("model.json")))));
}

TEST_F(Cli, TrainingSetCoverageHasNoCorners) {
    pipeline();
    const auto r = run(cover_args(path("train.ds"), path("train.report")));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("NBC\t0.0000\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("SNAC\t0.0000\n"), std::string::npos) << r.out;
}

TEST_F(Cli, ShardCountDoesNotChangeTheReport) {
    pipeline();
    for (const char* shards : {"1", "3", "4"}) {
        auto args = cover_args(path("test.ds"), path(std::string("r") + shards));
        args.insert(args.end(), {"--shards", shards, "--state-out", path(std::string("s") + shards)});
        ASSERT_EQ(run(args).code, 0);
    }
    EXPECT_EQ(read_file(path("r1")), read_file(path("r4")));
    EXPECT_EQ(read_file(path("r1")), read_file(path("r3")));
    EXPECT_EQ(read_file(path("s1")), read_file(path("s4")));
}

TEST_F(Cli, TraceReplayMatchesDirectCoverage) {
    pipeline();
    auto args = cover_args(path("test.ds"), path("direct"));
    args.insert(args.end(), {"--trace-out", path("test.tr")});
    ASSERT_EQ(run(args).code, 0);
    const auto r = run({"cover", "--model", path("model.json"), "--profile", path("profile.json"),
                        "--trace-in", path("test.tr"), "--out", path("replayed")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_file(path("direct")), read_file(path("replayed")));
}

TEST_F(Cli, AttackAndDiff) {
    pipeline();
    ASSERT_EQ(run({"attack", "--model", path("model.json"), "--data", path("test.ds"), "--out", path("adv.ds"),
                   "--method", "fgsm"})
                  .code,
              0);
    auto args = cover_args(path("test.ds"), path("base"));
    ASSERT_EQ(run(args).code, 0);
    args = cover_args(path("test.ds"), path("ext"));
    args.insert(args.end(), {"--data", path("adv.ds")});
    ASSERT_EQ(run(args).code, 0);

    const auto same = run({"diff", "--base", path("base"), "--extended", path("base")});
    ASSERT_EQ(same.code, 0);
    EXPECT_NE(same.out.find("KMNC\t"), std::string::npos);
    EXPECT_NE(same.out.find("+0.0000"), std::string::npos) << same.out;
    EXPECT_EQ(same.out.find("-0."), std::string::npos) << same.out;

    const auto grown = run({"diff", "--base", path("base"), "--extended", path("ext")});
    ASSERT_EQ(grown.code, 0);
    const auto base = parse_report(read_file(path("base")));
    const auto ext = parse_report(read_file(path("ext")));
    EXPECT_EQ(ext.inputs_seen, 2 * base.inputs_seen);
    EXPECT_GE(ext.kmnc, base.kmnc);
}

TEST_F(Cli, InspectDescribesEveryArtifact) {
    pipeline();
    ASSERT_EQ(run(cover_args(path("test.ds"), path("rep"))).code, 0);
    for (const char* f : {"train.ds", "model.json", "profile.json", "rep"}) {
        const auto r = run({"inspect", path(f)});
        EXPECT_EQ(r.code, 0) << f << ": " << r.err;
        EXPECT_FALSE(r.out.empty());
    }
}

TEST_F(Cli, MalformedInputsExitWithDataError) {
    pipeline();
    {
        std::ofstream(path("broken.json")) << "{\"format\": \"nncov-model\", ";
    }
    auto r = run(cover_args(path("test.ds"), path("never")));
    ASSERT_EQ(r.code, 0);
    r = run({"cover", "--model", path("broken.json"), "--profile", path("profile.json"), "--data",
             path("test.ds"), "--out", path("never2")});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
    EXPECT_FALSE(fs::exists(path("never2")));

    {
        std::ofstream(path("junk.ds")) << "not a dataset";
    }
    r = run(cover_args(path("junk.ds"), path("never3")));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("magic"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("never3")));
}

TEST_F(Cli, ProfileOfAnotherModelIsABindingError) {
    pipeline();
    ASSERT_EQ(run({"train", "--data", path("train.ds"), "--out", path("other.json"), "--hidden", "6,5",
                   "--epochs", "1", "--init-seed", "99"})
                  .code,
              0);
    const auto r = run({"cover", "--model", path("other.json"), "--profile", path("profile.json"), "--data",
                        path("test.ds"), "--out", path("never")});
    EXPECT_EQ(r.code, 2);
    const auto other = to_hex(model_id(parse_model(read_file(path("other.json")))));
    const auto bound = to_hex(parse_profile(read_file(path("profile.json"))).model_id);
    EXPECT_NE(r.err.find(other), std::string::npos) << r.err;
    EXPECT_NE(r.err.find(bound), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("never")));
}

TEST_F(Cli, UsageErrorsExitWithOne) {
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"gen-data"}).code, 1);
    EXPECT_EQ(run({"gen-data", "--out", path("x"), "--n", "lots"}).code, 1);
    EXPECT_EQ(run({"gen-data", "--out", path("x"), "--kind", "spirals"}).code, 1);
    EXPECT_EQ(run({"train", "--data", path("missing.ds"), "--out", path("m.json")}).code, 1);
    EXPECT_EQ(run({"gen-data", "--out", path("no/such/dir/x")}).code, 1);
    EXPECT_EQ(run({"gen-data", "--help"}).code, 0);
}

TEST_F(Cli, DataOptionsAreMutuallyExclusiveWithTraces) {
    pipeline();
    auto args = cover_args(path("test.ds"), path("x"));
    args.insert(args.end(), {"--trace-in", path("test.ds")});
    EXPECT_EQ(run(args).code, 1);
    EXPECT_EQ(run({"cover", "--model", path("model.json"), "--profile", path("profile.json"), "--out",
                   path("x")})
                  .code,
              1);
}

}  // namespace
}  // namespace nncov
