// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include "mimic/io.hpp"
#include "mimic/parallel.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mimic;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("mimic_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        threads_ = parallel::num_threads();
    }
    void TearDown() override {
        parallel::set_num_threads(threads_);
        fs::remove_all(dir_);
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    RunConfig tiny(std::initializer_list<const char*> extra = {}) const {
        RunConfig c;
        for (const auto* kv : {"student.channels=4", "student.coarse_resolution=8", "student.style_dim=4",
                               "student.hidden=8", "fit.image_size=16", "fit.patch_size=8", "fit.steps=3",
                               "render.coarse_samples=6", "render.fine_samples=6", "teacher.samples=32",
                               "view.resolution=16", "eval.resolution=16", "eval.strip_samples=16",
                               "mesh.resolution=12", "threads=1"}) {
            c.apply_override(kv);
        }
        for (const auto* kv : extra) c.apply_override(kv);
        return c;
    }

    int run(const std::string& command, const RunConfig& c) {
        out_.str({});
        err_.str({});
        return cli::run_command(command, c, out_, err_);
    }

    // Fits the tiny student and returns its checkpoint path.
    std::string fitted() {
        auto c = tiny();
        c.set("out.dir", path("fit"));
        EXPECT_EQ(run("fit", c), cli::kExitOk) << err_.str();
        return path("fit/student.tpl");
    }

    fs::path dir_;
    std::size_t threads_ = 1;
    std::ostringstream out_, err_;
};

std::vector<std::string> lines_of(const std::string& file) {
    std::ifstream in(file);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_F(CliTest, FitWritesArtifactsAndResolvedConfig) {
    fitted();
    EXPECT_TRUE(fs::exists(path("fit/metrics.csv")));
    EXPECT_TRUE(fs::exists(path("fit/config.txt")));
    EXPECT_EQ(lines_of(path("fit/metrics.csv")).size(), 4u);
    EXPECT_NO_THROW(load_checkpoint(path("fit/student.tpl")));
}

TEST_F(CliTest, FitWithoutOutputDirIsUsageError) {
    EXPECT_EQ(run("fit", tiny()), cli::kExitUsage);
    EXPECT_NE(err_.str().find("out.dir"), std::string::npos);
}

TEST_F(CliTest, InvalidValuesAreUsageErrors) {
    auto c = tiny({"fit.patch_size=32"});
    c.set("out.dir", path("bad"));
    EXPECT_EQ(run("fit", c), cli::kExitUsage);
    RunConfig unknown;
    EXPECT_THROW(unknown.apply_override("fit.no_such_key=1"), ConfigError);
}

TEST_F(CliTest, UnknownCommandIsUsageError) { EXPECT_EQ(run("paint", tiny()), cli::kExitUsage); }

TEST_F(CliTest, CorruptCheckpointIsUsageError) {
    {
        std::ofstream(path("junk.tpl")) << "not a checkpoint";
    }
    auto c = tiny();
    c.set("checkpoint", path("junk.tpl"));
    c.set("out.dir", path("views"));
    EXPECT_EQ(run("render", c), cli::kExitUsage);
    c.set("checkpoint", path("missing.tpl"));
    EXPECT_EQ(run("render", c), cli::kExitUsage);
}

TEST_F(CliTest, RenderZeroPadsAndFormatsAgree) {
    auto c = tiny({"view.count=12", "view.format=both"});
    c.set("checkpoint", fitted());
    c.set("out.dir", path("views"));
    ASSERT_EQ(run("render", c), cli::kExitOk) << err_.str();
    for (int v = 0; v < 12; ++v) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "views/view_%03d", v);
        ASSERT_TRUE(fs::exists(path(std::string(stem) + ".png"))) << stem;
        const auto png = read_png(path(std::string(stem) + ".png"));
        const auto pfm = read_pfm(path(std::string(stem) + ".pfm"));
        ASSERT_EQ(png.shape(), pfm.shape());
        for (std::size_t i = 0; i < png.numel(); ++i) EXPECT_NEAR(png[i], pfm[i], 1.0 / 255.0);
    }
    EXPECT_FALSE(fs::exists(path("views/view_012.png")));
}

TEST_F(CliTest, RenderSingleView) {
    auto c = tiny({"view.count=1", "view.yaw_deg=20"});
    c.set("checkpoint", fitted());
    c.set("out.dir", path("one"));
    ASSERT_EQ(run("render", c), cli::kExitOk) << err_.str();
    EXPECT_TRUE(fs::exists(path("one/view_000.png")));
    EXPECT_FALSE(fs::exists(path("one/view_000.pfm")));
}

TEST_F(CliTest, MeshRejectsTinyGridAndWarnsOnEmptyLevelSet) {
    auto c = tiny();
    c.set("checkpoint", fitted());
    c.set("mesh.output", path("m.obj"));
    ASSERT_EQ(run("mesh", c), cli::kExitOk) << err_.str();
    EXPECT_TRUE(fs::exists(path("m.obj")));
    c.set("mesh.iso", "1e9");
    EXPECT_EQ(run("mesh", c), cli::kExitOk);
    EXPECT_NE(err_.str().find("empty"), std::string::npos);
    EXPECT_EQ(out_.str().find("watertight"), std::string::npos);
    c.set("mesh.resolution", "1");
    EXPECT_EQ(run("mesh", c), cli::kExitUsage);
}

TEST_F(CliTest, EvalWritesOneRowPerViewPlusSummary) {
    auto c = tiny({"eval.views=5"});
    c.set("checkpoint", fitted());
    c.set("out.dir", path("eval"));
    ASSERT_EQ(run("eval", c), cli::kExitOk) << err_.str();
    const auto rows = lines_of(path("eval/eval.csv"));
    ASSERT_EQ(rows.size(), 1u + 5u + 1u);
    EXPECT_EQ(rows[0], "view,label,psnr,ssim,consistency_subject,consistency_teacher,consistency_ratio");
    EXPECT_EQ(rows.back().rfind("summary,", 0), 0u);
    EXPECT_TRUE(fs::exists(path("eval/strip_student.png")));
}

TEST_F(CliTest, TeacherAgainstItselfHasUnitRatio) {
    auto c = tiny({"eval.views=4", "eval.subject=teacher", "teacher.inconsistency=texture_jitter",
                   "teacher.amplitude=0.05"});
    c.set("out.dir", path("self"));
    ASSERT_EQ(run("eval", c), cli::kExitOk) << err_.str();
    const auto summary = lines_of(path("self/eval.csv")).back();
    EXPECT_EQ(summary.substr(summary.rfind(',') + 1), "1");
}

TEST_F(CliTest, GradcheckReportsAndSignFlipFails) {
    auto c = tiny({"gradcheck.configs=1"});
    EXPECT_EQ(run("gradcheck", c), cli::kExitOk) << out_.str();
    EXPECT_NE(out_.str().find("fused_mlp"), std::string::npos);
    c.set("gradcheck.inject_sign_flip", "true");
    EXPECT_EQ(run("gradcheck", c), cli::kExitCheckFailed);
    EXPECT_NE(out_.str().find("FAIL"), std::string::npos);
}
