// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/checkpoint.hpp"
#include "rigsplat/io.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace rigsplat;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(RIGSPLAT_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

// One small end-to-end workspace shared by every test in this file.
class Cli : public ::testing::Test {
protected:
    static fs::path dir;

    static void SetUpTestSuite() {
        dir = fs::temp_directory_path() / ("rigsplat_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        const auto d = dir.string();
        ASSERT_EQ(run("rig " + d + "/rig.json --poses " + d + "/poses.jsonl --frames 2 --camera " + d +
                      "/cam.json --width 32 --height 32").status, 0);
        ASSERT_EQ(run("makedata " + d + "/rig.json " + d + "/poses.jsonl " + d + "/data --camera " + d +
                      "/cam.json --points 1500").status, 0);
        std::ofstream(dir / "cfg.json") << R"({"n_points": 300, "deform_hidden_layers": 1, "deform_width": 16,
            "deform_frequencies": 2, "color_hidden_layers": 1, "color_width": 16, "color_frequencies": 2,
            "pretrain_steps": 20, "pretrain_batch": 256, "densify_interval": 3})";
        const auto tr = run("train " + d + "/data " + d + "/cfg.json -o " + d + "/m.ckpt --pose-mlp a --epochs 3");
        ASSERT_EQ(tr.status, 0) << tr.out;
    }
    static void TearDownTestSuite() { fs::remove_all(dir); }
};
fs::path Cli::dir;

}  // namespace

TEST_F(Cli, DatasetLayout) {
    for (const char* f : {"data/images/0000.png", "data/images/0001.png", "data/masks/0001.png", "data/poses.jsonl",
                          "data/cameras.jsonl", "data/template.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(read_file(dir / "data/template.json"), read_file(dir / "rig.json"));
}

TEST_F(Cli, RigIsDeterministic) {
    ASSERT_EQ(run("rig " + (dir / "rig2.json").string() + " --poses " + (dir / "poses2.jsonl").string() +
                  " --frames 2").status, 0);
    EXPECT_EQ(read_file(dir / "rig2.json"), read_file(dir / "rig.json"));
    EXPECT_EQ(read_file(dir / "poses2.jsonl"), read_file(dir / "poses.jsonl"));
}

TEST_F(Cli, PoseMlpFlagRecorded) {
    const auto ck = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(ck.config.pose_mlp_variant, DeformVariant::Affine);
    EXPECT_EQ(ck.deform.variant(), DeformVariant::Affine);
    EXPECT_EQ(ck.config.epochs, 3);
}

TEST_F(Cli, MetricsLogOneLinePerEpoch) {
    std::ifstream in(dir / "m.ckpt.metrics.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("epoch").get<int>(), n);
        ++n;
    }
    EXPECT_EQ(n, 3);
}

TEST_F(Cli, RenderReproducesLoggedPsnr) {
    std::ifstream in(dir / "m.ckpt.metrics.jsonl");
    std::string line, last;
    while (std::getline(in, line)) last = line;
    const auto logged = nlohmann::json::parse(last).at("frame_psnr").get<std::vector<double>>();
    ASSERT_EQ(logged.size(), 2u);
    const auto d = dir.string();
    const auto r = run("render " + d + "/m.ckpt " + d + "/data/poses.jsonl " + d + "/data/cameras.jsonl " + d +
                       "/renders --corrections --reference " + d + "/data");
    ASSERT_EQ(r.status, 0) << r.out;
    const std::regex re(R"(frame (\d+) psnr ([0-9.eE+-]+))");
    int seen = 0;
    for (std::sregex_iterator it(r.out.begin(), r.out.end(), re), end; it != end; ++it) {
        const auto i = std::stoul((*it)[1]);
        ASSERT_LT(i, logged.size());
        // the reference is re-read from 8-bit PNGs
        EXPECT_NEAR(std::stod((*it)[2]), logged[i], 0.01);
        ++seen;
    }
    EXPECT_EQ(seen, 2);
    EXPECT_TRUE(fs::exists(dir / "renders/0001.png"));
}

TEST_F(Cli, AnimateWritesInterpolatedFrames) {
    const auto d = dir.string();
    const auto r = run("animate " + d + "/m.ckpt " + d + "/poses.jsonl " + d + "/cam.json " + d + "/anim --substeps 3");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_EQ(std::distance(fs::directory_iterator(dir / "anim"), fs::directory_iterator{}), 4);
}

TEST_F(Cli, RejectsMismatchedPoseJointCount) {
    auto poses = load_poses(dir / "poses.jsonl");
    poses[0].joint_rotations.pop_back();
    save_poses(dir / "bad.jsonl", poses);
    const auto d = dir.string();
    const auto r = run("render " + d + "/m.ckpt " + d + "/bad.jsonl " + d + "/cam.json " + d + "/bad");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("joint count"), std::string::npos) << r.out;
}

TEST_F(Cli, MissingMaskNamesFrame) {
    fs::copy(dir / "data", dir / "data2", fs::copy_options::recursive);
    fs::remove(dir / "data2/masks/0001.png");
    const auto d = dir.string();
    const auto r = run("train " + d + "/data2 " + d + "/cfg.json -o " + d + "/x.ckpt --epochs 1");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("frame 1"), std::string::npos) << r.out;
}

TEST_F(Cli, UnknownConfigFieldRejected) {
    std::ofstream(dir / "badcfg.json") << R"({"n_pionts": 3})";
    const auto d = dir.string();
    const auto r = run("train " + d + "/data " + d + "/badcfg.json -o " + d + "/y.ckpt");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("n_pionts"), std::string::npos) << r.out;
}
