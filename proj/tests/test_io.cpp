// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"
#include "rigsplat/checkpoint.hpp"
#include "rigsplat/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace rigsplat;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("rigsplat_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

}  // namespace

TEST(Png, RgbRoundTripWithinQuantization) {
    TempDir dir;
    Image img(13, 7, 3);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : img.data) v = u(rng);
    write_png_rgb(dir.path() / "a.png", img);
    const auto back = read_png_rgb(dir.path() / "a.png");
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.data[i] - img.data[i]), 1.0 / 510 + 1e-12);
}

TEST(Png, MaskRoundTripExact) {
    TempDir dir;
    Image m(9, 4, 1);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;
    write_png_mask(dir.path() / "m.png", m);
    const auto back = read_png_mask(dir.path() / "m.png");
    EXPECT_EQ(back.data, m.data);
}

TEST(Png, RejectsNonImage) {
    TempDir dir;
    std::ofstream(dir.path() / "x.png") << "not a png";
    EXPECT_THROW(read_png_rgb(dir.path() / "x.png"), FormatError);
    EXPECT_THROW(read_png_rgb(dir.path() / "missing.png"), std::runtime_error);
}

TEST(Config, RoundTrip) {
    TrainConfig c;
    c.epochs = 17;
    c.lambda_dice = 0.25;
    c.pose_mlp_variant = DeformVariant::Affine;
    c.use_color_field = false;
    c.seed = 99;
    const auto back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_EQ(back.pose_mlp_variant, DeformVariant::Affine);
    EXPECT_EQ(back.epochs, 17);
}

TEST(Config, MissingFieldsUseDefaultsUnknownRejected) {
    const auto c = config_from_json(R"({"epochs": 3})");
    EXPECT_EQ(c.epochs, 3);
    EXPECT_EQ(c.n_points, TrainConfig{}.n_points);
    EXPECT_THROW(config_from_json(R"({"epohcs": 3})"), FormatError);
    EXPECT_THROW(config_from_json(R"({"epochs": "many"})"), FormatError);
    EXPECT_THROW(config_from_json(R"({"epochs": 0})"), std::invalid_argument);
}

TEST(Template, JsonRoundTripValidates) {
    const auto t = make_synthetic_rig(3);
    const auto back = template_from_json(template_to_json(t));
    EXPECT_NO_THROW(back.validate());
    EXPECT_EQ(template_to_json(back), template_to_json(t));
    EXPECT_EQ(back.parent, t.parent);
}

TEST(Poses, RoundTripAndRestFrame) {
    TempDir dir;
    const auto t = make_synthetic_rig(0);
    const auto poses = make_pose_sequence(t, 5, 2);
    for (const auto& r : poses[0].joint_rotations) EXPECT_EQ(r.norm(), 0.0);
    EXPECT_EQ(poses[0].root_rotation.norm(), 0.0);
    save_poses(dir.path() / "p.jsonl", poses);
    const auto back = load_poses(dir.path() / "p.jsonl");
    ASSERT_EQ(back.size(), poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i)
        for (int j = 0; j < t.num_joints(); ++j) EXPECT_EQ(back[i].joint_rotations[j], poses[i].joint_rotations[j]);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const auto tmpl = make_synthetic_rig(0);
    auto cfg = rigsplat::testing::small_config();
    cfg.pretrain_steps = 5;
    auto st = make_train_state(tmpl, 3, cfg);
    st.corrections[1].root_translation = Vec3(0.1, -0.2, 0.3);
    st.rng.discard(17);
    const auto bytes = serialize_checkpoint(checkpoint_from_state(st));
    EXPECT_EQ(bytes.substr(0, 4), "SARM");
    const auto ck = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(ck), bytes);
    EXPECT_EQ(ck.corrections[1].root_translation, Vec3(0.1, -0.2, 0.3));

    TempDir dir;
    save_checkpoint(dir.path() / "m.ckpt", ck);
    EXPECT_EQ(read_file(dir.path() / "m.ckpt"), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
    const auto tmpl = make_synthetic_rig(0);
    auto cfg = rigsplat::testing::small_config();
    cfg.pretrain_steps = 1;
    const auto bytes = serialize_checkpoint(checkpoint_from_state(make_train_state(tmpl, 1, cfg)));
    EXPECT_THROW(deserialize_checkpoint("XXXX" + bytes.substr(4)), FormatError);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
}

TEST(Dataset, RoundTripAndMasks) {
    TempDir dir;
    const auto tmpl = make_synthetic_rig(0);
    const auto data = rigsplat::testing::small_dataset(tmpl, 3, 24);
    for (const auto& f : data.frames)
        for (int y = 0; y < f.mask.height; ++y)
            for (int x = 0; x < f.mask.width; ++x) {
                const double m = f.mask.at(x, y);
                EXPECT_TRUE(m == 0.0 || m == 1.0);
                if (m == 0.0)
                    for (int c = 0; c < 3; ++c) EXPECT_EQ(f.image.at(x, y, c), 0.0);
            }
    save_dataset(dir.path(), data);
    const auto back = load_dataset(dir.path());
    ASSERT_EQ(back.frames.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.frames[i].mask.data, data.frames[i].mask.data);
        for (std::size_t k = 0; k < data.frames[i].image.size(); ++k)
            EXPECT_LE(std::abs(back.frames[i].image.data[k] - data.frames[i].image.data[k]), 1.0 / 510 + 1e-12);
    }
}

TEST(Dataset, SameSeedSameImages) {
    const auto tmpl = make_synthetic_rig(0);
    const auto a = rigsplat::testing::small_dataset(tmpl, 2, 20);
    const auto b = rigsplat::testing::small_dataset(tmpl, 2, 20);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.frames[i].image.data, b.frames[i].image.data);
    EXPECT_EQ(template_to_json(make_synthetic_rig(4)), template_to_json(make_synthetic_rig(4)));
}

TEST(Dataset, MissingMaskNamesFrame) {
    TempDir dir;
    const auto data = rigsplat::testing::small_dataset(make_synthetic_rig(0), 3, 16);
    save_dataset(dir.path(), data);
    fs::remove(dir.path() / "masks" / "0002.png");
    try {
        load_dataset(dir.path());
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos) << e.what();
    }
}

TEST(Dataset, PoseJointCountChecked) {
    auto data = rigsplat::testing::small_dataset(make_synthetic_rig(0), 1, 16);
    data.frames[0].pose.joint_rotations.pop_back();
    const auto tmpl = make_synthetic_rig(0);
    EXPECT_THROW(fit(tmpl, data, rigsplat::testing::small_config()), std::invalid_argument);
}

TEST(Cameras, SingleAndMultiLine) {
    TempDir dir;
    const auto cam = make_front_camera(32, 24);
    save_camera(dir.path() / "c.json", cam);
    const auto one = load_cameras(dir.path() / "c.json");
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(camera_to_json(one[0]), camera_to_json(cam));
    std::ofstream(dir.path() / "cs.jsonl") << camera_to_json(cam) << camera_to_json(cam);
    EXPECT_EQ(load_cameras(dir.path() / "cs.jsonl").size(), 2u);
}

TEST(AtomicWrite, LeavesNoTempFile) {
    TempDir dir;
    atomic_write(dir.path() / "f.txt", "one");
    atomic_write(dir.path() / "f.txt", "two");
    EXPECT_EQ(read_file(dir.path() / "f.txt"), "two");
    EXPECT_EQ(std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator{}), 1);
}
