// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rigsplat/synthetic.hpp"
#include "rigsplat/trainer.hpp"

namespace rigsplat::testing {

/// Small networks and point counts so a training step takes milliseconds.
inline TrainConfig small_config() {
    TrainConfig c;
    c.epochs = 4;
    c.n_points = 400;
    c.deform_hidden_layers = 1;
    c.deform_width = 16;
    c.deform_frequencies = 2;
    c.color_hidden_layers = 2;
    c.color_width = 16;
    c.color_frequencies = 3;
    c.pretrain_steps = 40;
    c.pretrain_batch = 256;
    c.densify_interval = 3;
    c.eval_interval = 2;
    c.seed = 5;
    return c;
}

inline Dataset small_dataset(const RiggedTemplate& tmpl, int frames, int size, std::uint64_t seed = 1) {
    const auto poses = make_pose_sequence(tmpl, frames, seed);
    return render_dataset(tmpl, poses, make_front_camera(size, size), {2000, 0.95, 7});
}

}  // namespace rigsplat::testing
