#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "remm/image.hpp"
#include "remm/net.hpp"

namespace remm {

struct TrainConfig {
    NetConfig net;
    int steps = 800;
    int batch_size = 4;
    float lr = 1e-3f;  // linearly decayed to zero by the final step
    int g_size = 16;
    double translation_frac = 0.05;
    std::uint64_t seed = 0;
    std::string loss_csv_path;  // empty = no log
};

struct StepLosses {
    float l_p = 0.0f;
    float l_r = 0.0f;
    float l_sd = 0.0f;
    float l_all = 0.0f;
    float lr = 0.0f;
};

// One training step's composite loss over a synthesized pair. Exposed so
// tests can gradient-check the full objective.
struct PairForward {
    Tensor loss;
    Tensor l_p, l_r, l_sd;
};
PairForward pair_loss(const RemmNet& net, const ImageF& img_x,
                      const ImageF& img_y_warped, const Homography& gt,
                      int g_size);

// Trains on aligned multimodal pairs; each step synthesizes a rotated,
// scaled, translated batch and optimizes the composite loss with Adam.
// Returns per-step losses and writes the checkpoint.
std::vector<StepLosses> train(
    const std::vector<std::pair<ImageF, ImageF>>& dataset, RemmNet& net,
    const TrainConfig& cfg, const std::string& checkpoint_path);

}  // namespace remm
