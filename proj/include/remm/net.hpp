#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "remm/geometry.hpp"
#include "remm/optim.hpp"
#include "remm/tensor.hpp"

namespace remm {

enum class Modality { A, B };

struct NetConfig {
    std::vector<int> unshared_channels = {16, 32};      // from 1 input channel
    std::vector<int> shared_channels = {64, 128, 128};  // last = descriptor dim
    int detector_window = 5;
    float tau = 0.1f;
    float lambda1 = 1.0f;
    float lambda2 = 1.0f;
    float lambda3 = 1.0f;
    int positives_per_step = 256;

    int descriptor_dim() const { return shared_channels.back(); }
    void validate() const;  // throws std::invalid_argument
};

// Full-resolution dense features of one image.
struct DenseFeatures {
    Tensor desc;    // [C,H,W], unit L2 norm per pixel
    Tensor scores;  // [H,W], values in (0,1)
    int h = 0;
    int w = 0;
};

struct AlignedFeatures {
    DenseFeatures features;
    Tensor mask;  // [H,W], 1 where the sampling grid stays inside [-1,1]
};

// Per-modality unshared conv stack + weight-tied shared trunk + 1x1
// detector head. The shared layers are the same parameter objects for
// both modalities.
class RemmNet {
  public:
    RemmNet(NetConfig config, unsigned seed);
    RemmNet(NetConfig config, std::vector<NamedParam> params);

    const NetConfig& config() const { return config_; }
    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }

    // Image intensities in [0,1], H and W >= 32.
    DenseFeatures extract_features(const Tensor& image_hw, Modality m) const;

    // Local-softmax score map from a [C,H,W] descriptor map.
    Tensor detect_scores(const Tensor& desc_chw) const;

    void zero_grads();

  private:
    Tensor forward_trunk(const Tensor& image_nchw, Modality m) const;
    Tensor param(const std::string& name) const;

    NetConfig config_;
    std::vector<NamedParam> params_;
};

// Warp descriptor and score maps by the ground-truth homography and report
// the validity mask of the sampling grid.
AlignedFeatures align_to_reference(const DenseFeatures& feat_y,
                                   const Homography& gt);

// Symmetric InfoNCE over positive rows of two [N,D] unit-descriptor sets.
Tensor shift_descriptor_loss(const Tensor& rd_x, const Tensor& rd_y,
                             float tau);

// 1 - weighted mean over detector windows of (max - mean) of the score map.
Tensor peaking_loss(const Tensor& scores, const Tensor& mask, int window);

// Masked MSE between the two score maps. Throws on an all-zero mask.
Tensor repeatability_loss(const Tensor& s_x, const Tensor& cs_y,
                          const Tensor& mask);

Tensor total_loss(const Tensor& l_p, const Tensor& l_r, const Tensor& l_sd,
                  float lambda1, float lambda2, float lambda3);

// Integer pixel locations of the n highest values of
// s_x * cs_y * mask (mutually valid, jointly salient positions).
std::vector<std::pair<int, int>> sample_positive_pixels(const Tensor& s_x,
                                                        const Tensor& cs_y,
                                                        const Tensor& mask,
                                                        int n);

}  // namespace remm
