#include "remm/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace remm {

namespace {

constexpr int kAllowedGroupSizes[] = {8, 16, 32, 64};

Tensor init_conv(int out_c, int in_c, int k, std::mt19937& rng) {
    const float stddev =
        std::sqrt(2.0f / (static_cast<float>(in_c) * k * k));
    std::normal_distribution<float> dist(0.0f, stddev);
    std::vector<float> w(static_cast<std::size_t>(out_c) * in_c * k * k);
    for (auto& v : w) v = dist(rng);
    return Tensor::from_data({out_c, in_c, k, k}, std::move(w), true);
}

}  // namespace

void NetConfig::validate() const {
    if (unshared_channels.empty() || shared_channels.empty())
        throw std::invalid_argument("NetConfig: empty layer list");
    for (int g : kAllowedGroupSizes)
        if (descriptor_dim() % g != 0)
            throw std::invalid_argument(
                "NetConfig: descriptor dim " +
                std::to_string(descriptor_dim()) +
                " must be divisible by every allowed group size");
    if (!(tau > 0.0f)) throw std::invalid_argument("NetConfig: tau must be > 0");
    if (detector_window < 3 || detector_window % 2 == 0)
        throw std::invalid_argument(
            "NetConfig: detector window must be odd and >= 3");
    if (positives_per_step < 2)
        throw std::invalid_argument("NetConfig: need at least 2 positives");
}

RemmNet::RemmNet(NetConfig config, unsigned seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937 rng(seed);
    auto add_stack = [&](const std::string& prefix, int in_c,
                         const std::vector<int>& channels, int k) {
        for (std::size_t i = 0; i < channels.size(); ++i) {
            params_.push_back({prefix + std::to_string(i) + ".w",
                               init_conv(channels[i], in_c, k, rng)});
            params_.push_back(
                {prefix + std::to_string(i) + ".b",
                 Tensor::zeros({channels[i]}, true)});
            in_c = channels[i];
        }
    };
    add_stack("unshared.A.", 1, config_.unshared_channels, 3);
    add_stack("unshared.B.", 1, config_.unshared_channels, 3);
    add_stack("shared.", config_.unshared_channels.back(),
              config_.shared_channels, 3);
    params_.push_back(
        {"detector.w", init_conv(1, config_.descriptor_dim(), 1, rng)});
    params_.push_back({"detector.b", Tensor::zeros({1}, true)});
}

RemmNet::RemmNet(NetConfig config, std::vector<NamedParam> params)
    : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
}

Tensor RemmNet::param(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.t;
    throw std::runtime_error("missing parameter: " + name);
}

void RemmNet::zero_grads() {
    for (auto& p : params_) p.t.zero_grad();
}

Tensor RemmNet::forward_trunk(const Tensor& image_nchw, Modality m) const {
    const std::string prefix =
        m == Modality::A ? "unshared.A." : "unshared.B.";
    Tensor x = image_nchw;
    for (std::size_t i = 0; i < config_.unshared_channels.size(); ++i) {
        x = conv2d(x, param(prefix + std::to_string(i) + ".w"),
                   param(prefix + std::to_string(i) + ".b"), 1, 1);
        x = relu(x);
    }
    for (std::size_t i = 0; i < config_.shared_channels.size(); ++i) {
        x = conv2d(x, param("shared." + std::to_string(i) + ".w"),
                   param("shared." + std::to_string(i) + ".b"), 1, 1);
        if (i + 1 < config_.shared_channels.size()) x = relu(x);
    }
    return x;
}

DenseFeatures RemmNet::extract_features(const Tensor& image_hw,
                                        Modality m) const {
    if (m != Modality::A && m != Modality::B)
        throw std::invalid_argument("unknown modality tag");
    if (image_hw.shape().size() != 2)
        throw std::invalid_argument("extract_features expects an [H,W] image, got " +
                                    shape_str(image_hw.shape()));
    const int h = image_hw.shape()[0];
    const int w = image_hw.shape()[1];
    if (h < 32 || w < 32)
        throw std::invalid_argument("extract_features: image must be >= 32x32, got " +
                                    shape_str(image_hw.shape()));
    Tensor x = reshape(image_hw, {1, 1, h, w});
    Tensor feat = forward_trunk(x, m);
    Tensor desc = l2norm_channels(
        reshape(feat, {config_.descriptor_dim(), h, w}));
    DenseFeatures out;
    out.desc = desc;
    out.scores = detect_scores(desc);
    out.h = h;
    out.w = w;
    return out;
}

Tensor RemmNet::detect_scores(const Tensor& desc_chw) const {
    const int c = desc_chw.shape()[0];
    const int h = desc_chw.shape()[1];
    const int w = desc_chw.shape()[2];
    Tensor a = conv2d(reshape(desc_chw, {1, c, h, w}), param("detector.w"),
                      param("detector.b"), 1, 0);
    return cell_softmax(reshape(a, {h, w}), config_.detector_window);
}

AlignedFeatures align_to_reference(const DenseFeatures& feat_y,
                                   const Homography& gt) {
    const int h = feat_y.h, w = feat_y.w;
    const auto grid = affine_grid(gt, h, w, h, w);
    AlignedFeatures out;
    out.features.desc = grid_sample(feat_y.desc, grid, h, w);
    out.features.scores = reshape(
        grid_sample(reshape(feat_y.scores, {1, h, w}), grid, h, w), {h, w});
    out.features.h = h;
    out.features.w = w;
    std::vector<float> mask(static_cast<std::size_t>(h) * w);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        const float gx = grid[p * 2], gy = grid[p * 2 + 1];
        mask[p] = (gx >= -1.0f && gx <= 1.0f && gy >= -1.0f && gy <= 1.0f)
                      ? 1.0f
                      : 0.0f;
    }
    out.mask = Tensor::from_data({h, w}, std::move(mask));
    return out;
}

Tensor shift_descriptor_loss(const Tensor& rd_x, const Tensor& rd_y,
                             float tau) {
    if (rd_x.shape().size() != 2 || rd_x.shape() != rd_y.shape())
        throw std::invalid_argument("shift_descriptor_loss expects matching [N,D]");
    if (rd_x.shape()[0] < 2)
        throw std::invalid_argument(
            "shift_descriptor_loss needs n >= 2 (no negatives otherwise)");
    if (!(tau > 0.0f)) throw std::invalid_argument("tau must be > 0");
    const float inv_tau = 1.0f / tau;
    Tensor s_xy = scale(matmul_nt(rd_x, rd_y), inv_tau);
    Tensor s_yx = scale(matmul_nt(rd_y, rd_x), inv_tau);
    Tensor row = mean(sub(logsumexp_lastdim(s_xy), take_diag(s_xy)));
    Tensor col = mean(sub(logsumexp_lastdim(s_yx), take_diag(s_yx)));
    return scale(add(row, col), 0.5f);
}

Tensor peaking_loss(const Tensor& scores, const Tensor& mask, int window) {
    if (scores.shape() != mask.shape())
        throw std::invalid_argument("peaking_loss: score/mask shape mismatch");
    Tensor peak = sub(cell_max(scores, window), cell_mean(scores, window));
    Tensor cell_w = cell_mean(mask, window);
    double wsum = 0.0;
    for (std::int64_t i = 0; i < cell_w.size(); ++i) wsum += cell_w.data()[i];
    if (wsum <= 0.0)
        throw std::invalid_argument("peaking_loss: mask is all zero");
    return add_const(
        scale(sum(mul(peak, cell_w)), -1.0f / static_cast<float>(wsum)), 1.0f);
}

Tensor repeatability_loss(const Tensor& s_x, const Tensor& cs_y,
                          const Tensor& mask) {
    if (s_x.shape() != cs_y.shape() || s_x.shape() != mask.shape())
        throw std::invalid_argument("repeatability_loss: shape mismatch");
    double wsum = 0.0;
    for (std::int64_t i = 0; i < mask.size(); ++i) wsum += mask.data()[i];
    if (wsum <= 0.0)
        throw std::invalid_argument(
            "repeatability_loss: degenerate overlap (all-zero mask)");
    Tensor d = sub(s_x, cs_y);
    return scale(sum(mul(mul(d, d), mask)), 1.0f / static_cast<float>(wsum));
}

Tensor total_loss(const Tensor& l_p, const Tensor& l_r, const Tensor& l_sd,
                  float lambda1, float lambda2, float lambda3) {
    return add(add(scale(l_p, lambda1), scale(l_r, lambda2)),
               scale(l_sd, lambda3));
}

std::vector<std::pair<int, int>> sample_positive_pixels(const Tensor& s_x,
                                                        const Tensor& cs_y,
                                                        const Tensor& mask,
                                                        int n) {
    const int h = s_x.shape()[0], w = s_x.shape()[1];
    std::vector<std::pair<float, int>> scored;
    scored.reserve(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h * w; ++i) {
        if (mask.data()[i] <= 0.0f) continue;
        scored.emplace_back(s_x.data()[i] * cs_y.data()[i] * mask.data()[i], i);
    }
    const int take = std::min<int>(n, static_cast<int>(scored.size()));
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                      [](const auto& a, const auto& b) {
                          return a.first > b.first ||
                                 (a.first == b.first && a.second < b.second);
                      });
    std::vector<std::pair<int, int>> pts;
    pts.reserve(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i)
        pts.emplace_back(scored[static_cast<std::size_t>(i)].second % w,
                         scored[static_cast<std::size_t>(i)].second / w);
    return pts;
}

}  // namespace remm
