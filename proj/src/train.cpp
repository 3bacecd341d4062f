#include "remm/train.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "remm/benchmark.hpp"
#include "remm/cyclic_shift.hpp"

namespace remm {

PairForward pair_loss(const RemmNet& net, const ImageF& img_x,
                      const ImageF& img_y_warped, const Homography& gt,
                      int g_size) {
    const NetConfig& cfg = net.config();
    Tensor tx = Tensor::from_data({img_x.h, img_x.w}, img_x.px);
    Tensor ty = Tensor::from_data({img_y_warped.h, img_y_warped.w},
                                  img_y_warped.px);
    DenseFeatures fx = net.extract_features(tx, Modality::A);
    DenseFeatures fy = net.extract_features(ty, Modality::B);
    AlignedFeatures aligned = align_to_reference(fy, gt);

    PairForward out;
    out.l_p = scale(add(peaking_loss(fx.scores, aligned.mask,
                                     cfg.detector_window),
                        peaking_loss(aligned.features.scores, aligned.mask,
                                     cfg.detector_window)),
                    0.5f);
    out.l_r = repeatability_loss(fx.scores, aligned.features.scores,
                                 aligned.mask);

    const auto pts = sample_positive_pixels(
        fx.scores, aligned.features.scores, aligned.mask,
        cfg.positives_per_step);
    if (pts.size() < 2)
        throw std::runtime_error("too few mutually valid positives");
    Tensor rd_x = l2norm_lastdim(gather_pixels(fx.desc, pts));
    Tensor cd_rows = l2norm_lastdim(gather_pixels(aligned.features.desc, pts));
    const int s = shift_value_from_angle(
        gt.theta_deg ? *gt.theta_deg : 0.0, g_size);
    Tensor rd_y = permute_lastdim(
        cd_rows, shift_permutation(s, g_size, cfg.descriptor_dim()));
    out.l_sd = shift_descriptor_loss(rd_x, rd_y, cfg.tau);

    out.loss = total_loss(out.l_p, out.l_r, out.l_sd, cfg.lambda1,
                          cfg.lambda2, cfg.lambda3);
    return out;
}

std::vector<StepLosses> train(
    const std::vector<std::pair<ImageF, ImageF>>& dataset, RemmNet& net,
    const TrainConfig& cfg, const std::string& checkpoint_path) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.steps < 1 || cfg.batch_size < 1)
        throw std::invalid_argument("train: steps and batch size must be >= 1");

    std::ofstream log;
    if (!cfg.loss_csv_path.empty()) {
        log.open(cfg.loss_csv_path);
        if (!log)
            throw std::runtime_error("cannot open loss log: " +
                                     cfg.loss_csv_path);
        log << "step,L_P,L_R,L_SD,L_all,lr\n";
    }

    AdamState adam = AdamState::init(net.params());
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_pair(0, dataset.size() - 1);
    std::uniform_int_distribution<int> pick_angle(1, 35);  // 10..350
    std::uniform_int_distribution<std::size_t> pick_range(
        0, benchmark_scale_ranges().size() - 1);

    std::vector<StepLosses> history;
    history.reserve(static_cast<std::size_t>(cfg.steps));
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
    for (int step = 0; step < cfg.steps; ++step) {
        // Linear decay to zero by the final step.
        const float lr =
            cfg.steps > 1
                ? cfg.lr * (1.0f - static_cast<float>(step) / (cfg.steps - 1))
                : cfg.lr;
        StepLosses losses;
        losses.lr = lr;
        net.zero_grads();
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& [img_a, img_b] = dataset[pick_pair(rng)];
            const double theta = 10.0 * pick_angle(rng);
            const auto synth = synthesize_pair(
                img_a, img_b, theta, benchmark_scale_ranges()[pick_range(rng)],
                cfg.translation_frac, rng(), /*training_mode=*/true);
            PairForward fwd =
                pair_loss(net, synth.x, synth.y, synth.gt, cfg.g_size);
            const float l_all = fwd.loss.item();
            if (!std::isfinite(l_all))
                throw std::runtime_error("non-finite loss at step " +
                                         std::to_string(step));
            losses.l_p += fwd.l_p.item() * inv_batch;
            losses.l_r += fwd.l_r.item() * inv_batch;
            losses.l_sd += fwd.l_sd.item() * inv_batch;
            losses.l_all += l_all * inv_batch;
            // Backward per pair so the tape (and its im2col buffers) is
            // released before the next synthesis; leaf grads accumulate.
            backward(scale(fwd.loss, inv_batch));
        }
        adam_step(net.params(), adam, lr);
        if (log)
            log << step << "," << losses.l_p << "," << losses.l_r << ","
                << losses.l_sd << "," << losses.l_all << "," << losses.lr
                << "\n";
        history.push_back(losses);
    }
    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, net.params());
    return history;
}

}  // namespace remm
