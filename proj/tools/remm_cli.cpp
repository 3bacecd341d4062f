#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "remm/benchmark.hpp"
#include "remm/config.hpp"
#include "remm/net.hpp"
#include "remm/parallel.hpp"
#include "remm/pipeline.hpp"
#include "remm/plot.hpp"
#include "remm/train.hpp"

namespace fs = std::filesystem;
using namespace remm;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_exists(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("missing input: " + path);
}

NetConfig net_config_from(const Config& cfg) {
    NetConfig nc;
    nc.unshared_channels = cfg.get_int_list("net.unshared_channels");
    nc.shared_channels = cfg.get_int_list("net.shared_channels");
    nc.detector_window = cfg.get_int("net.detector_window");
    nc.tau = static_cast<float>(cfg.get_double("net.tau"));
    nc.lambda1 = static_cast<float>(cfg.get_double("net.lambda1"));
    nc.lambda2 = static_cast<float>(cfg.get_double("net.lambda2"));
    nc.lambda3 = static_cast<float>(cfg.get_double("net.lambda3"));
    nc.positives_per_step = cfg.get_int("net.positives");
    return nc;
}

ExtractParams extract_params_from(const Config& cfg) {
    ExtractParams p;
    p.scales = cfg.get_double_list("extract.scales");
    p.max_keypoints = cfg.get_int("extract.max_keypoints");
    p.nms_window = cfg.get_int("extract.nms_window");
    return p;
}

TopKMode topk_mode_from(const Config& cfg) {
    const std::string& mode = cfg.get("cyclic.topk_mode");
    if (mode == "top1") return TopKMode::kTop1;
    if (mode == "ratio") return TopKMode::kRatio;
    throw UsageError("cyclic.topk_mode must be top1 or ratio, got " + mode);
}

void echo_config(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    cfg.write_file((fs::path(out_dir) / "effective.cfg").string());
}

// Aligned source pairs named <stem>_A.png / <stem>_B.png.
std::vector<std::pair<ImageF, ImageF>> load_pair_dir(const std::string& dir) {
    require_exists(dir);
    std::map<std::string, std::pair<std::string, std::string>> stems;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.size() < 6 || e.path().extension() != ".png") continue;
        const std::string stem = name.substr(0, name.size() - 6);
        const std::string tag = name.substr(name.size() - 6, 2);
        if (tag == "_A") stems[stem].first = e.path().string();
        if (tag == "_B") stems[stem].second = e.path().string();
    }
    std::vector<std::pair<ImageF, ImageF>> pairs;
    for (const auto& [stem, paths] : stems) {
        if (paths.first.empty() || paths.second.empty()) continue;
        pairs.emplace_back(load_png_gray(paths.first),
                           load_png_gray(paths.second));
    }
    if (pairs.empty())
        throw UsageError("no *_A.png/*_B.png pairs found in " + dir);
    return pairs;
}

RemmNet load_net(const Config& cfg, const std::string& checkpoint) {
    require_exists(checkpoint);
    return RemmNet(net_config_from(cfg), load_checkpoint(checkpoint));
}

int cmd_gen_bench(const Config& cfg, const std::string& pairs_dir,
                  const std::string& out_dir) {
    auto sources = load_pair_dir(pairs_dir);
    fs::create_directories(out_dir);
    auto pairs = build_benchmark(
        sources, (fs::path(out_dir) / "images").string(),
        static_cast<std::uint64_t>(cfg.get_int("seed")),
        cfg.get_double("bench.translation_frac"));
    write_manifest((fs::path(out_dir) / "manifest.txt").string(), pairs);
    echo_config(cfg, out_dir);
    std::cout << "benchmark: " << pairs.size() << " pairs\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& pairs_dir,
              const std::string& out_dir) {
    auto dataset = load_pair_dir(pairs_dir);
    fs::create_directories(out_dir);
    TrainConfig tc;
    tc.net = net_config_from(cfg);
    tc.steps = cfg.get_int("train.steps");
    tc.batch_size = cfg.get_int("train.batch");
    tc.lr = static_cast<float>(cfg.get_double("train.lr"));
    tc.g_size = cfg.get_int("cyclic.g_size");
    tc.translation_frac = cfg.get_double("train.translation_frac");
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    tc.loss_csv_path = (fs::path(out_dir) / "loss.csv").string();
    RemmNet net(tc.net, static_cast<unsigned>(tc.seed));
    auto history =
        train(dataset, net, tc, (fs::path(out_dir) / "checkpoint.remm").string());
    echo_config(cfg, out_dir);
    std::cout << "trained " << history.size() << " steps, final loss "
              << history.back().l_all << "\n";
    return 0;
}

int cmd_extract(const Config& cfg, const std::string& manifest_path,
                const std::string& checkpoint, const std::string& out_dir) {
    require_exists(manifest_path);
    auto manifest = read_manifest(manifest_path);
    RemmNet net = load_net(cfg, checkpoint);
    fs::create_directories(out_dir);
    const auto params = extract_params_from(cfg);
    const int g_size = cfg.get_int("cyclic.g_size");
    parallel_for(static_cast<int>(manifest.size()), cfg.get_int("workers"),
                 [&](int i) {
                     const auto& bp = manifest[static_cast<std::size_t>(i)];
                     const ImageF x = load_png_gray(bp.x_path);
                     const ImageF y = load_png_gray(bp.y_path);
                     auto ex = multiscale_extract(x, net, Modality::A, params);
                     auto ey = multiscale_extract(y, net, Modality::B, params);
                     save_descriptors(
                         (fs::path(out_dir) / (bp.id + "_X.desc")).string(),
                         ex, g_size);
                     save_descriptors(
                         (fs::path(out_dir) / (bp.id + "_Y.desc")).string(),
                         ey, g_size);
                 });
    echo_config(cfg, out_dir);
    std::cout << "extracted " << manifest.size() << " pairs\n";
    return 0;
}

int cmd_match(const Config& cfg, const std::string& manifest_path,
              const std::string& desc_dir, const std::string& out_dir) {
    require_exists(manifest_path);
    require_exists(desc_dir);
    auto manifest = read_manifest(manifest_path);
    fs::create_directories(out_dir);
    const int g_size = cfg.get_int("cyclic.g_size");
    const TopKMode mode = topk_mode_from(cfg);
    const double ratio = cfg.get_double("cyclic.topk_ratio");
    const float min_sim = static_cast<float>(cfg.get_double("match.min_sim"));
    const double inlier_px = cfg.get_double("ransac.inlier_px");
    const int max_iters = cfg.get_int("ransac.max_iters");
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    parallel_for(
        static_cast<int>(manifest.size()), cfg.get_int("workers"), [&](int i) {
            const auto& bp = manifest[static_cast<std::size_t>(i)];
            auto ex = load_descriptors(
                (fs::path(desc_dir) / (bp.id + "_X.desc")).string());
            auto ey = load_descriptors(
                (fs::path(desc_dir) / (bp.id + "_Y.desc")).string());
            auto da = expand_for_matching(ex, g_size, mode, ratio);
            auto db = expand_for_matching(ey, g_size, mode, ratio);
            MatchSet ms = match_mutual_nn(da, db, min_sim);
            ransac_homography(ex.keypoints, ey.keypoints, ms, inlier_px,
                              max_iters, seed);
            save_matches_csv(
                (fs::path(out_dir) / (bp.id + ".csv")).string(),
                ex.keypoints, ey.keypoints, ms);
        });
    echo_config(cfg, out_dir);
    std::cout << "matched " << manifest.size() << " pairs\n";
    return 0;
}

int cmd_eval(const Config& cfg, const std::string& manifest_path,
             const std::string& match_dir, const std::string& out_dir) {
    require_exists(manifest_path);
    require_exists(match_dir);
    auto manifest = read_manifest(manifest_path);
    fs::create_directories(out_dir);
    const double thresh = cfg.get_double("eval.pixel_thresh");
    std::vector<EvalRecord> records(manifest.size());
    parallel_for(
        static_cast<int>(manifest.size()), cfg.get_int("workers"), [&](int i) {
            const auto& bp = manifest[static_cast<std::size_t>(i)];
            const auto rows = load_matches_csv(
                (fs::path(match_dir) / (bp.id + ".csv")).string());
            Correspondences pts;
            bool any_inlier = false;
            for (const auto& r : rows) any_inlier = any_inlier || r.inlier;
            for (const auto& r : rows) {
                if (any_inlier && !r.inlier) continue;
                pts.emplace_back(Vec2{r.xa, r.ya}, Vec2{r.xb, r.yb});
            }
            EvalRecord rec;
            rec.pair_id = bp.id;
            rec.bucket = bp.bucket;
            rec.ncm = ncm(pts, bp.gt, thresh);
            rec.success = rec.ncm > kNcmSuccessThreshold;
            rec.rmse = rmse(pts, bp.gt, thresh);
            records[static_cast<std::size_t>(i)] = rec;
        });
    const auto rows = bucket_report(records);
    write_report_csv((fs::path(out_dir) / "report.csv").string(), rows);
    echo_config(cfg, out_dir);
    for (const auto& r : rows)
        std::cout << r.label << ": NCM " << r.mean_ncm << " RMSE "
                  << r.mean_rmse << " SR " << r.sr << "%\n";
    return 0;
}

int cmd_plot(const Config& cfg, const std::string& manifest_path,
             const std::string& pair_id, const std::string& match_dir,
             const std::string& out_path) {
    (void)cfg;
    require_exists(manifest_path);
    auto manifest = read_manifest(manifest_path);
    const BenchmarkPair* bp = nullptr;
    for (const auto& p : manifest)
        if (p.id == pair_id) bp = &p;
    if (!bp) throw UsageError("pair id not in manifest: " + pair_id);
    const std::string csv =
        (fs::path(match_dir) / (bp->id + ".csv")).string();
    require_exists(csv);
    require_exists(bp->x_path);
    require_exists(bp->y_path);
    plot_matches(load_png_gray(bp->x_path), load_png_gray(bp->y_path),
                 load_matches_csv(csv), bp->gt, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"REMM rotation-equivariant multimodal matching pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    int seed_flag = -1;
    int workers_flag = -1;
    app.add_option("--config", config_path, "config file (key = value lines)");
    app.add_option("--set", overrides, "config override key=value")
        ->take_all();
    app.add_option("--seed", seed_flag, "random seed (overrides config)");
    app.add_option("--workers", workers_flag, "worker threads (0 = cores)");

    std::string pairs_dir, out_dir, manifest, checkpoint, desc_dir, match_dir,
        pair_id, out_path;
    auto* gen = app.add_subcommand("gen-bench", "synthesize the benchmark");
    gen->add_option("--pairs-dir", pairs_dir)->required();
    gen->add_option("--out", out_dir)->required();
    auto* tr = app.add_subcommand("train", "train the feature network");
    tr->add_option("--pairs-dir", pairs_dir)->required();
    tr->add_option("--out", out_dir)->required();
    auto* ex = app.add_subcommand("extract", "extract keypoints/descriptors");
    ex->add_option("--manifest", manifest)->required();
    ex->add_option("--checkpoint", checkpoint)->required();
    ex->add_option("--out", out_dir)->required();
    auto* ma = app.add_subcommand("match", "match descriptor files");
    ma->add_option("--manifest", manifest)->required();
    ma->add_option("--desc-dir", desc_dir)->required();
    ma->add_option("--out", out_dir)->required();
    auto* ev = app.add_subcommand("eval", "evaluate matches against GT");
    ev->add_option("--manifest", manifest)->required();
    ev->add_option("--match-dir", match_dir)->required();
    ev->add_option("--out", out_dir)->required();
    auto* pl = app.add_subcommand("plot", "render side-by-side match plot");
    pl->add_option("--manifest", manifest)->required();
    pl->add_option("--id", pair_id)->required();
    pl->add_option("--match-dir", match_dir)->required();
    pl->add_option("--out", out_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        Config cfg = Config::defaults();
        if (const char* env_seed = std::getenv("REMM_SEED"))
            cfg.set("seed", env_seed);
        if (!config_path.empty()) {
            require_exists(config_path);
            cfg.load_file(config_path);
        }
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw UsageError("--set expects key=value, got " + kv);
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_flag >= 0) cfg.set("seed", std::to_string(seed_flag));
        if (workers_flag >= 0) cfg.set("workers", std::to_string(workers_flag));

        if (gen->parsed()) return cmd_gen_bench(cfg, pairs_dir, out_dir);
        if (tr->parsed()) return cmd_train(cfg, pairs_dir, out_dir);
        if (ex->parsed())
            return cmd_extract(cfg, manifest, checkpoint, out_dir);
        if (ma->parsed()) return cmd_match(cfg, manifest, desc_dir, out_dir);
        if (ev->parsed()) return cmd_eval(cfg, manifest, match_dir, out_dir);
        if (pl->parsed())
            return cmd_plot(cfg, manifest, pair_id, match_dir, out_path);
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
