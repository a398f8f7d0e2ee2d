#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "lmk/errors.hpp"
#include "lmk/pipeline.hpp"
#include "lmk/png_io.hpp"
#include "lmk/rng.hpp"
#include "lmk/synthetic.hpp"

namespace fs = std::filesystem;
using namespace lmk;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::string data_path;
    std::string checkpoint_path;
    std::string projector_path;
    std::string benchmark_path;
    long long seed = -1;  // -1: take from config
};

Config load_config(const CommonArgs& args) {
    Config cfg;
    if (!args.config_path.empty()) cfg = Config::parse_file(args.config_path);
    if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
    return cfg;
}

uint64_t seed_from(const Config& cfg) { return uint64_t(cfg.get_int64("seed", 0)); }

void write_run_record(const std::string& out_dir, const std::string& command,
                      const std::vector<std::string>& argv, const Config& cfg,
                      const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["version"] = kToolVersion;
    j["seed"] = cfg.get_int64("seed", 0);
    json snap = json::object();
    for (const auto& [k, v] : cfg.entries()) snap[k] = v;
    j["config"] = snap;
    j["outputs"] = outputs;
    std::ofstream f((fs::path(out_dir) / "run.json").string());
    f << j.dump(2) << "\n";
}

DescriptorSource make_source(const Dataset& data, const Backbone& net, const Config& cfg,
                             const Projector* proj) {
    DescriptorSource src;
    src.net = &net;
    src.blocks = blocks_from_config(cfg);
    src.grid = cfg.get_int("grid", grid_for_side(std::max(data.image_h, data.image_w)));
    src.projector = proj;
    return src;
}

MetricConfig metric_from_config(const Config& cfg) {
    MetricConfig m;
    const std::string name = cfg.get_str("metric", "pck");
    if (name == "pck")
        m.metric = Metric::Pck;
    else if (name == "inter_ocular")
        m.metric = Metric::InterOcular;
    else
        throw std::invalid_argument("unknown metric " + name);
    const auto eyes = cfg.get_int_list("eye_indices", {0, 1});
    if (eyes.size() != 2) throw std::invalid_argument("eye_indices needs two entries");
    m.eye_left = eyes[0];
    m.eye_right = eyes[1];
    m.pck_alpha = cfg.get_real("pck_alpha", 0.05);
    return m;
}

RegressorTrainConfig regressor_config_from(const Config& cfg, uint64_t seed) {
    RegressorTrainConfig t;
    t.n_filters = cfg.get_int("K", 50);
    t.epochs = cfg.get_int("regress_epochs", 60);
    t.lr = cfg.get_real("regress_lr", 1e-3);
    t.weight_decay = cfg.get_real("regress_wd", 5e-4);
    t.softargmax_beta = cfg.get_real("softargmax_beta", 1.0);
    t.seed = seed;
    return t;
}

int cmd_gen_data(const CommonArgs& args, int n, int size, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    fs::create_directories(args.out_dir);
    generate_synthetic_dataset(n, size, size, seed_from(cfg), args.out_dir);
    write_run_record(args.out_dir, "gen-data", argv, cfg,
                     {"manifest.json", "annotations.csv", "images/", "masks/"});
    std::cout << "wrote " << n << " images under " << args.out_dir << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));

    std::vector<Image> images;
    for (const std::string& id : split.train_ids) images.push_back(data.image(id));

    PretrainConfig pcfg = pretrain_config_from(cfg);
    fs::create_directories(args.out_dir);
    std::ofstream metrics((fs::path(args.out_dir) / "metrics.csv").string());
    metrics << "epoch,loss_mean,lr\n";
    metrics.precision(8);
    EncoderState state = pretrain(images, pcfg, nullptr, [&](const EpochMetrics& m) {
        metrics << m.epoch << ',' << m.loss_mean << ',' << m.lr << std::endl;
        std::cout << "epoch " << m.epoch << " loss " << m.loss_mean << " lr " << m.lr << "\n";
    });

    const std::string ckpt = (fs::path(args.out_dir) / "encoder.ckpt").string();
    save_encoder_checkpoint(state, ckpt, cfg);
    write_run_record(args.out_dir, "pretrain", argv, cfg, {"encoder.ckpt", "metrics.csv"});
    return 0;
}

int cmd_train_projector(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);

    DescriptorSource src = make_source(data, state.query, cfg, nullptr);
    src.grid = cfg.get_int("proj_grid", src.grid);
    const int n_images =
        std::min<int>(cfg.get_int("proj_images", int(split.train_ids.size())),
                      int(split.train_ids.size()));

    ProjectorTrainConfig pcfg;
    pcfg.epochs = cfg.get_int("proj_epochs", 10);
    pcfg.lr = cfg.get_real("proj_lr", 1e-3);
    pcfg.weight_decay = cfg.get_real("proj_wd", 5e-4);
    pcfg.tau = cfg.get_real("proj_tau", 1.0 / 7.0);
    pcfg.mean_over_u = cfg.get_bool("mean_over_u", false);
    pcfg.seed = seed_from(cfg);

    const int d = cfg.get_int("proj_dim", 64);
    const Projector proj = train_projector(
        [&](int i) { return src.hypercolumn(data.image(split.train_ids[size_t(i)])); }, n_images,
        src.channels(), d, pcfg);

    fs::create_directories(args.out_dir);
    const std::string out = (fs::path(args.out_dir) / "projector.ckpt").string();
    save_projector_checkpoint(proj, out, cfg);
    write_run_record(args.out_dir, "train-projector", argv, cfg, {"projector.ckpt"});
    std::cout << "projector " << src.channels() << " -> " << d << " saved to " << out << "\n";
    return 0;
}

int cmd_eval_match(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);

    std::optional<Projector> proj;
    if (!args.projector_path.empty()) proj = load_projector_checkpoint(args.projector_path);
    const DescriptorSource src = make_source(data, state.query, cfg, proj ? &*proj : nullptr);

    MatchBenchmark bench;
    MatchingResult res;
    if (!args.benchmark_path.empty()) {
        // reuse a previously written benchmark file
        std::vector<LandmarkSet> annos;
        for (const std::string& id : data.ids) annos.push_back(data.landmarks(id));
        bench = load_benchmark_csv(args.benchmark_path, annos, data.image_h, data.image_w,
                                   cfg.get_int("tps_grid", 5), cfg.get_real("tps_sigma", 0.05));
        res = run_matching_eval(
            bench, [&](const std::string& id) { return data.image(id); },
            [&](const Image& img) { return src.describe(img); });
    } else {
        res = run_matching(data, split.test_ids, src, cfg.get_int("n_same", 500),
                           cfg.get_int("n_diff", 500), seed_from(cfg), cfg.get_int("tps_grid", 5),
                           cfg.get_real("tps_sigma", 0.05), &bench);
    }

    fs::create_directories(args.out_dir);
    save_benchmark_csv(bench, (fs::path(args.out_dir) / "benchmark.csv").string());
    const std::string seed_str = std::to_string(seed_from(cfg));
    write_metrics_csv((fs::path(args.out_dir) / "matching.csv").string(),
                      {{"match_same_px", std::to_string(res.same_error), "0", seed_str},
                       {"match_diff_px", std::to_string(res.diff_error), "0", seed_str}});
    write_run_record(args.out_dir, "eval-match", argv, cfg, {"benchmark.csv", "matching.csv"});
    std::cout << "same " << res.same_error << " px over " << res.same_pairs << " pairs, diff "
              << res.diff_error << " px over " << res.diff_pairs << " pairs\n";
    return 0;
}

int cmd_eval_regress(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);

    std::optional<Projector> proj;
    if (!args.projector_path.empty()) proj = load_projector_checkpoint(args.projector_path);
    const DescriptorSource src = make_source(data, state.query, cfg, proj ? &*proj : nullptr);

    const MetricConfig metric = metric_from_config(cfg);
    const RegressorTrainConfig train_cfg = regressor_config_from(cfg, seed_from(cfg));
    const RegressionOutcome out = run_regression_eval(
        data, split, src, cfg.get_int("n_annotations", 0), train_cfg, metric,
        cfg.get_int("regress_grid", src.grid));

    fs::create_directories(args.out_dir);
    write_metrics_csv((fs::path(args.out_dir) / "regression.csv").string(),
                      {{cfg.get_str("metric", "pck"), std::to_string(out.metric_value),
                        std::to_string(out.n_train), std::to_string(seed_from(cfg))}});
    write_run_record(args.out_dir, "eval-regress", argv, cfg, {"regression.csv"});
    std::cout << cfg.get_str("metric", "pck") << " = " << out.metric_value << " ("
              << out.n_train << " training annotations)\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);

    std::optional<Projector> proj;
    if (!args.projector_path.empty()) proj = load_projector_checkpoint(args.projector_path);
    const DescriptorSource src = make_source(data, state.query, cfg, proj ? &*proj : nullptr);

    const MetricConfig metric = metric_from_config(cfg);
    const std::string metric_name = cfg.get_str("metric", "pck");
    const auto sizes = cfg.get_int_list("annotation_sizes", {10, 50, 100});
    const int n_seeds = cfg.get_int("sweep_seeds", 3);
    const int aug = cfg.get_int("aug_per_image", 0);

    std::vector<std::array<std::string, 4>> rows;
    for (int size : sizes) {
        double mean = 0.0, m2 = 0.0;
        for (int s = 0; s < n_seeds; ++s) {
            const uint64_t seed = seed_from(cfg) + uint64_t(s);
            RegressorTrainConfig train_cfg = regressor_config_from(cfg, seed);
            const RegressionOutcome out = run_regression_eval(
                data, split, src, size, train_cfg, metric, cfg.get_int("regress_grid", src.grid),
                aug, cfg.get_int("tps_grid", 5), cfg.get_real("tps_sigma", 0.05), seed);
            rows.push_back({metric_name, std::to_string(out.metric_value), std::to_string(size),
                            std::to_string(seed)});
            const double delta = out.metric_value - mean;
            mean += delta / double(s + 1);
            m2 += delta * (out.metric_value - mean);
            std::cout << "n=" << size << " seed=" << seed << " " << metric_name << "="
                      << out.metric_value << "\n";
        }
        const double spread = n_seeds > 1 ? std::sqrt(m2 / double(n_seeds - 1)) : 0.0;
        rows.push_back({metric_name + "_mean", std::to_string(mean), std::to_string(size), "-1"});
        rows.push_back(
            {metric_name + "_spread", std::to_string(spread), std::to_string(size), "-1"});
    }
    fs::create_directories(args.out_dir);
    write_metrics_csv((fs::path(args.out_dir) / "sweep.csv").string(), rows);
    write_run_record(args.out_dir, "sweep-annotations", argv, cfg, {"sweep.csv"});
    return 0;
}

int cmd_distill_parts(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);
    const DescriptorSource src = make_source(data, state.query, cfg, nullptr);

    const int k = cfg.get_int("nmf_k", 6);
    const int iters = cfg.get_int("nmf_iters", 200);
    const int sample = cfg.get_int("sample_images", 32);
    const Eigen::MatrixXd rows =
        sample_feature_rows(data, split.train_ids, src, sample, /*rectify=*/true);
    const NmfFactors factors = nmf_factorize(rows, k, iters, seed_from(cfg));

    fs::create_directories(args.out_dir);
    {
        std::ofstream f((fs::path(args.out_dir) / "nmf_error.csv").string());
        f << "iteration,frobenius_error\n";
        for (size_t i = 0; i < factors.recon_error_history.size(); ++i)
            f << i + 1 << ',' << factors.recon_error_history[i] << '\n';
    }

    // montage: input image followed by its k part heatmaps
    const int show = std::min<int>(cfg.get_int("show_images", 6), int(split.test_ids.size()));
    std::vector<std::vector<Image>> grid;
    for (int i = 0; i < show; ++i) {
        const Image img = data.image(split.test_ids[size_t(i)]);
        const Hypercolumn hc = src.hypercolumn(img);
        const auto heatmaps = part_heatmaps(hc, factors.h);
        std::vector<Image> row = {img};
        for (const FeatureMap& hm : heatmaps) row.push_back(heatmap_to_image(hm, img.h, img.w));
        grid.push_back(std::move(row));
    }
    write_png((fs::path(args.out_dir) / "parts.png").string(), montage(grid));
    write_run_record(args.out_dir, "distill-parts", argv, cfg, {"parts.png", "nmf_error.csv"});
    std::cout << "distilled " << k << " parts; final error "
              << factors.recon_error_history.back() << "\n";
    return 0;
}

int cmd_visualize_pca(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);
    const DescriptorSource src = make_source(data, state.query, cfg, nullptr);

    const int k = cfg.get_int("pca_k", 4);
    const int sample = cfg.get_int("sample_images", 32);
    const Eigen::MatrixXd rows =
        sample_feature_rows(data, split.train_ids, src, sample, /*rectify=*/false);
    const PcaBasis basis = pca_basis(rows, k);

    fs::create_directories(args.out_dir);
    {
        std::ofstream f((fs::path(args.out_dir) / "pca_singular_values.csv").string());
        f << "component,singular_value\n";
        for (int i = 0; i < k; ++i) f << i + 1 << ',' << basis.singular_values(i) << '\n';
    }

    const int show = std::min<int>(cfg.get_int("show_images", 6), int(split.test_ids.size()));
    std::vector<std::vector<Image>> grid;
    for (int i = 0; i < show; ++i) {
        const Image img = data.image(split.test_ids[size_t(i)]);
        const Hypercolumn hc = src.hypercolumn(img);
        std::vector<Image> row = {img};
        for (int j = 0; j < k; ++j) {
            FeatureMap proj_map(hc.grid_h, hc.grid_w, 1);
            double lo = 1e18, hi = -1e18;
            std::vector<double> vals(size_t(hc.cells()));
            for (int cell = 0; cell < hc.cells(); ++cell) {
                double dot = 0.0;
                for (int ch = 0; ch < hc.c; ++ch)
                    dot += double(hc.data[size_t(cell) * hc.c + ch]) * basis.components(j, ch);
                vals[size_t(cell)] = dot;
                lo = std::min(lo, dot);
                hi = std::max(hi, dot);
            }
            for (int cell = 0; cell < hc.cells(); ++cell)
                proj_map.data[size_t(cell)] =
                    float(hi - lo > 1e-12 ? (vals[size_t(cell)] - lo) / (hi - lo) : 0.0);
            row.push_back(heatmap_to_image(proj_map, img.h, img.w));
        }
        grid.push_back(std::move(row));
    }
    write_png((fs::path(args.out_dir) / "pca.png").string(), montage(grid));
    write_run_record(args.out_dir, "visualize-pca", argv, cfg,
                     {"pca.png", "pca_singular_values.csv"});
    return 0;
}

int cmd_segment(const CommonArgs& args, const std::vector<std::string>& argv) {
    Config cfg = load_config(args);
    const Dataset data = open_dataset(args.data_path);
    const DataSplit split = split_dataset(data, cfg.get_real("test_fraction", 0.2));
    EncoderState state = load_encoder_checkpoint(args.checkpoint_path);
    const DescriptorSource src = make_source(data, state.query, cfg, nullptr);

    const int n_annotations =
        std::min<int>(cfg.get_int("n_annotations", int(split.train_ids.size())),
                      int(split.train_ids.size()));
    std::vector<FeatureMap> train_f, test_f;
    std::vector<Image> train_m, test_m;
    for (int i = 0; i < n_annotations; ++i) {
        const std::string& id = split.train_ids[size_t(i)];
        train_f.push_back(src.describe(data.image(id)));
        train_m.push_back(data.mask(id));
    }
    for (const std::string& id : split.test_ids) {
        test_f.push_back(src.describe(data.image(id)));
        test_m.push_back(data.mask(id));
    }

    SegmentationProbeConfig scfg;
    scfg.epochs = cfg.get_int("probe_epochs", 80);
    scfg.lr = cfg.get_real("probe_lr", 0.05);
    scfg.weight_decay = cfg.get_real("probe_wd", 1e-4);
    scfg.seed = seed_from(cfg);
    const SegmentationProbe probe = segmentation_probe(train_f, train_m, test_f, test_m, scfg);

    fs::create_directories(args.out_dir);
    write_metrics_csv((fs::path(args.out_dir) / "segmentation.csv").string(),
                      {{"mean_iou", std::to_string(probe.mean_iou),
                        std::to_string(n_annotations), std::to_string(seed_from(cfg))}});
    write_run_record(args.out_dir, "segment", argv, cfg, {"segmentation.csv"});
    std::cout << "mean IoU " << probe.mean_iou << " (" << n_annotations << " masks)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised landmark representations: pretraining and evaluation"};
    app.require_subcommand(1);

    CommonArgs args;
    int gen_n = 64, gen_size = 96;

    auto add_common = [&](CLI::App* cmd, bool needs_data, bool needs_ckpt) {
        cmd->add_option("--config", args.config_path, "config file (key = value)");
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--seed", args.seed, "seed override");
        if (needs_data)
            cmd->add_option("--data", args.data_path, "dataset manifest")->required();
        if (needs_ckpt)
            cmd->add_option("--checkpoint", args.checkpoint_path, "encoder checkpoint")
                ->required();
    };

    CLI::App* gen = app.add_subcommand("gen-data", "render a synthetic blob-face dataset");
    add_common(gen, false, false);
    gen->add_option("--n", gen_n, "number of images");
    gen->add_option("--size", gen_size, "image side length");

    CLI::App* pre = app.add_subcommand("pretrain", "contrastive pretraining");
    add_common(pre, true, false);

    CLI::App* tp = app.add_subcommand("train-projector", "train the linear feature projector");
    add_common(tp, true, true);

    CLI::App* em = app.add_subcommand("eval-match", "landmark matching benchmark");
    add_common(em, true, true);
    em->add_option("--projector", args.projector_path, "projector checkpoint");
    em->add_option("--benchmark", args.benchmark_path, "existing benchmark csv to reuse");

    CLI::App* er = app.add_subcommand("eval-regress", "frozen-feature landmark regression");
    add_common(er, true, true);
    er->add_option("--projector", args.projector_path, "projector checkpoint");

    CLI::App* sw = app.add_subcommand("sweep-annotations", "limited-annotation sweeps");
    add_common(sw, true, true);
    sw->add_option("--projector", args.projector_path, "projector checkpoint");

    CLI::App* dp = app.add_subcommand("distill-parts", "nonnegative part distillation");
    add_common(dp, true, true);

    CLI::App* vp = app.add_subcommand("visualize-pca", "uncentered pca projection maps");
    add_common(vp, true, true);

    CLI::App* sg = app.add_subcommand("segment", "figure-ground segmentation probe");
    add_common(sg, true, true);

    std::vector<std::string> argvec(argv, argv + argc);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(args, gen_n, gen_size, argvec);
        if (pre->parsed()) return cmd_pretrain(args, argvec);
        if (tp->parsed()) return cmd_train_projector(args, argvec);
        if (em->parsed()) return cmd_eval_match(args, argvec);
        if (er->parsed()) return cmd_eval_regress(args, argvec);
        if (sw->parsed()) return cmd_sweep(args, argvec);
        if (dp->parsed()) return cmd_distill_parts(args, argvec);
        if (vp->parsed()) return cmd_visualize_pca(args, argvec);
        if (sg->parsed()) return cmd_segment(args, argvec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
