#include "lmk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "lmk/rng.hpp"
#include "lmk/warp.hpp"

namespace fs = std::filesystem;

namespace lmk {

Image Dataset::image(const std::string& id) const { return load_dataset_image(manifest, id); }

Image Dataset::mask(const std::string& id) const { return load_dataset_mask(manifest, id); }

const LandmarkSet& Dataset::landmarks(const std::string& id) const {
    auto it = annotations.find(id);
    if (it == annotations.end())
        throw std::invalid_argument("dataset: no annotations for " + id);
    return it->second;
}

Dataset open_dataset(const std::string& manifest_path) {
    Dataset data;
    data.manifest = load_manifest(manifest_path);
    for (const ManifestEntry& e : data.manifest.entries) data.ids.push_back(e.id);
    if (!data.manifest.annotations_path.empty()) {
        const auto annos = load_annotations(
            (fs::path(data.manifest.root) / data.manifest.annotations_path).string());
        for (const LandmarkSet& a : annos) data.annotations[a.image_id] = a;
    }
    if (!data.ids.empty()) {
        const Image first = data.image(data.ids.front());
        data.image_h = first.h;
        data.image_w = first.w;
    }
    return data;
}

DataSplit split_dataset(const Dataset& data, double test_fraction) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("split_dataset: test_fraction out of range");
    DataSplit split;
    const size_t n_test = size_t(std::lround(test_fraction * double(data.ids.size())));
    const size_t n_train = data.ids.size() - n_test;
    split.train_ids.assign(data.ids.begin(), data.ids.begin() + n_train);
    split.test_ids.assign(data.ids.begin() + n_train, data.ids.end());
    return split;
}

TransformPolicy policy_from_config(const Config& cfg) {
    TransformPolicy p;
    p.crop_scale_min = cfg.get_real("crop_scale_min", p.crop_scale_min);
    p.crop_scale_max = cfg.get_real("crop_scale_max", p.crop_scale_max);
    p.tps_enabled = cfg.get_bool("tps_enabled", p.tps_enabled);
    p.tps_grid = cfg.get_int("tps_grid", p.tps_grid);
    p.tps_sigma = cfg.get_real("tps_sigma", p.tps_sigma);
    p.jitter_brightness = cfg.get_real("jitter_brightness", p.jitter_brightness);
    p.jitter_contrast = cfg.get_real("jitter_contrast", p.jitter_contrast);
    p.jitter_saturation = cfg.get_real("jitter_saturation", p.jitter_saturation);
    p.jitter_hue = cfg.get_real("jitter_hue", p.jitter_hue);
    p.blur_sigma_max = cfg.get_real("blur_sigma_max", p.blur_sigma_max);
    p.jpeg_quality_min = cfg.get_int("jpeg_quality_min", p.jpeg_quality_min);
    return p;
}

PretrainConfig pretrain_config_from(const Config& cfg) {
    PretrainConfig p;
    p.epochs = cfg.get_int("epochs", p.epochs);
    p.batch_size = cfg.get_int("batch_size", p.batch_size);
    p.queue_size = cfg.get_int("queue_size", p.queue_size);
    p.momentum_m = cfg.get_real("momentum_m", p.momentum_m);
    p.tau_nce = cfg.get_real("tau_nce", p.tau_nce);
    p.base_lr = cfg.get_real("base_lr", p.base_lr);
    p.weight_decay = cfg.get_real("weight_decay", p.weight_decay);
    p.strict_eq5 = cfg.get_bool("strict_eq5", p.strict_eq5);
    p.backbone = cfg.get_str("backbone", p.backbone);
    p.seed = uint64_t(cfg.get_int64("seed", 0));
    p.policy = policy_from_config(cfg);
    if (const char* env = std::getenv("LMK_NUM_WORKERS")) p.workers = std::atoi(env);
    return p;
}

std::set<int> blocks_from_config(const Config& cfg) {
    std::set<int> blocks;
    for (int b : cfg.get_int_list("blocks", {2, 3, 4, 5})) blocks.insert(b);
    return blocks;
}

int grid_for_side(int side) { return std::max(1, side / 2); }

Hypercolumn DescriptorSource::hypercolumn(const Image& image) const {
    const auto maps = net->forward_blocks(image, blocks);
    return build_hypercolumn(maps, grid > 0 ? grid : grid_for_side(std::max(image.h, image.w)));
}

FeatureMap DescriptorSource::describe(const Image& image) const {
    const Hypercolumn hc = hypercolumn(image);
    if (projector) return project_features(hc, *projector);
    return hc.as_feature_map();
}

int DescriptorSource::channels() const {
    if (projector) return projector->output_dim;
    return net->spec().hypercolumn_channels(blocks);
}

RegressionOutcome run_regression_eval(const Dataset& data, const DataSplit& split,
                                      const DescriptorSource& features, int n_annotations,
                                      const RegressorTrainConfig& train_cfg,
                                      const MetricConfig& metric_cfg, int regress_grid,
                                      int aug_per_image, int tps_grid, double tps_sigma,
                                      uint64_t aug_seed) {
    if (split.train_ids.empty() || split.test_ids.empty())
        throw std::invalid_argument("run_regression_eval: empty split");

    DescriptorSource train_features = features;
    if (regress_grid > 0) train_features.grid = regress_grid;

    std::vector<std::string> train_ids = split.train_ids;
    if (n_annotations > 0 && n_annotations < int(train_ids.size()))
        train_ids.resize(size_t(n_annotations));

    std::vector<FeatureMap> descs;
    std::vector<LandmarkSet> annos;
    Rng aug_rng(Rng(aug_seed).fork(0xA6ull).next_u64());
    for (const std::string& id : train_ids) {
        const Image img = data.image(id);
        descs.push_back(train_features.describe(img));
        annos.push_back(data.landmarks(id));
        for (int a = 0; a < aug_per_image; ++a) {
            const WarpField warp =
                make_tps_warp(tps_grid, tps_grid, tps_sigma, img.h, img.w, aug_rng.next_u64());
            const Image warped = apply_warp(img, warp);
            LandmarkSet lm = data.landmarks(id);
            auto [pts, ok] = map_coords(warp, lm.points);
            lm.points = pts;
            for (size_t l = 0; l < lm.visible.size(); ++l) lm.visible[l] = lm.visible[l] && ok[l];
            if (lm.visible_count() == 0) continue;
            descs.push_back(train_features.describe(warped));
            annos.push_back(std::move(lm));
        }
    }

    const RegressorParams params =
        train_regressor(descs, annos, data.image_h, data.image_w, train_cfg);

    std::vector<std::vector<Vec2>> preds;
    std::vector<LandmarkSet> gts;
    for (const std::string& id : split.test_ids) {
        const FeatureMap desc = train_features.describe(data.image(id));
        preds.push_back(regressor_forward(desc, params, data.image_h, data.image_w));
        gts.push_back(data.landmarks(id));
    }
    RegressionOutcome out;
    out.metric_value = compute_metrics(preds, gts, data.image_h, data.image_w, metric_cfg);
    out.n_train = int(train_ids.size());
    return out;
}

MatchingResult run_matching(const Dataset& data, const std::vector<std::string>& ids,
                            const DescriptorSource& features, int n_same, int n_diff,
                            uint64_t seed, int tps_grid, double tps_sigma,
                            MatchBenchmark* out_bench) {
    std::vector<LandmarkSet> annos;
    for (const std::string& id : ids) annos.push_back(data.landmarks(id));
    MatchBenchmark bench = build_matching_benchmark(annos, data.image_h, data.image_w, n_same,
                                                    n_diff, seed, tps_grid, tps_sigma);
    const MatchingResult res = run_matching_eval(
        bench, [&](const std::string& id) { return data.image(id); },
        [&](const Image& img) { return features.describe(img); });
    if (out_bench) *out_bench = std::move(bench);
    return res;
}

Eigen::MatrixXd sample_feature_rows(const Dataset& data, const std::vector<std::string>& ids,
                                    const DescriptorSource& features, int n_images,
                                    bool rectify) {
    const int n = std::min<int>(n_images, int(ids.size()));
    if (n < 1) throw std::invalid_argument("sample_feature_rows: no images");
    Eigen::MatrixXd rows;
    for (int i = 0; i < n; ++i) {
        const Hypercolumn hc = features.hypercolumn(data.image(ids[size_t(i)]));
        Eigen::MatrixXd block =
            ConstMatMap(hc.data.data(), hc.cells(), hc.c).cast<double>();
        if (rectify) block = block.cwiseMax(0.0);
        if (rows.size() == 0) {
            rows.resize(Eigen::Index(n) * block.rows(), block.cols());
        }
        rows.middleRows(Eigen::Index(i) * block.rows(), block.rows()) = block;
    }
    return rows;
}

Image heatmap_to_image(const FeatureMap& heatmap, int out_h, int out_w) {
    Image img(heatmap.h, heatmap.w, 1);
    for (int i = 0; i < heatmap.cells(); ++i) img.data[size_t(i)] = heatmap.data[size_t(i)];
    return resize_bilinear(img, out_h, out_w);
}

Image montage(const std::vector<std::vector<Image>>& rows) {
    if (rows.empty() || rows[0].empty()) throw std::invalid_argument("montage: empty input");
    const int cell_h = rows[0][0].h, cell_w = rows[0][0].w;
    size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const int pad = 2;
    Image out(int(rows.size()) * (cell_h + pad) - pad, int(cols) * (cell_w + pad) - pad, 3, 1.f);
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) {
            const Image& cell = rows[r][c];
            if (cell.h != cell_h || cell.w != cell_w)
                throw std::invalid_argument("montage: mixed cell sizes");
            for (int y = 0; y < cell_h; ++y)
                for (int x = 0; x < cell_w; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        out.at(int(r) * (cell_h + pad) + y, int(c) * (cell_w + pad) + x, ch) =
                            cell.c == 3 ? cell.at(y, x, ch) : cell.at(y, x, 0);
        }
    return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::array<std::string, 4>>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    f << "metric,value,n_annotations,seed\n";
    for (const auto& r : rows) f << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << '\n';
}

}  // namespace lmk
