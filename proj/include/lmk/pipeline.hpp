#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lmk/analysis.hpp"
#include "lmk/checkpoint.hpp"
#include "lmk/config.hpp"
#include "lmk/data_io.hpp"
#include "lmk/equivariant.hpp"
#include "lmk/invariant.hpp"
#include "lmk/matching.hpp"
#include "lmk/regressor.hpp"

namespace lmk {

// Manifest plus joined annotations, loading images on demand.
struct Dataset {
    DatasetManifest manifest;
    std::vector<std::string> ids;
    std::map<std::string, LandmarkSet> annotations;
    int image_h = 0, image_w = 0;

    Image image(const std::string& id) const;
    Image mask(const std::string& id) const;
    const LandmarkSet& landmarks(const std::string& id) const;
    bool has_annotations() const { return !annotations.empty(); }
};

Dataset open_dataset(const std::string& manifest_path);

// Head of the list trains, tail evaluates.
struct DataSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};
DataSplit split_dataset(const Dataset& data, double test_fraction);

TransformPolicy policy_from_config(const Config& cfg);
PretrainConfig pretrain_config_from(const Config& cfg);

// Frozen-backbone descriptor extraction: tapped blocks -> hypercolumn at the
// given grid, optionally projected.
struct DescriptorSource {
    const Backbone* net = nullptr;
    std::set<int> blocks = {2, 3, 4, 5};
    int grid = 48;
    const Projector* projector = nullptr;

    Hypercolumn hypercolumn(const Image& image) const;
    FeatureMap describe(const Image& image) const;
    int channels() const;
};

std::set<int> blocks_from_config(const Config& cfg);
int grid_for_side(int side);  // default interpolation grid: side / 2

// Trains a regressor on the first n annotated train images and reports the
// metric on the test split. n_annotations <= 0 means the whole train split.
struct RegressionOutcome {
    double metric_value = 0.0;
    int n_train = 0;
};
RegressionOutcome run_regression_eval(const Dataset& data, const DataSplit& split,
                                      const DescriptorSource& features, int n_annotations,
                                      const RegressorTrainConfig& train_cfg,
                                      const MetricConfig& metric_cfg, int regress_grid,
                                      int aug_per_image = 0, int tps_grid = 5,
                                      double tps_sigma = 0.05, uint64_t aug_seed = 0);

// Benchmark over the test split, evaluated with the given descriptors.
MatchingResult run_matching(const Dataset& data, const std::vector<std::string>& ids,
                            const DescriptorSource& features, int n_same, int n_diff,
                            uint64_t seed, int tps_grid, double tps_sigma,
                            MatchBenchmark* out_bench = nullptr);

// Rectified hypercolumn rows sampled from the first n images.
Eigen::MatrixXd sample_feature_rows(const Dataset& data, const std::vector<std::string>& ids,
                                    const DescriptorSource& features, int n_images,
                                    bool rectify);

// Simple grayscale montage: rows of equally-sized cells with 2px separators.
Image montage(const std::vector<std::vector<Image>>& rows);
Image heatmap_to_image(const FeatureMap& heatmap, int out_h, int out_w);

void write_metrics_csv(const std::string& path,
                       const std::vector<std::array<std::string, 4>>& rows);

}  // namespace lmk
