#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lmk/features.hpp"
#include "lmk/tensor.hpp"
#include "lmk/landmarks.hpp"
#include "lmk/warp.hpp"

namespace lmk {

enum class PairType { Same, Diff };

struct MatchEntry {
    std::string ref_id;
    std::string tgt_id;
    PairType pair_type = PairType::Same;
    uint64_t warp_seed = 0;
    LandmarkSet ref_landmarks;
    LandmarkSet tgt_landmarks;
};

struct MatchBenchmark {
    std::vector<MatchEntry> entries;
    int n_same = 0;
    int n_diff = 0;
    // TPS parameters behind every same-identity pair
    int tps_grid = 5;
    double tps_sigma = 0.05;
    int image_h = 0, image_w = 0;
};

// Same-identity pairs warp an image by a seeded TPS and carry the exactly
// warped landmarks; different-identity pairs sample two distinct annotated
// images. Deterministic per seed.
MatchBenchmark build_matching_benchmark(const std::vector<LandmarkSet>& annotations, int image_h,
                                        int image_w, int n_same, int n_diff, uint64_t seed,
                                        int tps_grid = 5, double tps_sigma = 0.05);

void save_benchmark_csv(const MatchBenchmark& bench, const std::string& path);
// Rebuilds warped ground truth from the stored seeds and the annotations.
MatchBenchmark load_benchmark_csv(const std::string& path,
                                  const std::vector<LandmarkSet>& annotations, int image_h,
                                  int image_w, int tps_grid = 5, double tps_sigma = 0.05);

// For each visible reference landmark: bilinearly sample its descriptor,
// take the cosine-similarity argmax over all target cells (ties to the
// lowest row-major index), and return that cell center in image pixels.
LandmarkSet match_landmarks(const FeatureMap& ref_desc, const FeatureMap& tgt_desc,
                            const LandmarkSet& ref_landmarks, int image_h, int image_w);

// Mean Euclidean distance in pixels over landmarks visible in gt.
double mean_pixel_error(const LandmarkSet& pred, const LandmarkSet& gt);

enum class Metric { InterOcular, Pck };

struct MetricConfig {
    Metric metric = Metric::InterOcular;
    int eye_left = 0;
    int eye_right = 1;
    double pck_alpha = 0.05;
};

// inter_ocular: mean over visible landmarks of error / inter-ocular distance,
// in percent. pck: percent of visible landmarks within alpha * max(H, W).
double compute_metrics(const std::vector<std::vector<Vec2>>& preds,
                       const std::vector<LandmarkSet>& gts, int image_h, int image_w,
                       const MetricConfig& config);

struct MatchingResult {
    double same_error = 0.0;
    double diff_error = 0.0;
    int same_pairs = 0;
    int diff_pairs = 0;
};

// Evaluates a benchmark given descriptor extraction callbacks; ref/tgt images
// are produced on demand so same-pairs can be synthesized from their seeds.
using DescriptorFn = std::function<FeatureMap(const Image&)>;
using ImageById = std::function<Image(const std::string&)>;
MatchingResult run_matching_eval(const MatchBenchmark& bench, const ImageById& image_by_id,
                                 const DescriptorFn& descriptors);

}  // namespace lmk
