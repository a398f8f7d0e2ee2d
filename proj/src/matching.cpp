#include "lmk/matching.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace {

LandmarkSet warp_landmarks(const LandmarkSet& ref, const WarpField& warp) {
    auto [mapped, ok] = map_coords(warp, ref.points);
    LandmarkSet out;
    out.image_id = ref.image_id;
    out.points = mapped;
    out.visible.resize(ref.points.size());
    for (size_t i = 0; i < ref.points.size(); ++i) out.visible[i] = ref.visible[i] && ok[i];
    return out;
}

}  // namespace

MatchBenchmark build_matching_benchmark(const std::vector<LandmarkSet>& annotations, int image_h,
                                        int image_w, int n_same, int n_diff, uint64_t seed,
                                        int tps_grid, double tps_sigma) {
    if (annotations.size() < 2)
        throw std::invalid_argument("build_matching_benchmark: need at least 2 annotated images");
    if (n_same < 0 || n_diff < 0)
        throw std::invalid_argument("build_matching_benchmark: negative pair counts");

    MatchBenchmark bench;
    bench.n_same = n_same;
    bench.n_diff = n_diff;
    bench.tps_grid = tps_grid;
    bench.tps_sigma = tps_sigma;
    bench.image_h = image_h;
    bench.image_w = image_w;

    Rng rng(seed);
    for (int i = 0; i < n_same; ++i) {
        const LandmarkSet& ref = annotations[rng.uniform_index(annotations.size())];
        MatchEntry e;
        e.ref_id = ref.image_id;
        e.tgt_id = ref.image_id;
        e.pair_type = PairType::Same;
        e.warp_seed = rng.next_u64();
        e.ref_landmarks = ref;
        const WarpField warp =
            make_tps_warp(tps_grid, tps_grid, tps_sigma, image_h, image_w, e.warp_seed);
        e.tgt_landmarks = warp_landmarks(ref, warp);
        bench.entries.push_back(std::move(e));
    }
    for (int i = 0; i < n_diff; ++i) {
        const size_t a = rng.uniform_index(annotations.size());
        size_t b = rng.uniform_index(annotations.size() - 1);
        if (b >= a) ++b;
        MatchEntry e;
        e.ref_id = annotations[a].image_id;
        e.tgt_id = annotations[b].image_id;
        e.pair_type = PairType::Diff;
        e.warp_seed = 0;
        e.ref_landmarks = annotations[a];
        e.tgt_landmarks = annotations[b];
        bench.entries.push_back(std::move(e));
    }
    return bench;
}

void save_benchmark_csv(const MatchBenchmark& bench, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_benchmark_csv: cannot open " + path);
    f << "ref_id,tgt_id,pair_type,warp_seed\n";
    for (const MatchEntry& e : bench.entries)
        f << e.ref_id << ',' << e.tgt_id << ',' << (e.pair_type == PairType::Same ? "same" : "diff")
          << ',' << e.warp_seed << '\n';
}

MatchBenchmark load_benchmark_csv(const std::string& path,
                                  const std::vector<LandmarkSet>& annotations, int image_h,
                                  int image_w, int tps_grid, double tps_sigma) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_benchmark_csv: cannot open " + path);
    std::map<std::string, const LandmarkSet*> by_id;
    for (const LandmarkSet& a : annotations) by_id[a.image_id] = &a;

    MatchBenchmark bench;
    bench.tps_grid = tps_grid;
    bench.tps_sigma = tps_sigma;
    bench.image_h = image_h;
    bench.image_w = image_w;

    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (lineno == 1) {
            if (line.rfind("ref_id", 0) != 0)
                throw ParseError("load_benchmark_csv: missing header", lineno);
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string ref, tgt, type, seed_str;
        if (!std::getline(ss, ref, ',') || !std::getline(ss, tgt, ',') ||
            !std::getline(ss, type, ',') || !std::getline(ss, seed_str, ','))
            throw ParseError("load_benchmark_csv: malformed row", lineno);
        MatchEntry e;
        e.ref_id = ref;
        e.tgt_id = tgt;
        if (type == "same")
            e.pair_type = PairType::Same;
        else if (type == "diff")
            e.pair_type = PairType::Diff;
        else
            throw ParseError("load_benchmark_csv: unknown pair type " + type, lineno);
        try {
            e.warp_seed = std::stoull(seed_str);
        } catch (...) {
            throw ParseError("load_benchmark_csv: bad warp seed", lineno);
        }
        auto it_ref = by_id.find(ref);
        auto it_tgt = by_id.find(tgt);
        if (it_ref == by_id.end() || it_tgt == by_id.end())
            throw SchemaError("load_benchmark_csv: id not in annotations: " + ref + "/" + tgt);
        e.ref_landmarks = *it_ref->second;
        if (e.pair_type == PairType::Same) {
            const WarpField warp =
                make_tps_warp(tps_grid, tps_grid, tps_sigma, image_h, image_w, e.warp_seed);
            e.tgt_landmarks = warp_landmarks(e.ref_landmarks, warp);
            ++bench.n_same;
        } else {
            e.tgt_landmarks = *it_tgt->second;
            ++bench.n_diff;
        }
        bench.entries.push_back(std::move(e));
    }
    return bench;
}

LandmarkSet match_landmarks(const FeatureMap& ref_desc, const FeatureMap& tgt_desc,
                            const LandmarkSet& ref_landmarks, int image_h, int image_w) {
    if (ref_desc.c != tgt_desc.c) throw std::invalid_argument("match_landmarks: channel mismatch");

    // normalized target cells once; queries normalized per landmark
    Eigen::MatrixXd tgt = ConstMatMap(tgt_desc.data.data(), tgt_desc.cells(), tgt_desc.c).cast<double>();
    for (Eigen::Index i = 0; i < tgt.rows(); ++i) {
        const double n = tgt.row(i).norm();
        if (n > 1e-12) tgt.row(i) /= n;
    }

    LandmarkSet out;
    out.image_id = ref_landmarks.image_id;
    out.points.resize(ref_landmarks.points.size());
    out.visible = ref_landmarks.visible;
    for (size_t l = 0; l < ref_landmarks.points.size(); ++l) {
        if (!ref_landmarks.visible[l]) {
            out.points[l] = {0.0, 0.0};
            continue;
        }
        const std::vector<float> q =
            sample_descriptor(ref_desc, ref_landmarks.points[l], image_h, image_w, true);
        Eigen::VectorXd qv(ref_desc.c);
        for (int j = 0; j < ref_desc.c; ++j) qv(j) = q[j];
        const Eigen::VectorXd sims = tgt * qv;
        Eigen::Index best = 0;
        double best_val = sims(0);
        for (Eigen::Index i = 1; i < sims.size(); ++i)
            if (sims(i) > best_val) {
                best_val = sims(i);
                best = i;
            }
        const double gx = double(best % tgt_desc.w);
        const double gy = double(best / tgt_desc.w);
        out.points[l] = {tgt_desc.w > 1 ? gx * double(image_w - 1) / double(tgt_desc.w - 1) : 0.0,
                         tgt_desc.h > 1 ? gy * double(image_h - 1) / double(tgt_desc.h - 1) : 0.0};
    }
    return out;
}

double mean_pixel_error(const LandmarkSet& pred, const LandmarkSet& gt) {
    if (pred.count() != gt.count())
        throw std::invalid_argument("mean_pixel_error: landmark count mismatch");
    double sum = 0.0;
    int n = 0;
    for (int l = 0; l < gt.count(); ++l) {
        if (!gt.visible[l]) continue;
        sum += std::hypot(pred.points[l].x - gt.points[l].x, pred.points[l].y - gt.points[l].y);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("mean_pixel_error: no visible landmarks");
    return sum / n;
}

double compute_metrics(const std::vector<std::vector<Vec2>>& preds,
                       const std::vector<LandmarkSet>& gts, int image_h, int image_w,
                       const MetricConfig& config) {
    if (preds.size() != gts.size())
        throw std::invalid_argument("compute_metrics: prediction/gt count mismatch");
    double acc = 0.0;
    long n = 0;
    const double pck_thresh = config.pck_alpha * double(std::max(image_h, image_w));
    for (size_t i = 0; i < gts.size(); ++i) {
        const LandmarkSet& gt = gts[i];
        const std::vector<Vec2>& pred = preds[i];
        if (int(pred.size()) != gt.count())
            throw std::invalid_argument("compute_metrics: landmark count mismatch");
        double iod = 1.0;
        if (config.metric == Metric::InterOcular) {
            if (config.eye_left >= gt.count() || config.eye_right >= gt.count())
                throw std::invalid_argument("compute_metrics: eye index out of range");
            iod = std::hypot(gt.points[config.eye_left].x - gt.points[config.eye_right].x,
                             gt.points[config.eye_left].y - gt.points[config.eye_right].y);
            if (iod <= 1e-12)
                throw std::invalid_argument("compute_metrics: zero inter-ocular distance");
        }
        for (int l = 0; l < gt.count(); ++l) {
            if (!gt.visible[l]) continue;  // occluded landmarks are ignored
            const double err =
                std::hypot(pred[l].x - gt.points[l].x, pred[l].y - gt.points[l].y);
            if (config.metric == Metric::InterOcular)
                acc += err / iod * 100.0;
            else
                acc += err <= pck_thresh ? 100.0 : 0.0;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("compute_metrics: no visible landmarks");
    return acc / double(n);
}

MatchingResult run_matching_eval(const MatchBenchmark& bench, const ImageById& image_by_id,
                                 const DescriptorFn& descriptors) {
    MatchingResult res;
    for (const MatchEntry& e : bench.entries) {
        const Image ref_img = image_by_id(e.ref_id);
        Image tgt_img;
        if (e.pair_type == PairType::Same) {
            const WarpField warp = make_tps_warp(bench.tps_grid, bench.tps_grid, bench.tps_sigma,
                                                 bench.image_h, bench.image_w, e.warp_seed);
            tgt_img = apply_warp(ref_img, warp);
        } else {
            tgt_img = image_by_id(e.tgt_id);
        }
        const FeatureMap ref_desc = descriptors(ref_img);
        const FeatureMap tgt_desc = descriptors(tgt_img);
        const LandmarkSet pred =
            match_landmarks(ref_desc, tgt_desc, e.ref_landmarks, bench.image_h, bench.image_w);
        // score against landmarks visible in the target ground truth
        LandmarkSet gt = e.tgt_landmarks;
        const double err = mean_pixel_error(pred, gt);
        if (e.pair_type == PairType::Same) {
            res.same_error += err;
            ++res.same_pairs;
        } else {
            res.diff_error += err;
            ++res.diff_pairs;
        }
    }
    if (res.same_pairs) res.same_error /= res.same_pairs;
    if (res.diff_pairs) res.diff_error /= res.diff_pairs;
    return res;
}

}  // namespace lmk
