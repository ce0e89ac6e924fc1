#pragma once

#include "selfpath/datagen.hpp"
#include "selfpath/forest.hpp"
#include "selfpath/image.hpp"
#include "selfpath/model.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace selfpath::wsiheat {

// Probability grid over sliding windows (patch 128, stride 64 by default).
// Grid dims are floor((dim - patch)/stride) + 1 per axis. Cell (i, j) is the
// mean prediction of every window covering the cell's anchor pixel
// (stride*i, stride*j), so 50%-overlap neighbours average together.
struct HeatMap {
    std::string slide_id;
    int patch_size = 128;
    int stride = 64;
    datagen::Mag magnification = datagen::Mag::x10;
    int gh = 0, gw = 0;
    std::vector<float> values;

    float at(int i, int j) const { return values[static_cast<size_t>(i) * gw + j]; }
    float& at(int i, int j) { return values[static_cast<size_t>(i) * gw + j]; }
};

// Tumor probability per patch, in input order.
using PatchPredictor = std::function<std::vector<double>(const std::vector<Image>&)>;

// Wraps the main classifier head: probability of class 1.
PatchPredictor model_predictor(model::ModelGraph& m, int batch_size);

HeatMap build_heatmap(const PatchPredictor& predict, const datagen::SyntheticSlide& slide,
                      int patch_size = 128, int stride = 64);
// Same sliding-window pass over a bare image (no slide metadata needed).
HeatMap build_heatmap_image(const PatchPredictor& predict, const Image& pixels,
                            const std::string& slide_id, int patch_size = 128, int stride = 64);

constexpr std::array<double, 3> kThresholds{0.25, 0.5, 0.9};

// Per-object morphology on the grid binarized at `threshold` (cell >= t),
// 8-connected components.
struct RegionFeatures {
    double area = 0.0;             // cell count
    double perimeter = 0.0;        // boundary unit edges
    double eccentricity = 0.0;
    double solidity = 0.0;         // area / convex hull area
    double extent = 0.0;           // area / bounding box area
    double major_axis = 0.0;
    double minor_axis = 0.0;
    double equiv_diameter = 0.0;
    double mean_prob = 0.0;
    double max_prob = 0.0;
};
std::vector<RegionFeatures> region_features(const HeatMap& map, double threshold);

// 120 features: thresholds {0.25, 0.5, 0.9} x 10 object features x
// {mean, std, min, max}, in that nesting order. Thresholds with no objects
// contribute zeros.
constexpr int kFeatureCount = 120;
const std::vector<std::string>& feature_names();
std::vector<double> extract_features(const HeatMap& map);

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

struct SlideScoreReport {
    std::vector<double> scores;  // per test slide
    double auc = 0.0;
    double average_precision = 0.0;
};

// Random-forest slide classifier. Train/test slide sets must be disjoint and
// training labels must contain both classes.
SlideScoreReport classify_slides(const std::vector<std::vector<double>>& train_features,
                                 const std::vector<int>& train_labels,
                                 const std::vector<std::vector<double>>& test_features,
                                 const std::vector<int>& test_labels,
                                 const forest::ForestConfig& cfg = {});

// .f32 raw grid + .json sidecar (stride, patch size, slide id, magnification).
void save_heatmap(const std::string& path_base, const HeatMap& map);
HeatMap load_heatmap(const std::string& path_base);

void save_feature_csv(const std::string& path, const std::vector<std::string>& slide_ids,
                      const std::vector<int>& labels,
                      const std::vector<std::vector<double>>& features);

// Heat-on-slide overlay for eyeballing runs.
Image render_overlay(const Image& slide_pixels, const HeatMap& map);

}  // namespace selfpath::wsiheat
