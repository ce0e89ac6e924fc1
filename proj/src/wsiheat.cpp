#include "selfpath/wsiheat.hpp"

#include "selfpath/evalkit.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

namespace selfpath::wsiheat {

using nlohmann::json;

PatchPredictor model_predictor(model::ModelGraph& m, int batch_size) {
    return [&m, batch_size](const std::vector<Image>& patches) {
        std::vector<double> probs;
        probs.reserve(patches.size());
        for (size_t off = 0; off < patches.size(); off += static_cast<size_t>(batch_size)) {
            const size_t end = std::min(patches.size(), off + static_cast<size_t>(batch_size));
            std::vector<const Image*> chunk;
            for (size_t i = off; i < end; ++i) chunk.push_back(&patches[i]);
            model::Tensor p = m.predict_proba(model::to_tensor(chunk));
            for (int i = 0; i < p.n; ++i) probs.push_back(p.v[static_cast<size_t>(i) * p.c + 1]);
        }
        return probs;
    };
}

HeatMap build_heatmap_image(const PatchPredictor& predict, const Image& pixels,
                            const std::string& slide_id, int patch_size, int stride) {
    if (patch_size <= 0 || stride <= 0 || patch_size % stride != 0)
        throw ConfigError("build_heatmap: patch size must be a positive multiple of stride");
    if (pixels.h < patch_size || pixels.w < patch_size)
        throw DataError("build_heatmap: slide smaller than one window");

    HeatMap map;
    map.slide_id = slide_id;
    map.patch_size = patch_size;
    map.stride = stride;
    map.gh = (pixels.h - patch_size) / stride + 1;
    map.gw = (pixels.w - patch_size) / stride + 1;

    std::vector<Image> windows;
    windows.reserve(static_cast<size_t>(map.gh) * map.gw);
    for (int i = 0; i < map.gh; ++i)
        for (int j = 0; j < map.gw; ++j)
            windows.push_back(crop(pixels, i * stride, j * stride, patch_size, patch_size));

    const std::vector<double> probs = predict(windows);
    if (probs.size() != windows.size())
        throw DataError("build_heatmap: predictor returned wrong count");

    // Cell (i,j) averages every window whose span covers anchor (stride*i, stride*j).
    const int k = patch_size / stride;
    map.values.assign(static_cast<size_t>(map.gh) * map.gw, 0.f);
    for (int i = 0; i < map.gh; ++i)
        for (int j = 0; j < map.gw; ++j) {
            double sum = 0.0;
            int cnt = 0;
            for (int di = std::max(0, i - k + 1); di <= i; ++di)
                for (int dj = std::max(0, j - k + 1); dj <= j; ++dj) {
                    sum += probs[static_cast<size_t>(di) * map.gw + dj];
                    ++cnt;
                }
            map.at(i, j) = static_cast<float>(sum / cnt);
        }
    return map;
}

HeatMap build_heatmap(const PatchPredictor& predict, const datagen::SyntheticSlide& slide,
                      int patch_size, int stride) {
    HeatMap map = build_heatmap_image(predict, slide.pixels, slide.id, patch_size, stride);
    map.magnification = datagen::Mag::x10;
    return map;
}

namespace {

// Convex hull area over the unit-square corners of a pixel set (shoelace).
double hull_area(const std::vector<std::pair<int, int>>& cells) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(cells.size() * 4);
    for (auto [y, x] : cells) {
        pts.push_back({static_cast<double>(x), static_cast<double>(y)});
        pts.push_back({static_cast<double>(x + 1), static_cast<double>(y)});
        pts.push_back({static_cast<double>(x), static_cast<double>(y + 1)});
        pts.push_back({static_cast<double>(x + 1), static_cast<double>(y + 1)});
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return 0.0;
    auto cross = [](const std::pair<double, double>& o, const std::pair<double, double>& a,
                    const std::pair<double, double>& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * pts.size());
    size_t h = 0;
    for (const auto& p : pts) {
        while (h >= 2 && cross(hull[h - 2], hull[h - 1], p) <= 0) --h;
        hull[h++] = p;
    }
    const size_t lower = h + 1;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        while (h >= lower && cross(hull[h - 2], hull[h - 1], *it) <= 0) --h;
        hull[h++] = *it;
    }
    hull.resize(h - 1);
    double area = 0.0;
    for (size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        area += a.first * b.second - b.first * a.second;
    }
    return 0.5 * std::abs(area);
}

}  // namespace

std::vector<RegionFeatures> region_features(const HeatMap& map, double threshold) {
    const int gh = map.gh, gw = map.gw;
    std::vector<uint8_t> mask(static_cast<size_t>(gh) * gw, 0);
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = map.values[i] >= static_cast<float>(threshold) ? 1 : 0;

    std::vector<int> comp(mask.size(), -1);
    std::vector<RegionFeatures> out;
    std::vector<std::vector<std::pair<int, int>>> cells_of;

    int next = 0;
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            const size_t i0 = static_cast<size_t>(y) * gw + x;
            if (!mask[i0] || comp[i0] >= 0) continue;
            // BFS flood fill, 8-connected
            std::queue<std::pair<int, int>> q;
            q.push({y, x});
            comp[i0] = next;
            std::vector<std::pair<int, int>> cells;
            while (!q.empty()) {
                auto [cy, cx] = q.front();
                q.pop();
                cells.push_back({cy, cx});
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || ny >= gh || nx < 0 || nx >= gw) continue;
                        const size_t ni = static_cast<size_t>(ny) * gw + nx;
                        if (mask[ni] && comp[ni] < 0) {
                            comp[ni] = next;
                            q.push({ny, nx});
                        }
                    }
            }
            cells_of.push_back(std::move(cells));
            ++next;
        }

    for (const auto& cells : cells_of) {
        RegionFeatures f;
        f.area = static_cast<double>(cells.size());

        int min_y = cells[0].first, max_y = cells[0].first;
        int min_x = cells[0].second, max_x = cells[0].second;
        double sum_y = 0.0, sum_x = 0.0, sum_p = 0.0, max_p = 0.0;
        int edges = 0;
        auto inside = [&](int y, int x) {
            return y >= 0 && y < gh && x >= 0 && x < gw &&
                   mask[static_cast<size_t>(y) * gw + x] != 0;
        };
        for (auto [y, x] : cells) {
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            sum_y += y;
            sum_x += x;
            const double p = map.at(y, x);
            sum_p += p;
            max_p = std::max(max_p, p);
            if (!inside(y - 1, x)) ++edges;
            if (!inside(y + 1, x)) ++edges;
            if (!inside(y, x - 1)) ++edges;
            if (!inside(y, x + 1)) ++edges;
        }
        // Neighbouring components in 4-connectivity belong to the same
        // 8-connected object, so the edge count is per-object consistent.
        f.perimeter = edges;
        f.mean_prob = sum_p / f.area;
        f.max_prob = max_p;
        f.extent = f.area / (static_cast<double>(max_y - min_y + 1) *
                             static_cast<double>(max_x - min_x + 1));
        f.equiv_diameter = std::sqrt(4.0 * f.area / 3.14159265358979323846);

        const double cy = sum_y / f.area, cx = sum_x / f.area;
        double cyy = 0.0, cxx = 0.0, cxy = 0.0;
        for (auto [y, x] : cells) {
            cyy += (y - cy) * (y - cy);
            cxx += (x - cx) * (x - cx);
            cxy += (y - cy) * (x - cx);
        }
        cyy /= f.area;
        cxx /= f.area;
        cxy /= f.area;
        const double tr = cxx + cyy;
        const double det = std::sqrt(std::max(0.0, (cxx - cyy) * (cxx - cyy) + 4.0 * cxy * cxy));
        const double l1 = 0.5 * (tr + det);
        const double l2 = std::max(0.0, 0.5 * (tr - det));
        f.major_axis = 4.0 * std::sqrt(std::max(0.0, l1));
        f.minor_axis = 4.0 * std::sqrt(l2);
        f.eccentricity = l1 > 0.0 ? std::sqrt(1.0 - l2 / l1) : 0.0;

        const double ha = hull_area(cells);
        f.solidity = ha > 0.0 ? f.area / ha : 1.0;
        out.push_back(f);
    }
    return out;
}

namespace {

const std::array<const char*, 10> kFeatureBase{
    "area",       "perimeter",  "eccentricity",   "solidity",  "extent",
    "major_axis", "minor_axis", "equiv_diameter", "mean_prob", "max_prob"};
const std::array<const char*, 4> kStats{"mean", "std", "min", "max"};

double feature_value(const RegionFeatures& f, int which) {
    switch (which) {
        case 0: return f.area;
        case 1: return f.perimeter;
        case 2: return f.eccentricity;
        case 3: return f.solidity;
        case 4: return f.extent;
        case 5: return f.major_axis;
        case 6: return f.minor_axis;
        case 7: return f.equiv_diameter;
        case 8: return f.mean_prob;
        default: return f.max_prob;
    }
}

}  // namespace

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (double t : kThresholds)
            for (const char* base : kFeatureBase)
                for (const char* stat : kStats) {
                    char buf[64];
                    std::snprintf(buf, sizeof(buf), "t%.2f_%s_%s", t, base, stat);
                    out.emplace_back(buf);
                }
        return out;
    }();
    return names;
}

std::vector<double> extract_features(const HeatMap& map) {
    if (map.values.empty()) throw DataError("extract_features: empty heat map");
    std::vector<double> out;
    out.reserve(kFeatureCount);
    for (double t : kThresholds) {
        const auto regions = region_features(map, t);
        for (int fi = 0; fi < 10; ++fi) {
            if (regions.empty()) {
                out.insert(out.end(), 4, 0.0);
                continue;
            }
            std::vector<double> vals;
            vals.reserve(regions.size());
            for (const auto& r : regions) vals.push_back(feature_value(r, fi));
            out.push_back(evalkit::mean(vals));
            out.push_back(evalkit::population_std(vals));
            out.push_back(*std::min_element(vals.begin(), vals.end()));
            out.push_back(*std::max_element(vals.begin(), vals.end()));
        }
    }
    return out;
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("average_precision: scores and labels must be non-empty and equal length");
    size_t total_pos = 0;
    for (int y : labels) total_pos += static_cast<size_t>(y);
    if (total_pos == 0) throw DataError("average_precision: no positive labels");

    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    // Step interpolation; tied scores are consumed as one block so the value
    // is independent of the input order.
    double ap = 0.0;
    size_t tp = 0, seen = 0, i = 0;
    double prev_recall = 0.0;
    while (i < order.size()) {
        size_t j = i;
        size_t block_tp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            block_tp += static_cast<size_t>(labels[order[j]]);
            ++j;
        }
        tp += block_tp;
        seen = j;
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

SlideScoreReport classify_slides(const std::vector<std::vector<double>>& train_features,
                                 const std::vector<int>& train_labels,
                                 const std::vector<std::vector<double>>& test_features,
                                 const std::vector<int>& test_labels,
                                 const forest::ForestConfig& cfg) {
    forest::RandomForest rf;
    rf.fit(train_features, train_labels, cfg);
    SlideScoreReport rep;
    rep.scores = rf.predict_proba(test_features);
    rep.auc = evalkit::auc_roc(rep.scores, test_labels);
    rep.average_precision = average_precision(rep.scores, test_labels);
    return rep;
}

void save_heatmap(const std::string& path_base, const HeatMap& map) {
    {
        std::ofstream f(path_base + ".f32", std::ios::binary);
        if (!f) throw DataError("heatmap: cannot open " + path_base + ".f32");
        f.write(reinterpret_cast<const char*>(map.values.data()),
                static_cast<std::streamsize>(map.values.size() * sizeof(float)));
    }
    json side;
    side["slide_id"] = map.slide_id;
    side["patch_size"] = map.patch_size;
    side["stride"] = map.stride;
    side["magnification"] = datagen::mag_name(map.magnification);
    side["grid_h"] = map.gh;
    side["grid_w"] = map.gw;
    std::ofstream f(path_base + ".json");
    if (!f) throw DataError("heatmap: cannot open " + path_base + ".json");
    f << side.dump(2) << "\n";
}

HeatMap load_heatmap(const std::string& path_base) {
    std::ifstream sf(path_base + ".json");
    if (!sf) throw DataError("heatmap: cannot open " + path_base + ".json");
    json side = json::parse(sf);
    HeatMap map;
    map.slide_id = side.at("slide_id").get<std::string>();
    map.patch_size = side.at("patch_size").get<int>();
    map.stride = side.at("stride").get<int>();
    map.magnification = datagen::mag_from_name(side.at("magnification").get<std::string>());
    map.gh = side.at("grid_h").get<int>();
    map.gw = side.at("grid_w").get<int>();
    map.values.resize(static_cast<size_t>(map.gh) * map.gw);
    std::ifstream f(path_base + ".f32", std::ios::binary);
    if (!f) throw DataError("heatmap: cannot open " + path_base + ".f32");
    f.read(reinterpret_cast<char*>(map.values.data()),
           static_cast<std::streamsize>(map.values.size() * sizeof(float)));
    if (!f) throw DataError("heatmap: truncated grid in " + path_base + ".f32");
    return map;
}

void save_feature_csv(const std::string& path, const std::vector<std::string>& slide_ids,
                      const std::vector<int>& labels,
                      const std::vector<std::vector<double>>& features) {
    if (slide_ids.size() != features.size() || slide_ids.size() != labels.size())
        throw DataError("feature csv: row count mismatch");
    std::ofstream f(path);
    if (!f) throw DataError("feature csv: cannot open " + path);
    f << "slide_id,label";
    for (const auto& n : feature_names()) f << "," << n;
    f << "\n";
    f.precision(17);
    for (size_t i = 0; i < features.size(); ++i) {
        if (static_cast<int>(features[i].size()) != kFeatureCount)
            throw DataError("feature csv: row width is not 120");
        f << slide_ids[i] << "," << labels[i];
        for (double v : features[i]) f << "," << v;
        f << "\n";
    }
}

Image render_overlay(const Image& slide_pixels, const HeatMap& map) {
    Image out = slide_pixels;
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            const int i = std::min(map.gh - 1, y / map.stride);
            const int j = std::min(map.gw - 1, x / map.stride);
            const float p = map.at(i, j);
            // red where hot, translucent elsewhere
            out.at(y, x, 0) = 0.55f * out.at(y, x, 0) + 0.45f * p;
            out.at(y, x, 1) = 0.55f * out.at(y, x, 1) + 0.45f * 0.1f * p;
            out.at(y, x, 2) = 0.55f * out.at(y, x, 2) + 0.45f * (1.f - p) * 0.3f;
        }
    clamp01(out);
    return out;
}

}  // namespace selfpath::wsiheat
