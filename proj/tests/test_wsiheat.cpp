#include <doctest.h>

#include "selfpath/common.hpp"
#include "selfpath/wsiheat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

using namespace selfpath;
using namespace selfpath::wsiheat;

namespace {

datagen::SyntheticSlide flat_slide(int dim, uint64_t seed = 1) {
    datagen::SlideParams p;
    p.width = dim;
    p.height = dim;
    p.nuclei_density = 0.002;
    return datagen::generate_slide(p, seed);
}

HeatMap grid_map(int gh, int gw, std::vector<float> values) {
    HeatMap m;
    m.gh = gh;
    m.gw = gw;
    m.values = std::move(values);
    return m;
}

}  // namespace

TEST_CASE("heat map construction") {
    SUBCASE("constant predictor gives a uniform map") {
        const auto slide = flat_slide(256);
        const PatchPredictor p = [](const std::vector<Image>& xs) {
            return std::vector<double>(xs.size(), 0.7);
        };
        const HeatMap map = build_heatmap(p, slide, 128, 64);
        CHECK(map.gh == 3);
        CHECK(map.gw == 3);
        for (float v : map.values) CHECK(v == doctest::Approx(0.7f));
    }
    SUBCASE("a 128x128 slide yields a single window") {
        const auto slide = flat_slide(128);
        const PatchPredictor p = [](const std::vector<Image>& xs) {
            return std::vector<double>(xs.size(), 0.3);
        };
        const HeatMap map = build_heatmap(p, slide, 128, 64);
        CHECK(map.gh == 1);
        CHECK(map.gw == 1);
    }
    SUBCASE("cells average all covering windows (independent formula)") {
        const auto slide = flat_slide(256);
        // distinct probability per window, keyed by visit order
        std::vector<double> probs{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        size_t cursor = 0;
        const PatchPredictor p = [&](const std::vector<Image>& xs) {
            std::vector<double> out;
            for (size_t i = 0; i < xs.size(); ++i) out.push_back(probs[cursor++]);
            return out;
        };
        const HeatMap map = build_heatmap(p, slide, 128, 64);
        // window grid is 3x3 row-major; cell (i,j) averages windows
        // (i', j') with i' in {i-1, i}, j' in {j-1, j} clipped to the grid
        auto expect = [&](int i, int j) {
            double s = 0.0;
            int c = 0;
            for (int di = std::max(0, i - 1); di <= i && di < 3; ++di)
                for (int dj = std::max(0, j - 1); dj <= j && dj < 3; ++dj) {
                    s += probs[static_cast<size_t>(di) * 3 + dj];
                    ++c;
                }
            return s / c;
        };
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(map.at(i, j) == doctest::Approx(expect(i, j)).epsilon(1e-6));
    }
    SUBCASE("slide smaller than a window is a boundary error") {
        const auto slide = flat_slide(96);
        const PatchPredictor p = [](const std::vector<Image>& xs) {
            return std::vector<double>(xs.size(), 0.5);
        };
        CHECK_THROWS_AS(build_heatmap(p, slide, 128, 64), DataError);
    }
}

TEST_CASE("binarization uses >= t, boundary included") {
    const HeatMap map = grid_map(1, 3, {0.49f, 0.5f, 0.51f});
    const auto regions = region_features(map, 0.5);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].area == doctest::Approx(2.0));  // cells at 0.5 and 0.51
}

TEST_CASE("monotone scaling toward 1 never shrinks objects") {
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        HeatMap map = grid_map(8, 8, std::vector<float>(64));
        for (float& v : map.values) v = static_cast<float>(rng.uniform());
        HeatMap scaled = map;
        for (float& v : scaled.values) v = v + 0.3f * (1.f - v);
        for (double t : kThresholds) {
            double area_before = 0.0, area_after = 0.0;
            for (const auto& r : region_features(map, t)) area_before += r.area;
            for (const auto& r : region_features(scaled, t)) area_after += r.area;
            CHECK(area_after >= area_before);
        }
    }
}

TEST_CASE("region features") {
    SUBCASE("single 3x3 square") {
        std::vector<float> v(36, 0.f);
        for (int y = 2; y < 5; ++y)
            for (int x = 1; x < 4; ++x) v[static_cast<size_t>(y) * 6 + x] = 0.8f;
        const HeatMap map = grid_map(6, 6, v);
        const auto regions = region_features(map, 0.5);
        REQUIRE(regions.size() == 1);
        const auto& r = regions[0];
        CHECK(r.area == doctest::Approx(9.0));
        CHECK(r.perimeter == doctest::Approx(12.0));
        CHECK(r.extent == doctest::Approx(1.0));
        CHECK(r.solidity == doctest::Approx(1.0));
        CHECK(r.eccentricity == doctest::Approx(0.0));
        CHECK(r.major_axis == doctest::Approx(r.minor_axis));
        CHECK(r.equiv_diameter == doctest::Approx(std::sqrt(36.0 / 3.14159265358979)).epsilon(1e-9));
        CHECK(r.mean_prob == doctest::Approx(0.8));
        CHECK(r.max_prob == doctest::Approx(0.8));
    }
    SUBCASE("two rectangles: hand-computed area statistics") {
        std::vector<float> v(static_cast<size_t>(12) * 12, 0.f);
        // 2x3 rectangle
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x) v[static_cast<size_t>(y) * 12 + x] = 1.f;
        // 4x5 rectangle, separated
        for (int y = 6; y < 10; ++y)
            for (int x = 6; x < 11; ++x) v[static_cast<size_t>(y) * 12 + x] = 1.f;
        const HeatMap map = grid_map(12, 12, v);
        const auto regions = region_features(map, 0.5);
        REQUIRE(regions.size() == 2);
        std::vector<double> areas{regions[0].area, regions[1].area};
        std::sort(areas.begin(), areas.end());
        CHECK(areas[0] == doctest::Approx(6.0));
        CHECK(areas[1] == doctest::Approx(20.0));
        std::vector<double> perims{regions[0].perimeter, regions[1].perimeter};
        std::sort(perims.begin(), perims.end());
        CHECK(perims[0] == doctest::Approx(10.0));  // 2*(2+3)
        CHECK(perims[1] == doctest::Approx(18.0));  // 2*(4+5)

        const auto feats = extract_features(map);
        // area block at threshold 0.5 (second threshold): offset 40
        CHECK(feats[40] == doctest::Approx(13.0));   // mean
        CHECK(feats[41] == doctest::Approx(7.0));    // population std
        CHECK(feats[42] == doctest::Approx(6.0));    // min
        CHECK(feats[43] == doctest::Approx(20.0));   // max
    }
    SUBCASE("L-shape is not convex: solidity < 1") {
        std::vector<float> v(25, 0.f);
        for (int y = 0; y < 4; ++y) v[static_cast<size_t>(y) * 5] = 1.f;
        for (int x = 0; x < 4; ++x) v[static_cast<size_t>(3) * 5 + x] = 1.f;
        const HeatMap map = grid_map(5, 5, v);
        const auto regions = region_features(map, 0.5);
        REQUIRE(regions.size() == 1);
        CHECK(regions[0].solidity < 1.0);
        CHECK(regions[0].solidity > 0.0);
    }
    SUBCASE("diagonal cells form one 8-connected object") {
        std::vector<float> v(9, 0.f);
        v[0] = 1.f;
        v[4] = 1.f;
        v[8] = 1.f;
        const HeatMap map = grid_map(3, 3, v);
        CHECK(region_features(map, 0.5).size() == 1);
    }
}

TEST_CASE("feature vector contract") {
    SUBCASE("all-zero map gives 120 zeros") {
        const HeatMap map = grid_map(4, 4, std::vector<float>(16, 0.f));
        const auto f = extract_features(map);
        REQUIRE(f.size() == static_cast<size_t>(kFeatureCount));
        for (double v : f) CHECK(v == 0.0);
    }
    SUBCASE("single object: min = max = mean, std = 0 for every feature") {
        std::vector<float> v(64, 0.f);
        for (int y = 2; y < 5; ++y)
            for (int x = 2; x < 6; ++x) v[static_cast<size_t>(y) * 8 + x] = 1.f;
        const auto f = extract_features(grid_map(8, 8, v));
        for (int t = 0; t < 3; ++t)
            for (int fi = 0; fi < 10; ++fi) {
                const size_t base = static_cast<size_t>(t) * 40 + static_cast<size_t>(fi) * 4;
                CHECK(f[base + 1] == doctest::Approx(0.0));      // std
                CHECK(f[base + 0] == doctest::Approx(f[base + 2]));  // mean == min
                CHECK(f[base + 0] == doctest::Approx(f[base + 3]));  // mean == max
            }
    }
    SUBCASE("length is 120 for arbitrary inputs") {
        Rng rng(67);
        for (int trial = 0; trial < 20; ++trial) {
            const int gh = 1 + static_cast<int>(rng.uniform_index(12));
            const int gw = 1 + static_cast<int>(rng.uniform_index(12));
            std::vector<float> v(static_cast<size_t>(gh) * gw);
            for (float& x : v) x = static_cast<float>(rng.uniform());
            CHECK(extract_features(grid_map(gh, gw, v)).size() == 120);
        }
    }
    SUBCASE("feature names are documented and stable") {
        const auto& names = feature_names();
        REQUIRE(names.size() == 120);
        CHECK(names[0] == "t0.25_area_mean");
        CHECK(names[43] == "t0.50_area_max");
        CHECK(names[119] == "t0.90_max_prob_max");
    }
}

TEST_CASE("average precision") {
    SUBCASE("perfect ranking gives 1") {
        CHECK(average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    }
    SUBCASE("hand-computed case") {
        // ranking: pos, neg, pos -> AP = 0.5*1 + 0.5*(2/3)
        CHECK(average_precision({0.9, 0.5, 0.4}, {1, 0, 1}) ==
              doctest::Approx(0.5 + 0.5 * (2.0 / 3.0)));
    }
    SUBCASE("order independence under ties") {
        const double a = average_precision({0.5, 0.5, 0.1}, {1, 0, 0});
        const double b = average_precision({0.5, 0.5, 0.1}, {0, 1, 0});
        CHECK(a == doctest::Approx(b));
    }
    SUBCASE("no positives is an error") {
        CHECK_THROWS_AS(average_precision({0.5}, {0}), DataError);
    }
}

TEST_CASE("slide classifier") {
    SUBCASE("separable toy set reaches auc 1.0") {
        std::vector<std::vector<double>> train, test;
        std::vector<int> train_y, test_y;
        Rng rng(71);
        for (int i = 0; i < 30; ++i) {
            const int y = i % 2;
            std::vector<double> f(static_cast<size_t>(kFeatureCount), 0.0);
            f[0] = y == 1 ? 5.0 + rng.uniform() : 1.0 + rng.uniform();
            f[40] = y == 1 ? 2.0 : 0.5;
            train.push_back(f);
            train_y.push_back(y);
        }
        // duplicate a few training vectors into the test set with their labels
        for (int i = 0; i < 10; ++i) {
            test.push_back(train[static_cast<size_t>(i)]);
            test_y.push_back(train_y[static_cast<size_t>(i)]);
        }
        forest::ForestConfig fc;
        fc.n_trees = 50;
        fc.seed = 3;
        const auto rep = classify_slides(train, train_y, test, test_y, fc);
        CHECK(rep.auc == doctest::Approx(1.0));
        CHECK(rep.average_precision == doctest::Approx(1.0));
    }
    SUBCASE("permuted labels hover at chance") {
        Rng rng(73);
        const int n = 60;
        std::vector<std::vector<double>> feats;
        for (int i = 0; i < n; ++i) {
            std::vector<double> f(8);
            for (double& v : f) v = rng.uniform();
            feats.push_back(f);
        }
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % 2;

        double auc_sum = 0.0;
        for (int perm = 0; perm < 10; ++perm) {
            std::vector<int> shuffled = labels;
            rng.shuffle(shuffled);
            std::vector<std::vector<double>> train(feats.begin(), feats.begin() + 40);
            std::vector<int> train_y(shuffled.begin(), shuffled.begin() + 40);
            std::vector<std::vector<double>> test(feats.begin() + 40, feats.end());
            std::vector<int> test_y(shuffled.begin() + 40, shuffled.end());
            bool ok0 = false, ok1 = false;
            for (int y : test_y) (y ? ok1 : ok0) = true;
            if (!ok0) test_y[0] = 0;
            if (!ok1) test_y[1] = 1;
            forest::ForestConfig fc;
            fc.n_trees = 40;
            fc.seed = static_cast<uint64_t>(perm);
            auc_sum += classify_slides(train, train_y, test, test_y, fc).auc;
        }
        const double mean_auc = auc_sum / 10.0;
        CHECK(mean_auc > 0.4);
        CHECK(mean_auc < 0.6);
    }
    SUBCASE("single-class training set is a configuration error") {
        std::vector<std::vector<double>> train{{1.0}, {2.0}};
        CHECK_THROWS_AS(classify_slides(train, {1, 1}, train, {1, 0}, {}), ConfigError);
    }
}

TEST_CASE("heatmap io round trip") {
    HeatMap map = grid_map(3, 4, {0.f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f, 1.f, 0.25f});
    map.slide_id = "sX";
    map.patch_size = 128;
    map.stride = 64;
    const std::string base = "/tmp/selfpath_heat_test";
    save_heatmap(base, map);
    const HeatMap m2 = load_heatmap(base);
    CHECK(m2.slide_id == "sX");
    CHECK(m2.gh == 3);
    CHECK(m2.gw == 4);
    CHECK(m2.patch_size == 128);
    CHECK(m2.stride == 64);
    CHECK(m2.values == map.values);
    std::remove((base + ".f32").c_str());
    std::remove((base + ".json").c_str());
}

TEST_CASE("feature csv layout") {
    const std::string path = "/tmp/selfpath_features_test.csv";
    std::vector<std::vector<double>> feats{std::vector<double>(120, 0.5)};
    save_feature_csv(path, {"s0"}, {1}, feats);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    size_t cols = 1;
    for (char c : header) cols += c == ',';
    CHECK(cols == 122);  // slide_id, label, 120 features
    CHECK(header.rfind("slide_id,label,t0.25_area_mean", 0) == 0);
    std::remove(path.c_str());
}

TEST_CASE("overlay renderer keeps slide dimensions") {
    const auto slide = flat_slide(192);
    const PatchPredictor p = [](const std::vector<Image>& xs) {
        return std::vector<double>(xs.size(), 0.9);
    };
    const HeatMap map = build_heatmap(p, slide, 128, 64);
    const Image overlay = render_overlay(slide.pixels, map);
    CHECK(overlay.h == 192);
    CHECK(overlay.w == 192);
    CHECK(overlay.c == 3);
    for (float v : overlay.px) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
}
