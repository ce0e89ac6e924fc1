#include <doctest.h>

#include "selfpath/common.hpp"
#include "selfpath/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

using namespace selfpath;
using namespace selfpath::datagen;

namespace {

// Independent bilinear lookup (half-pixel centers, clamped edges).
float bilinear_oracle(const Image& src, double oy, double ox, int c) {
    int y0 = static_cast<int>(std::floor(oy));
    int x0 = static_cast<int>(std::floor(ox));
    const double fy = oy - y0, fx = ox - x0;
    const auto cl = [](int v, int hi) { return std::clamp(v, 0, hi); };
    const int y1 = cl(y0 + 1, src.h - 1), x1 = cl(x0 + 1, src.w - 1);
    y0 = cl(y0, src.h - 1);
    x0 = cl(x0, src.w - 1);
    const double v00 = src.at(y0, x0, c), v01 = src.at(y0, x1, c);
    const double v10 = src.at(y1, x0, c), v11 = src.at(y1, x1, c);
    return static_cast<float>((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                              (v10 * (1 - fx) + v11 * fx) * fy);
}

}  // namespace

TEST_CASE("generate_slide determinism and parameter errors") {
    SlideParams p;
    p.width = 160;
    p.height = 140;
    const auto a = generate_slide(p, 7);
    const auto b = generate_slide(p, 7);
    CHECK(a.pixels.px == b.pixels.px);
    CHECK(a.nuclei.size() == b.nuclei.size());
    CHECK(a.class_field == b.class_field);

    const auto c = generate_slide(p, 8);
    CHECK(a.pixels.px != c.pixels.px);

    SlideParams bad = p;
    bad.width = 0;
    CHECK_THROWS_AS(generate_slide(bad, 1), ConfigError);
    bad = p;
    bad.nuclei_density = -0.1;
    CHECK_THROWS_AS(generate_slide(bad, 1), ConfigError);
}

TEST_CASE("zero nuclei density gives background only") {
    SlideParams p;
    p.width = 96;
    p.height = 96;
    p.nuclei_density = 0.0;
    p.texture_od = 0.0;
    const auto slide = generate_slide(p, 3);
    CHECK(slide.nuclei.empty());
    for (int c = 0; c < 3; ++c) {
        const float v0 = slide.pixels.at(0, 0, c);
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 96; ++x) CHECK(slide.pixels.at(y, x, c) == v0);
    }
}

TEST_CASE("tumor regions carry twice the nucleus density") {
    SlideParams p;
    p.width = 384;
    p.height = 384;
    p.tumor_density_factor = 2.0;
    p.tumor_fraction = 0.45;
    const auto slide = generate_slide(p, 21);

    std::array<size_t, 2> area{0, 0}, count{0, 0};
    for (uint8_t c : slide.class_field) ++area[c];
    for (const auto& n : slide.nuclei) ++count[static_cast<size_t>(n.region)];
    REQUIRE(area[0] > 0);
    REQUIRE(area[1] > 0);
    const double d0 = static_cast<double>(count[0]) / static_cast<double>(area[0]);
    const double d1 = static_cast<double>(count[1]) / static_cast<double>(area[1]);
    CHECK(d1 / d0 == doctest::Approx(2.0).epsilon(0.10));
}

TEST_CASE("pyramid sampling") {
    SlideParams p;
    p.width = 640;
    p.height = 640;
    const auto slide = generate_slide(p, 5);
    const int cx = 320, cy = 300, size = 128;

    SUBCASE("native level is a pixel-exact crop") {
        const auto s = sample_at(slide, cx, cy, size, Mag::x10);
        const Image direct = crop(slide.pixels, cy - 64, cx - 64, 128, 128);
        CHECK(s.image.px == direct.px);
        CHECK(s.magnification == Mag::x10);
        CHECK(s.x == cx);
        CHECK(s.y == cy);
    }
    SUBCASE("5x is the resized 256-crop") {
        const auto s = sample_at(slide, cx, cy, size, Mag::x5);
        const Image region = crop(slide.pixels, cy - 128, cx - 128, 256, 256);
        const Image expect = resize_bilinear(region, 128, 128);
        CHECK(s.image.px == expect.px);
    }
    SUBCASE("40x from a 10x base matches the direct bilinear oracle") {
        const auto s = sample_at(slide, cx, cy, size, Mag::x40);
        const Image region = crop(slide.pixels, cy - 16, cx - 16, 32, 32);
        // corners plus a few interior points
        for (int y : {0, 1, 63, 64, 126, 127})
            for (int x : {0, 1, 63, 64, 126, 127})
                for (int c = 0; c < 3; ++c) {
                    const double sy = (y + 0.5) * 32.0 / 128.0 - 0.5;
                    const double sx = (x + 0.5) * 32.0 / 128.0 - 0.5;
                    CHECK(s.image.at(y, x, c) ==
                          doctest::Approx(bilinear_oracle(region, sy, sx, c)).epsilon(1e-6));
                }
    }
    SUBCASE("all levels share the center and patch size") {
        const auto pyramid = sample_pyramid(slide, cx, cy, size,
                                            {Mag::x40, Mag::x20, Mag::x10, Mag::x5});
        REQUIRE(pyramid.size() == 4);
        for (const auto& s : pyramid) {
            CHECK(s.image.h == size);
            CHECK(s.image.w == size);
            CHECK(s.x == cx);
            CHECK(s.y == cy);
        }
    }
    SUBCASE("boundary windows are rejected, no padding") {
        CHECK_THROWS_AS(sample_at(slide, 10, 320, size, Mag::x10), DataError);
        CHECK_THROWS_AS(sample_at(slide, 320, 639, size, Mag::x5), DataError);
        CHECK_THROWS_AS(sample_at(slide, -1, 320, size, Mag::x10), DataError);
        CHECK_THROWS_AS(sample_at(slide, 320, 700, size, Mag::x10), DataError);
        // 5x needs a 256-wide window: center 120 reaches to -8
        CHECK_THROWS_AS(sample_at(slide, 120, 320, size, Mag::x5), DataError);
    }
}

TEST_CASE("pyramid consistency across adjacent levels") {
    SlideParams p;
    p.width = 640;
    p.height = 640;
    const auto slide = generate_slide(p, 6);
    const int cx = 320, cy = 320, size = 128;

    auto center_crop = [](const Image& img, int side) {
        return crop(img, (img.h - side) / 2, (img.w - side) / 2, side, side);
    };
    auto max_diff = [](const Image& a, const Image& b) {
        double m = 0.0;
        for (size_t i = 0; i < a.px.size(); ++i)
            m = std::max(m, std::abs(static_cast<double>(a.px[i]) - b.px[i]));
        return m;
    };

    // Upsampled chain (40x -> 20x): downscaling commutes exactly away from
    // the window border (the 40x sample clamp-extends its 32-px field of
    // view there while the 20x sample sees real neighbouring content).
    const Image s40 = sample_at(slide, cx, cy, size, Mag::x40).image;
    const Image s20 = sample_at(slide, cx, cy, size, Mag::x20).image;
    {
        const Image a = resize_bilinear(s40, 64, 64);
        const Image b = center_crop(s20, 64);
        const Image ai = crop(a, 1, 1, 62, 62);
        const Image bi = crop(b, 1, 1, 62, 62);
        CHECK(max_diff(ai, bi) < 1e-5);
        CHECK(max_diff(a, b) < 0.2);  // border rows carry the FOV clamp effect
    }

    // Downsampled chain (10x -> 5x): both sides reduce the same native crop.
    const Image s10 = sample_at(slide, cx, cy, size, Mag::x10).image;
    const Image s5 = sample_at(slide, cx, cy, size, Mag::x5).image;
    CHECK(max_diff(resize_bilinear(s10, 64, 64), center_crop(s5, 64)) < 1e-5);

    // Across the native resolution (20x -> 10x) a resample of a resample
    // cannot reproduce native pixels exactly; the residual is the bilinear
    // up-then-down blur kernel [1 6 1]/8, so only a loose bound holds there.
    auto mean_diff = [](const Image& a, const Image& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.px.size(); ++i)
            s += std::abs(static_cast<double>(a.px[i]) - b.px[i]);
        return s / static_cast<double>(a.px.size());
    };
    const Image down20 = resize_bilinear(s20, 64, 64);
    const Image native = center_crop(s10, 64);
    CHECK(max_diff(down20, native) < 0.1);
    CHECK(mean_diff(down20, native) < 0.01);
}

TEST_CASE("manifest budgets") {
    SlideParams p;
    p.width = 300;
    p.height = 300;
    std::vector<SyntheticSlide> slides;
    for (int i = 0; i < 4; ++i)
        slides.push_back(generate_slide(p, static_cast<uint64_t>(i), "s" + std::to_string(i)));

    SUBCASE("budget 1.0 labels everything") {
        const auto m = build_manifest(slides, 50, 1.0, 9, 64, {1.0, 0.0, 0.0});
        CHECK(m.labeled_train_indices().size() == 200);
        CHECK(m.unlabeled_train_indices().empty());
    }
    SUBCASE("budget 0.0 labels nothing") {
        const auto m = build_manifest(slides, 50, 0.0, 9, 64, {1.0, 0.0, 0.0});
        CHECK(m.labeled_train_indices().empty());
        CHECK(m.unlabeled_train_indices().size() == 200);
    }
    SUBCASE("N=1000 at budget 0.01 labels exactly 10") {
        std::vector<SyntheticSlide> many;
        for (int i = 0; i < 5; ++i)
            many.push_back(generate_slide(p, static_cast<uint64_t>(100 + i), "m" + std::to_string(i)));
        const auto m = build_manifest(many, 200, 0.01, 9, 64, {1.0, 0.0, 0.0});
        CHECK(m.entries.size() == 1000);
        CHECK(m.labeled_train_indices().size() == 10);
    }
    SUBCASE("splits partition the entries") {
        const auto m = build_manifest(slides, 50, 0.5, 9, 64, {0.6, 0.2, 0.2});
        const auto tr = m.split_indices("train"), va = m.split_indices("val"), te = m.split_indices("test");
        CHECK(tr.size() + va.size() + te.size() == m.entries.size());
        CHECK(tr.size() == 120);
        CHECK(va.size() == 40);
        // budget applies to train only; val/test keep labels
        for (size_t i : va) CHECK(m.entries[i].label >= 0);
        for (size_t i : te) CHECK(m.entries[i].label >= 0);
    }
    SUBCASE("apply_budget is exact and seeded") {
        const auto full = build_manifest(slides, 50, 1.0, 9, 64, {1.0, 0.0, 0.0});
        const auto cut = apply_budget(full, 0.13, 42);
        CHECK(cut.labeled_train_indices().size() ==
              static_cast<size_t>(std::ceil(0.13 * 200.0)));
        const auto cut2 = apply_budget(full, 0.13, 42);
        for (size_t i = 0; i < cut.entries.size(); ++i)
            CHECK(cut.entries[i].label == cut2.entries[i].label);
        // budget 1.0 is the identity
        const auto same = apply_budget(full, 1.0, 7);
        for (size_t i = 0; i < full.entries.size(); ++i)
            CHECK(same.entries[i].label == full.entries[i].label);
    }
    SUBCASE("slide granularity keeps whole slides") {
        const auto full = build_manifest(slides, 50, 1.0, 9, 64, {1.0, 0.0, 0.0});
        const auto cut = apply_budget(full, 0.25, 11, BudgetGranularity::Slide);
        std::set<std::string> labeled_slides;
        for (size_t i : cut.labeled_train_indices())
            labeled_slides.insert(cut.entries[i].slide_id);
        CHECK(labeled_slides.size() == 1);  // ceil(0.25 * 4)
        CHECK(cut.labeled_train_indices().size() == 50);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(build_manifest({}, 10, 0.5, 1, 64), ConfigError);
        CHECK_THROWS_AS(build_manifest(slides, 10, 1.5, 1, 64), ConfigError);
        CHECK_THROWS_AS(build_manifest(slides, 10, 0.5, 1, 512), DataError);  // margin too big
    }
}

TEST_CASE("manifest file round trip") {
    SlideParams p;
    p.width = 300;
    p.height = 300;
    std::vector<SyntheticSlide> slides{generate_slide(p, 1, "sA")};
    auto m = build_manifest(slides, 20, 0.5, 9, 64, {0.6, 0.2, 0.2});
    for (auto& e : m.entries) e.domain = "dom0";

    const std::string path = "/tmp/selfpath_manifest_test.txt";
    m.save(path);
    const auto m2 = Manifest::load(path);
    REQUIRE(m2.entries.size() == m.entries.size());
    CHECK(m2.num_classes == m.num_classes);
    CHECK(m2.patch_size == m.patch_size);
    for (size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(m2.entries[i].slide_id == m.entries[i].slide_id);
        CHECK(m2.entries[i].x == m.entries[i].x);
        CHECK(m2.entries[i].y == m.entries[i].y);
        CHECK(m2.entries[i].magnification == m.entries[i].magnification);
        CHECK(m2.entries[i].label == m.entries[i].label);
        CHECK(m2.entries[i].domain == m.entries[i].domain);
        CHECK(m2.entries[i].split == m.entries[i].split);
    }
    std::remove(path.c_str());
}

TEST_CASE("dataset wiring") {
    DataParams dp;
    dp.n_slides = 2;
    dp.patches_per_slide = 30;
    dp.patch_size = 32;
    dp.label_budget = 0.5;
    dp.seed = 17;
    dp.domain = "domA";
    dp.slide.width = 200;
    dp.slide.height = 200;
    const Dataset d = build_dataset(dp);
    CHECK(d.slides.size() == 2);
    CHECK(d.manifest.entries.size() == 60);
    for (const auto& e : d.manifest.entries) {
        CHECK(e.domain == "domA");
        const Image patch = d.patch(e);
        CHECK(patch.h == 32);
        CHECK(patch.w == 32);
    }
    // determinism across rebuilds
    const Dataset d2 = build_dataset(dp);
    CHECK(d2.slides[0].pixels.px == d.slides[0].pixels.px);
    for (size_t i = 0; i < d.manifest.entries.size(); ++i) {
        CHECK(d2.manifest.entries[i].x == d.manifest.entries[i].x);
        CHECK(d2.manifest.entries[i].label == d.manifest.entries[i].label);
        CHECK(d2.manifest.entries[i].split == d.manifest.entries[i].split);
    }
}
