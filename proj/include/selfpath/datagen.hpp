#pragma once

#include "selfpath/common.hpp"
#include "selfpath/image.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace selfpath::datagen {

// Objective magnification levels. Pretext label order is fixed:
// 40x -> 0, 20x -> 1, 10x -> 2, 5x -> 3.
enum class Mag : int { x40 = 0, x20 = 1, x10 = 2, x5 = 3 };

double mag_value(Mag m);
std::string mag_name(Mag m);
Mag mag_from_name(const std::string& name);
constexpr std::array<Mag, 4> kAllMags{Mag::x40, Mag::x20, Mag::x10, Mag::x5};

struct Nucleus {
    float cx = 0.f;
    float cy = 0.f;
    float radius = 0.f;
    float od = 0.f;  // hematoxylin optical density at the blob center
    int region = 0;
};

// All parameters live at the base magnification. Colors are composed in
// optical-density space (nuclei along the hematoxylin vector, background and
// texture along eosin) so stain deconvolution separates them.
struct SlideParams {
    int width = 512;
    int height = 512;
    double base_magnification = 10.0;
    int num_classes = 2;
    double nuclei_density = 0.004;      // nuclei per pixel in normal regions
    double tumor_density_factor = 2.0;  // density multiplier in class-1 regions
    double nucleus_radius = 3.0;
    double nucleus_radius_jitter = 0.35;
    double nucleus_od = 0.55;
    double nucleus_od_jitter = 0.25;
    double tumor_od_boost = 1.2;  // class-1 nuclei are darker
    double background_od = 0.30;
    double texture_od = 0.05;
    double tumor_fraction = 0.4;  // areal fraction of class 1 (binary slides)
    // Domain-shift knobs.
    double eosin_scale = 1.0;
    double hematoxylin_scale = 1.0;
    std::array<double, 3> tint_od{0.0, 0.0, 0.0};
};

struct SyntheticSlide {
    std::string id;
    uint64_t seed = 0;
    SlideParams params;
    Image pixels;                     // h x w x 3 at base magnification
    std::vector<uint8_t> class_field; // per-pixel region id, h*w
    std::vector<Nucleus> nuclei;      // placement log (test oracle)

    int class_at(int y, int x) const {
        return class_field[static_cast<size_t>(y) * params.width + x];
    }
};

// Deterministic: identical (params, seed) give bit-identical slides.
SyntheticSlide generate_slide(const SlideParams& params, uint64_t seed,
                              const std::string& id = "");

struct Sample {
    Image image;
    int label = -1;  // -1 = unlabeled
    std::string domain;
    Mag magnification = Mag::x10;
    std::string slide_id;
    int x = 0;  // patch center at base magnification
    int y = 0;

    bool has_label() const { return label >= 0; }
};

// One sample per requested level, all sharing the same physical center
// (x, y). Levels away from the base resolution are bilinear resizes of the
// covering crop. Throws DataError when a required crop leaves the slide.
std::vector<Sample> sample_pyramid(const SyntheticSlide& slide, int cx, int cy,
                                   int size, const std::vector<Mag>& levels);
Sample sample_at(const SyntheticSlide& slide, int cx, int cy, int size, Mag level);

struct ManifestEntry {
    std::string slide_id;
    int x = 0;
    int y = 0;
    Mag magnification = Mag::x10;
    int label = -1;  // -1 serialized as an empty field
    std::string domain;
    std::string split;  // train | val | test
};

struct Manifest {
    int format_version = 1;
    int num_classes = 2;
    int patch_size = 128;
    std::vector<ManifestEntry> entries;

    std::vector<size_t> split_indices(const std::string& split) const;
    std::vector<size_t> labeled_train_indices() const;
    std::vector<size_t> unlabeled_train_indices() const;
    // Class balance of the labeled train pool.
    std::vector<int> labeled_class_counts() const;

    void save(const std::string& path) const;
    static Manifest load(const std::string& path);
};

struct SplitFractions {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
};

enum class BudgetGranularity { Patch, Slide };

// Samples patches_per_slide centers per slide (seeded, margin-aware so every
// pyramid level fits), splits them, then applies the label budget to the
// train split. Labels of val/test entries are always kept.
Manifest build_manifest(const std::vector<SyntheticSlide>& slides, int patches_per_slide,
                        double label_budget, uint64_t seed, int patch_size = 128,
                        const SplitFractions& splits = SplitFractions{},
                        BudgetGranularity granularity = BudgetGranularity::Patch);

// Re-applies a label budget to the train split of an existing manifest,
// leaving layout and splits untouched. Patch granularity keeps labels for
// exactly ceil(budget * n_train) entries chosen by seeded shuffle.
Manifest apply_budget(const Manifest& full, double budget, uint64_t seed,
                      BudgetGranularity granularity = BudgetGranularity::Patch);

// A generated corpus: slides plus manifest, everything derivable from params.
struct DataParams {
    int n_slides = 8;
    int patches_per_slide = 128;
    int patch_size = 128;
    double label_budget = 1.0;
    uint64_t seed = 7;
    std::string domain = "synthetic";
    SplitFractions splits{};
    BudgetGranularity granularity = BudgetGranularity::Patch;
    SlideParams slide;
};

struct Dataset {
    std::string domain;
    DataParams params;
    std::vector<SyntheticSlide> slides;
    Manifest manifest;
    std::unordered_map<std::string, size_t> slide_index;

    const SyntheticSlide& slide_of(const ManifestEntry& e) const;
    Image patch(const ManifestEntry& e) const;  // native-level crop/resize
};

Dataset build_dataset(const DataParams& params);

}  // namespace selfpath::datagen
