#pragma once

#include "selfpath/datagen.hpp"
#include "selfpath/image.hpp"

#include <array>
#include <string>
#include <vector>

namespace selfpath::pretext {

enum class TaskKind { Classification, Pixelwise, Adversarial };
enum class LossKind { CrossEntropy, L1, Adversarial };

struct TaskSpec {
    std::string name;
    TaskKind kind = TaskKind::Classification;
    int num_classes = 0;      // classification tasks
    int target_channels = 0;  // pixelwise tasks
    LossKind loss = LossKind::CrossEntropy;
    double weight = 1.0;
    bool uses_labeled = true;
    bool uses_unlabeled = true;
    bool needs_pyramid = false;  // magnification / jigmag sample from the slide
};

// Registry addressed by config name:
// rotation | flipping | autoencoder | generative | domain | magnification |
// jigmag | hematoxylin. Throws ConfigError for unknown names.
TaskSpec task_by_name(const std::string& name);
const std::vector<std::string>& task_names();

// Counter-clockwise rotation by r*90 degrees; image must be square.
Image rotate90(const Image& img, int r);
// Mirror columns (horizontal flip).
Image flip_horizontal(const Image& img);

// The 12 jigmag orderings of magnification ranks over the 2x2 grid
// (positions TL, TR, BL, BR). Rank order is [5x, 10x, 20x, 40x] -> [0..3],
// so ordering {0,1,2,3} puts 5x top-left and 40x bottom-right. The table is
// the 12-subset of all 24 permutations that maximizes the minimum pairwise
// Hamming distance (exhaustive search, lexicographic tie-break).
class PermutationCodebook {
public:
    static const PermutationCodebook& instance();
    const std::array<std::array<int, 4>, 12>& orderings() const { return orderings_; }
    const std::array<int, 4>& at(int index) const;
    uint64_t hash() const;  // FNV-1a over the 48 entries
    static constexpr int size() { return 12; }

private:
    PermutationCodebook();
    std::array<std::array<int, 4>, 12> orderings_;
};

// Magnification rank within the jigmag ordering convention.
int mag_rank(datagen::Mag m);  // 5x -> 0, 10x -> 1, 20x -> 2, 40x -> 3

// One transformed input with either a class label or a target map.
struct PretextExample {
    Image input;
    int class_label = -1;
    Image target;
};

// A batch for one task; exactly one of class_labels / target_maps is used.
struct PretextBatch {
    std::string task;
    std::vector<Image> inputs;
    std::vector<int> class_labels;
    std::vector<Image> target_maps;
};

PretextExample rotate_example(const Image& img, int r);       // r in [0,4)
PretextExample flip_example(const Image& img, int r);         // r in {0,1}
PretextExample autoencoder_example(const Image& img);
PretextExample hematoxylin_example(const Image& img);

// Label from the sample's magnification tag under the fixed ordering
// [40x, 20x, 10x, 5x] -> [0, 1, 2, 3].
int magnification_label(datagen::Mag m);
PretextBatch magnification_task(const std::vector<datagen::Sample>& pyramid_samples);

// tiles_by_rank[r] is the tile image of magnification rank r; all four must
// share tile dimensions. The assembled image has twice the tile side.
Image jigmag_assemble(const std::array<Image, 4>& tiles_by_rank, int perm_index);
std::array<Image, 4> jigmag_disassemble(const Image& assembled, int perm_index);

// pyramid_samples must hold exactly 4 same-center samples, one per level.
// Tiles are the level samples resized to half the patch side.
PretextExample jigmag_example(const std::vector<datagen::Sample>& pyramid_samples,
                              int perm_index);

}  // namespace selfpath::pretext
