#include "selfpath/pretext.hpp"

#include "selfpath/common.hpp"
#include "selfpath/stainsep.hpp"

#include <algorithm>

namespace selfpath::pretext {

TaskSpec task_by_name(const std::string& name) {
    TaskSpec t;
    t.name = name;
    if (name == "rotation") {
        t.kind = TaskKind::Classification;
        t.num_classes = 4;
        t.loss = LossKind::CrossEntropy;
    } else if (name == "flipping") {
        t.kind = TaskKind::Classification;
        t.num_classes = 2;
        t.loss = LossKind::CrossEntropy;
    } else if (name == "magnification") {
        t.kind = TaskKind::Classification;
        t.num_classes = 4;
        t.loss = LossKind::CrossEntropy;
        t.needs_pyramid = true;
    } else if (name == "jigmag") {
        t.kind = TaskKind::Classification;
        t.num_classes = PermutationCodebook::size();
        t.loss = LossKind::CrossEntropy;
        t.needs_pyramid = true;
    } else if (name == "autoencoder") {
        t.kind = TaskKind::Pixelwise;
        t.target_channels = 3;
        t.loss = LossKind::L1;
    } else if (name == "hematoxylin") {
        t.kind = TaskKind::Pixelwise;
        t.target_channels = 1;
        t.loss = LossKind::L1;
    } else if (name == "domain") {
        t.kind = TaskKind::Classification;
        t.num_classes = 2;
        t.loss = LossKind::CrossEntropy;
    } else if (name == "generative") {
        t.kind = TaskKind::Adversarial;
        t.loss = LossKind::Adversarial;
        t.uses_labeled = false;
    } else {
        throw ConfigError("unknown pretext task '" + name + "'");
    }
    return t;
}

const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names{
        "rotation", "flipping", "autoencoder", "generative",
        "domain",   "magnification", "jigmag", "hematoxylin"};
    return names;
}

Image rotate90(const Image& img, int r) {
    if (img.h != img.w) throw ConfigError("rotate90: image must be square");
    r = ((r % 4) + 4) % 4;
    if (r == 0) return img;
    const int n = img.h, c = img.c;
    Image out(n, n, c);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            int sy = 0, sx = 0;
            switch (r) {
                case 1: sy = x; sx = n - 1 - y; break;           // 90 ccw
                case 2: sy = n - 1 - y; sx = n - 1 - x; break;   // 180
                default: sy = n - 1 - x; sx = y; break;          // 270 ccw
            }
            for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
        }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.h, img.w, img.c);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                out.at(y, x, ch) = img.at(y, img.w - 1 - x, ch);
    return out;
}

PermutationCodebook::PermutationCodebook() {
    orderings_ = {{{0, 1, 2, 3}, {0, 2, 3, 1}, {0, 3, 1, 2}, {1, 0, 3, 2},
                   {1, 2, 0, 3}, {1, 3, 2, 0}, {2, 0, 1, 3}, {2, 1, 3, 0},
                   {2, 3, 0, 1}, {3, 0, 2, 1}, {3, 1, 0, 2}, {3, 2, 1, 0}}};
}

const PermutationCodebook& PermutationCodebook::instance() {
    static const PermutationCodebook cb;
    return cb;
}

const std::array<int, 4>& PermutationCodebook::at(int index) const {
    if (index < 0 || index >= size())
        throw ConfigError("jigmag: permutation index out of range");
    return orderings_[static_cast<size_t>(index)];
}

uint64_t PermutationCodebook::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& v : orderings_)
        for (int x : v) {
            const auto b = static_cast<unsigned char>(x);
            h = fnv1a64(&b, 1, h);
        }
    return h;
}

int mag_rank(datagen::Mag m) { return 3 - static_cast<int>(m); }

PretextExample rotate_example(const Image& img, int r) {
    if (r < 0 || r >= 4) throw ConfigError("rotation label must be in [0, 4)");
    PretextExample e;
    e.input = rotate90(img, r);
    e.class_label = r;
    return e;
}

PretextExample flip_example(const Image& img, int r) {
    if (r != 0 && r != 1) throw ConfigError("flip label must be 0 or 1");
    PretextExample e;
    e.input = r == 1 ? flip_horizontal(img) : img;
    e.class_label = r;
    return e;
}

PretextExample autoencoder_example(const Image& img) {
    PretextExample e;
    e.input = img;
    e.target = img;
    return e;
}

PretextExample hematoxylin_example(const Image& img) {
    PretextExample e;
    e.input = img;
    e.target = stainsep::hematoxylin_target(img);
    return e;
}

int magnification_label(datagen::Mag m) { return static_cast<int>(m); }

PretextBatch magnification_task(const std::vector<datagen::Sample>& pyramid_samples) {
    PretextBatch b;
    b.task = "magnification";
    for (const auto& s : pyramid_samples) {
        b.inputs.push_back(s.image);
        b.class_labels.push_back(magnification_label(s.magnification));
    }
    return b;
}

Image jigmag_assemble(const std::array<Image, 4>& tiles_by_rank, int perm_index) {
    const auto& v = PermutationCodebook::instance().at(perm_index);
    const int ts = tiles_by_rank[0].h;
    const int c = tiles_by_rank[0].c;
    for (const auto& t : tiles_by_rank)
        if (t.h != ts || t.w != ts || t.c != c)
            throw ConfigError("jigmag: tiles must share square dimensions");
    Image out(ts * 2, ts * 2, c);
    for (int pos = 0; pos < 4; ++pos) {
        const Image& tile = tiles_by_rank[static_cast<size_t>(v[pos])];
        const int oy = (pos / 2) * ts;
        const int ox = (pos % 2) * ts;
        for (int y = 0; y < ts; ++y)
            for (int x = 0; x < ts; ++x)
                for (int ch = 0; ch < c; ++ch)
                    out.at(oy + y, ox + x, ch) = tile.at(y, x, ch);
    }
    return out;
}

std::array<Image, 4> jigmag_disassemble(const Image& assembled, int perm_index) {
    const auto& v = PermutationCodebook::instance().at(perm_index);
    if (assembled.h != assembled.w || assembled.h % 2 != 0)
        throw ConfigError("jigmag: assembled image must be square with even side");
    const int ts = assembled.h / 2;
    std::array<Image, 4> tiles;
    for (int pos = 0; pos < 4; ++pos) {
        const int oy = (pos / 2) * ts;
        const int ox = (pos % 2) * ts;
        Image tile(ts, ts, assembled.c);
        for (int y = 0; y < ts; ++y)
            for (int x = 0; x < ts; ++x)
                for (int ch = 0; ch < assembled.c; ++ch)
                    tile.at(y, x, ch) = assembled.at(oy + y, ox + x, ch);
        tiles[static_cast<size_t>(v[pos])] = std::move(tile);
    }
    return tiles;
}

PretextExample jigmag_example(const std::vector<datagen::Sample>& pyramid_samples,
                              int perm_index) {
    if (pyramid_samples.size() != 4)
        throw ConfigError("jigmag: need exactly one sample per magnification level");
    std::array<const datagen::Sample*, 4> by_rank{};
    for (const auto& s : pyramid_samples) {
        auto& slot = by_rank[static_cast<size_t>(mag_rank(s.magnification))];
        if (slot != nullptr) throw ConfigError("jigmag: duplicate magnification level");
        slot = &s;
    }
    for (const auto* s : by_rank)
        if (s == nullptr) throw ConfigError("jigmag: missing magnification level");

    const int patch = by_rank[0]->image.h;
    const int tile = patch / 2;
    std::array<Image, 4> tiles;
    for (int r = 0; r < 4; ++r)
        tiles[static_cast<size_t>(r)] = resize_bilinear(by_rank[static_cast<size_t>(r)]->image, tile, tile);

    PretextExample e;
    e.input = jigmag_assemble(tiles, perm_index);
    e.class_label = perm_index;
    return e;
}

}  // namespace selfpath::pretext
