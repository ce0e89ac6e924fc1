#include "selfpath/datagen.hpp"

#include "selfpath/stainsep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace selfpath::datagen {

double mag_value(Mag m) {
    switch (m) {
        case Mag::x40: return 40.0;
        case Mag::x20: return 20.0;
        case Mag::x10: return 10.0;
        case Mag::x5: return 5.0;
    }
    throw ConfigError("unknown magnification");
}

std::string mag_name(Mag m) {
    switch (m) {
        case Mag::x40: return "40x";
        case Mag::x20: return "20x";
        case Mag::x10: return "10x";
        case Mag::x5: return "5x";
    }
    throw ConfigError("unknown magnification");
}

Mag mag_from_name(const std::string& name) {
    if (name == "40x") return Mag::x40;
    if (name == "20x") return Mag::x20;
    if (name == "10x") return Mag::x10;
    if (name == "5x") return Mag::x5;
    throw ConfigError("unknown magnification '" + name + "'");
}

namespace {

// Smooth lattice value noise in [-1,1]; pure in (seed, x, y).
double value_noise(uint64_t seed, double x, double y, double cell) {
    const double gx = x / cell, gy = y / cell;
    const int x0 = static_cast<int>(std::floor(gx));
    const int y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0, fy = gy - y0;
    auto lattice = [seed](int ix, int iy) {
        const uint64_t h = mix64(seed ^ mix64((static_cast<uint64_t>(static_cast<uint32_t>(ix)) << 32) |
                                              static_cast<uint32_t>(iy)));
        return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    };
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double sx = smooth(fx), sy = smooth(fy);
    const double v00 = lattice(x0, y0), v01 = lattice(x0 + 1, y0);
    const double v10 = lattice(x0, y0 + 1), v11 = lattice(x0 + 1, y0 + 1);
    const double top = v00 + sx * (v01 - v00);
    const double bot = v10 + sx * (v11 - v10);
    return top + sy * (bot - top);
}

std::vector<uint8_t> make_class_field(const SlideParams& p, Rng& rng) {
    const int w = p.width, h = p.height;
    std::vector<uint8_t> field(static_cast<size_t>(w) * h, 0);
    if (p.num_classes < 2) throw ConfigError("num_classes must be >= 2");

    if (p.num_classes == 2) {
        if (p.tumor_fraction <= 0.0) return field;
        if (p.tumor_fraction >= 1.0) {
            std::fill(field.begin(), field.end(), uint8_t{1});
            return field;
        }
        struct Bump { double cx, cy, s2; };
        std::vector<Bump> bumps;
        const int nbumps = 6;
        for (int i = 0; i < nbumps; ++i) {
            const double sigma = rng.uniform(std::min(w, h) / 8.0, std::min(w, h) / 4.0);
            bumps.push_back({rng.uniform(0.0, w), rng.uniform(0.0, h), 2.0 * sigma * sigma});
        }
        std::vector<float> f(field.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = 0.0;
                for (const auto& b : bumps) {
                    const double dx = x - b.cx, dy = y - b.cy;
                    v += std::exp(-(dx * dx + dy * dy) / b.s2);
                }
                f[static_cast<size_t>(y) * w + x] = static_cast<float>(v);
            }
        std::vector<float> sorted(f);
        const size_t cut = static_cast<size_t>((1.0 - p.tumor_fraction) * sorted.size());
        std::nth_element(sorted.begin(), sorted.begin() + cut, sorted.end());
        const float thresh = sorted[std::min(cut, sorted.size() - 1)];
        for (size_t i = 0; i < f.size(); ++i) field[i] = f[i] >= thresh ? 1 : 0;
        return field;
    }

    // K regions: argmax over K independent bump fields.
    const int k = p.num_classes;
    std::vector<std::vector<float>> fields(k, std::vector<float>(field.size(), 0.f));
    for (int c = 0; c < k; ++c) {
        for (int i = 0; i < 4; ++i) {
            const double sigma = rng.uniform(std::min(w, h) / 8.0, std::min(w, h) / 3.0);
            const double s2 = 2.0 * sigma * sigma;
            const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    fields[c][static_cast<size_t>(y) * w + x] +=
                        static_cast<float>(std::exp(-(dx * dx + dy * dy) / s2));
                }
        }
    }
    for (size_t i = 0; i < field.size(); ++i) {
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (fields[c][i] > fields[best][i]) best = c;
        field[i] = static_cast<uint8_t>(best);
    }
    return field;
}

}  // namespace

SyntheticSlide generate_slide(const SlideParams& params, uint64_t seed, const std::string& id) {
    if (params.width <= 0 || params.height <= 0)
        throw ConfigError("generate_slide: width and height must be positive");
    if (params.nuclei_density < 0.0)
        throw ConfigError("generate_slide: nuclei density must be >= 0");

    SyntheticSlide slide;
    slide.id = id.empty() ? "slide_" + std::to_string(seed) : id;
    slide.seed = seed;
    slide.params = params;

    Rng rng(seed);
    slide.class_field = make_class_field(params, rng);

    const int w = params.width, h = params.height;

    // Region areas drive deterministic nucleus counts.
    std::vector<size_t> area(static_cast<size_t>(std::max(params.num_classes, 2)), 0);
    for (uint8_t c : slide.class_field) ++area[c];

    for (int region = 0; region < params.num_classes; ++region) {
        if (area[region] == 0) continue;
        double density = params.nuclei_density;
        if (region == 1) density *= params.tumor_density_factor;
        const auto target = static_cast<size_t>(std::llround(density * static_cast<double>(area[region])));
        size_t placed = 0, attempts = 0;
        const size_t max_attempts = target * 1000 + 1000;
        while (placed < target && attempts < max_attempts) {
            ++attempts;
            const double cx = rng.uniform(0.0, w);
            const double cy = rng.uniform(0.0, h);
            const int ix = std::min(static_cast<int>(cx), w - 1);
            const int iy = std::min(static_cast<int>(cy), h - 1);
            if (slide.class_field[static_cast<size_t>(iy) * w + ix] != region) continue;
            Nucleus n;
            n.cx = static_cast<float>(cx);
            n.cy = static_cast<float>(cy);
            n.radius = static_cast<float>(params.nucleus_radius *
                                          (1.0 + params.nucleus_radius_jitter * (rng.uniform() * 2.0 - 1.0)));
            double od = params.nucleus_od *
                        (1.0 + params.nucleus_od_jitter * (rng.uniform() * 2.0 - 1.0));
            if (region == 1) od *= params.tumor_od_boost;
            n.od = static_cast<float>(od);
            n.region = region;
            slide.nuclei.push_back(n);
            ++placed;
        }
    }

    // Compose in OD space: background + texture along eosin, nuclei along
    // hematoxylin, then transmit I = 10^-od.
    const auto he = stainsep::StainMatrix::default_he().rows();
    const auto& hv = he[0];
    const auto& ev = he[1];

    std::vector<double> od(static_cast<size_t>(w) * h * 3, 0.0);
    const uint64_t tex_seed = mix64(seed ^ 0x7e57u);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double tex = params.texture_od * value_noise(tex_seed, x, y, 8.0);
            const double bg = std::max(0.0, params.background_od * params.eosin_scale + tex);
            double* px = &od[(static_cast<size_t>(y) * w + x) * 3];
            for (int ch = 0; ch < 3; ++ch)
                px[ch] = bg * ev[ch] + params.tint_od[ch];
        }
    }

    for (const Nucleus& n : slide.nuclei) {
        const double sigma = 0.5 * n.radius;
        const double s2 = 2.0 * sigma * sigma;
        const int r = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
        const int x0 = std::max(0, static_cast<int>(n.cx) - r);
        const int x1 = std::min(w - 1, static_cast<int>(n.cx) + r);
        const int y0 = std::max(0, static_cast<int>(n.cy) - r);
        const int y1 = std::min(h - 1, static_cast<int>(n.cy) + r);
        const double amp = n.od * params.hematoxylin_scale;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - n.cx, dy = y - n.cy;
                const double a = amp * std::exp(-(dx * dx + dy * dy) / s2);
                double* px = &od[(static_cast<size_t>(y) * w + x) * 3];
                for (int ch = 0; ch < 3; ++ch) px[ch] += a * hv[ch];
            }
    }

    slide.pixels = Image(h, w, 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = (static_cast<size_t>(y) * w + x) * 3;
            for (int ch = 0; ch < 3; ++ch)
                slide.pixels.px[i + ch] =
                    static_cast<float>(std::clamp(std::pow(10.0, -od[i + ch]), 0.0, 1.0));
        }
    return slide;
}

std::vector<Sample> sample_pyramid(const SyntheticSlide& slide, int cx, int cy,
                                   int size, const std::vector<Mag>& levels) {
    const int w = slide.params.width, h = slide.params.height;
    if (cx < 0 || cx >= w || cy < 0 || cy >= h)
        throw DataError("sample_pyramid: center outside slide bounds");
    if (size <= 0 || size % 4 != 0)
        throw ConfigError("sample_pyramid: size must be a positive multiple of 4");

    std::vector<Sample> out;
    out.reserve(levels.size());
    for (Mag level : levels) {
        const double scale = mag_value(level) / slide.params.base_magnification;
        const double side_f = static_cast<double>(size) / scale;
        const int side = static_cast<int>(std::lround(side_f));
        if (std::abs(side_f - side) > 1e-9)
            throw ConfigError("sample_pyramid: size " + std::to_string(size) +
                              " is not integral at " + mag_name(level));
        const int x0 = cx - side / 2;
        const int y0 = cy - side / 2;
        if (x0 < 0 || y0 < 0 || x0 + side > w || y0 + side > h)
            throw DataError("sample_pyramid: window at " + mag_name(level) +
                            " exceeds slide bounds (no padding)");
        Sample s;
        s.image = crop(slide.pixels, y0, x0, side, side);
        if (side != size) s.image = resize_bilinear(s.image, size, size);
        s.label = slide.class_at(cy, cx);
        s.magnification = level;
        s.slide_id = slide.id;
        s.x = cx;
        s.y = cy;
        out.push_back(std::move(s));
    }
    return out;
}

Sample sample_at(const SyntheticSlide& slide, int cx, int cy, int size, Mag level) {
    return sample_pyramid(slide, cx, cy, size, {level})[0];
}

std::vector<size_t> Manifest::split_indices(const std::string& split) const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) idx.push_back(i);
    return idx;
}

std::vector<size_t> Manifest::labeled_train_indices() const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == "train" && entries[i].label >= 0) idx.push_back(i);
    return idx;
}

std::vector<size_t> Manifest::unlabeled_train_indices() const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == "train" && entries[i].label < 0) idx.push_back(i);
    return idx;
}

std::vector<int> Manifest::labeled_class_counts() const {
    std::vector<int> counts(static_cast<size_t>(num_classes), 0);
    for (const auto& e : entries)
        if (e.split == "train" && e.label >= 0) ++counts[static_cast<size_t>(e.label)];
    return counts;
}

void Manifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("manifest: cannot open " + path);
    f << "#selfpath-manifest v" << format_version << " classes=" << num_classes
      << " patch=" << patch_size << "\n";
    for (const auto& e : entries) {
        f << e.slide_id << "," << e.x << "," << e.y << "," << mag_name(e.magnification) << ",";
        if (e.label >= 0) f << e.label;
        f << "," << e.domain << "," << e.split << "\n";
    }
    if (!f) throw DataError("manifest: write failed for " + path);
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("manifest: cannot open " + path);
    Manifest m;
    std::string header;
    if (!std::getline(f, header)) throw DataError("manifest: empty file " + path);
    int version = 0;
    if (std::sscanf(header.c_str(), "#selfpath-manifest v%d classes=%d patch=%d",
                    &version, &m.num_classes, &m.patch_size) != 3 || version != 1)
        throw DataError("manifest: unsupported header '" + header + "'");
    m.format_version = version;
    std::string line;
    size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        if (fields.size() != 7)
            throw DataError("manifest: line " + std::to_string(lineno) + ": expected 7 fields");
        ManifestEntry e;
        e.slide_id = fields[0];
        e.x = std::stoi(fields[1]);
        e.y = std::stoi(fields[2]);
        e.magnification = mag_from_name(fields[3]);
        e.label = fields[4].empty() ? -1 : std::stoi(fields[4]);
        if (e.label >= m.num_classes)
            throw DataError("manifest: line " + std::to_string(lineno) + ": label out of range");
        e.domain = fields[5];
        e.split = fields[6];
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw DataError("manifest: line " + std::to_string(lineno) + ": bad split '" + e.split + "'");
        m.entries.push_back(std::move(e));
    }
    return m;
}

namespace {

size_t budget_count(double budget, size_t n) {
    if (budget < 0.0 || budget > 1.0) throw ConfigError("label budget must be in [0, 1]");
    const double k = std::ceil(budget * static_cast<double>(n) - 1e-9);
    return static_cast<size_t>(std::max(0.0, k));
}

}  // namespace

Manifest apply_budget(const Manifest& full, double budget, uint64_t seed,
                      BudgetGranularity granularity) {
    Manifest out = full;
    std::vector<size_t> train;
    for (size_t i = 0; i < out.entries.size(); ++i)
        if (out.entries[i].split == "train") train.push_back(i);
    Rng rng(seed);
    if (granularity == BudgetGranularity::Patch) {
        const size_t keep = budget_count(budget, train.size());
        rng.shuffle(train);
        for (size_t j = keep; j < train.size(); ++j) out.entries[train[j]].label = -1;
    } else {
        std::vector<std::string> ids;
        for (size_t i : train) {
            const auto& id = out.entries[i].slide_id;
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        }
        const size_t keep = budget_count(budget, ids.size());
        rng.shuffle(ids);
        ids.resize(keep);
        for (size_t i : train) {
            const auto& id = out.entries[i].slide_id;
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) out.entries[i].label = -1;
        }
    }
    return out;
}

Manifest build_manifest(const std::vector<SyntheticSlide>& slides, int patches_per_slide,
                        double label_budget, uint64_t seed, int patch_size,
                        const SplitFractions& splits, BudgetGranularity granularity) {
    if (slides.empty()) throw ConfigError("build_manifest: empty slide list");
    if (patches_per_slide <= 0) throw ConfigError("build_manifest: patches_per_slide must be > 0");
    if (std::abs(splits.train + splits.val + splits.test - 1.0) > 1e-9)
        throw ConfigError("build_manifest: split fractions must sum to 1");

    Manifest m;
    m.patch_size = patch_size;
    m.num_classes = slides.front().params.num_classes;

    Rng rng(seed);
    const int margin = patch_size;  // largest pyramid crop is 2 * patch_size wide
    for (const auto& slide : slides) {
        const int w = slide.params.width, h = slide.params.height;
        if (w < 2 * margin + 1 || h < 2 * margin + 1)
            throw DataError("build_manifest: slide " + slide.id + " too small for patch size " +
                            std::to_string(patch_size));
        for (int i = 0; i < patches_per_slide; ++i) {
            ManifestEntry e;
            e.slide_id = slide.id;
            e.x = rng.uniform_int(margin, w - margin - 1);
            e.y = rng.uniform_int(margin, h - margin - 1);
            e.magnification = Mag::x10;
            e.label = slide.class_at(e.y, e.x);
            e.split = "train";
            m.entries.push_back(std::move(e));
        }
    }

    // Split assignment by seeded shuffle; counts from fractions.
    std::vector<size_t> order(m.entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const size_t n = order.size();
    const auto n_train = static_cast<size_t>(std::llround(splits.train * static_cast<double>(n)));
    const auto n_val = static_cast<size_t>(std::llround(splits.val * static_cast<double>(n)));
    for (size_t j = 0; j < n; ++j) {
        auto& e = m.entries[order[j]];
        e.split = j < n_train ? "train" : (j < n_train + n_val ? "val" : "test");
    }

    return apply_budget(m, label_budget, rng.next_u64(), granularity);
}

const SyntheticSlide& Dataset::slide_of(const ManifestEntry& e) const {
    auto it = slide_index.find(e.slide_id);
    if (it == slide_index.end()) throw DataError("dataset: unknown slide id '" + e.slide_id + "'");
    return slides[it->second];
}

Image Dataset::patch(const ManifestEntry& e) const {
    return sample_at(slide_of(e), e.x, e.y, manifest.patch_size, e.magnification).image;
}

Dataset build_dataset(const DataParams& params) {
    Dataset d;
    d.domain = params.domain;
    d.params = params;
    d.slides.reserve(static_cast<size_t>(params.n_slides));
    for (int i = 0; i < params.n_slides; ++i) {
        const uint64_t s = derive_seed(params.seed, static_cast<uint64_t>(i));
        d.slides.push_back(generate_slide(params.slide, s,
                                          params.domain + "_s" + std::to_string(i)));
        d.slide_index[d.slides.back().id] = d.slides.size() - 1;
    }
    d.manifest = build_manifest(d.slides, params.patches_per_slide, params.label_budget,
                                derive_seed(params.seed, 0xDA7Aull), params.patch_size,
                                params.splits, params.granularity);
    for (auto& e : d.manifest.entries) e.domain = params.domain;
    return d;
}

}  // namespace selfpath::datagen
