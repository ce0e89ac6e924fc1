#include "selfpath/common.hpp"
#include "selfpath/datagen.hpp"
#include "selfpath/evalkit.hpp"
#include "selfpath/model.hpp"
#include "selfpath/plot.hpp"
#include "selfpath/pretext.hpp"
#include "selfpath/runio.hpp"
#include "selfpath/stainsep.hpp"
#include "selfpath/trainer.hpp"
#include "selfpath/wsiheat.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selfpath;

namespace {

// ---- strict config parsing: unknown keys are errors, never ignored ----

void require_keys(const json& j, const std::string& ctx,
                  std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + ctx);
    }
}

json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("config file not found: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw ConfigError("config: missing or unsupported 'version' (expected 1)");
    return j;
}

datagen::SlideParams parse_slide_params(const json& j) {
    require_keys(j, "slide",
                 {"width", "height", "base_magnification", "num_classes", "nuclei_density",
                  "tumor_density_factor", "nucleus_radius", "nucleus_radius_jitter",
                  "nucleus_od", "nucleus_od_jitter", "tumor_od_boost", "background_od",
                  "texture_od", "tumor_fraction", "eosin_scale", "hematoxylin_scale", "tint_od"});
    datagen::SlideParams p;
    p.width = j.value("width", p.width);
    p.height = j.value("height", p.height);
    p.base_magnification = j.value("base_magnification", p.base_magnification);
    p.num_classes = j.value("num_classes", p.num_classes);
    p.nuclei_density = j.value("nuclei_density", p.nuclei_density);
    p.tumor_density_factor = j.value("tumor_density_factor", p.tumor_density_factor);
    p.nucleus_radius = j.value("nucleus_radius", p.nucleus_radius);
    p.nucleus_radius_jitter = j.value("nucleus_radius_jitter", p.nucleus_radius_jitter);
    p.nucleus_od = j.value("nucleus_od", p.nucleus_od);
    p.nucleus_od_jitter = j.value("nucleus_od_jitter", p.nucleus_od_jitter);
    p.tumor_od_boost = j.value("tumor_od_boost", p.tumor_od_boost);
    p.background_od = j.value("background_od", p.background_od);
    p.texture_od = j.value("texture_od", p.texture_od);
    p.tumor_fraction = j.value("tumor_fraction", p.tumor_fraction);
    p.eosin_scale = j.value("eosin_scale", p.eosin_scale);
    p.hematoxylin_scale = j.value("hematoxylin_scale", p.hematoxylin_scale);
    if (j.contains("tint_od")) {
        const auto& t = j.at("tint_od");
        if (!t.is_array() || t.size() != 3)
            throw ConfigError("config: slide.tint_od must be an array of 3 numbers");
        for (int i = 0; i < 3; ++i) p.tint_od[static_cast<size_t>(i)] = t[static_cast<size_t>(i)].get<double>();
    }
    return p;
}

json slide_params_to_json(const datagen::SlideParams& p) {
    return json{{"width", p.width},
                {"height", p.height},
                {"base_magnification", p.base_magnification},
                {"num_classes", p.num_classes},
                {"nuclei_density", p.nuclei_density},
                {"tumor_density_factor", p.tumor_density_factor},
                {"nucleus_radius", p.nucleus_radius},
                {"nucleus_radius_jitter", p.nucleus_radius_jitter},
                {"nucleus_od", p.nucleus_od},
                {"nucleus_od_jitter", p.nucleus_od_jitter},
                {"tumor_od_boost", p.tumor_od_boost},
                {"background_od", p.background_od},
                {"texture_od", p.texture_od},
                {"tumor_fraction", p.tumor_fraction},
                {"eosin_scale", p.eosin_scale},
                {"hematoxylin_scale", p.hematoxylin_scale},
                {"tint_od", p.tint_od}};
}

struct DataSection {
    datagen::DataParams params;
    std::string load_dir;  // when set, reload a datagen output instead
};

DataSection parse_data(const json& j, const std::string& ctx) {
    require_keys(j, ctx,
                 {"n_slides", "patches_per_slide", "patch_size", "label_budget", "seed",
                  "domain", "splits", "granularity", "slide", "load_dir"});
    DataSection d;
    if (j.contains("load_dir")) {
        d.load_dir = j.at("load_dir").get<std::string>();
        return d;
    }
    auto& p = d.params;
    p.n_slides = j.value("n_slides", p.n_slides);
    p.patches_per_slide = j.value("patches_per_slide", p.patches_per_slide);
    p.patch_size = j.value("patch_size", p.patch_size);
    p.label_budget = j.value("label_budget", p.label_budget);
    p.seed = j.value("seed", p.seed);
    p.domain = j.value("domain", p.domain);
    if (j.contains("splits")) {
        require_keys(j.at("splits"), ctx + ".splits", {"train", "val", "test"});
        p.splits.train = j.at("splits").value("train", p.splits.train);
        p.splits.val = j.at("splits").value("val", p.splits.val);
        p.splits.test = j.at("splits").value("test", p.splits.test);
    }
    if (j.contains("granularity")) {
        const auto g = j.at("granularity").get<std::string>();
        if (g == "patch") p.granularity = datagen::BudgetGranularity::Patch;
        else if (g == "slide") p.granularity = datagen::BudgetGranularity::Slide;
        else throw ConfigError("config: granularity must be 'patch' or 'slide'");
    }
    if (j.contains("slide")) p.slide = parse_slide_params(j.at("slide"));
    return d;
}

trainer::TrainConfig parse_train(const json& j) {
    require_keys(j, "train",
                 {"mode", "tasks", "epochs", "batch_size", "learning_rate", "seed",
                  "label_budget", "encoder", "grl_lambda", "swap_real_fake", "noise_dim"});
    const std::string mode = j.value("mode", std::string("semi"));
    trainer::TrainConfig cfg = trainer::TrainConfig::defaults(mode);
    if (j.contains("tasks")) {
        for (const auto& t : j.at("tasks")) {
            require_keys(t, "train.tasks[]", {"name", "weight"});
            trainer::TaskSetting ts;
            ts.name = t.at("name").get<std::string>();
            pretext::task_by_name(ts.name);  // validates the name
            ts.weight = t.value("weight", 1.0);
            cfg.tasks.push_back(ts);
        }
    }
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.label_budget = j.value("label_budget", cfg.label_budget);
    cfg.grl_lambda = j.value("grl_lambda", cfg.grl_lambda);
    cfg.swap_real_fake = j.value("swap_real_fake", cfg.swap_real_fake);
    cfg.noise_dim = j.value("noise_dim", cfg.noise_dim);
    if (j.contains("encoder")) {
        require_keys(j.at("encoder"), "train.encoder", {"arch", "input_size", "feature_width"});
        cfg.encoder.arch = j.at("encoder").value("arch", cfg.encoder.arch);
        cfg.encoder.input_size = j.at("encoder").value("input_size", cfg.encoder.input_size);
        cfg.encoder.feature_width = j.at("encoder").value("feature_width", cfg.encoder.feature_width);
    }
    return cfg;
}

// datagen output loader (slides.json + manifest.txt)
datagen::Dataset load_dataset_dir(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "slides.json");
    if (!f) throw DataError("dataset dir: missing slides.json in " + dir);
    json rec = json::parse(f);
    datagen::Dataset d;
    d.domain = rec.at("domain").get<std::string>();
    for (const auto& s : rec.at("slides")) {
        datagen::SlideParams p = parse_slide_params(s.at("params"));
        d.slides.push_back(datagen::generate_slide(p, s.at("seed").get<uint64_t>(),
                                                   s.at("id").get<std::string>()));
        d.slide_index[d.slides.back().id] = d.slides.size() - 1;
    }
    d.manifest = datagen::Manifest::load((fs::path(dir) / "manifest.txt").string());
    return d;
}

datagen::Dataset realize_dataset(const DataSection& sec, int patch_size_hint) {
    if (!sec.load_dir.empty()) return load_dataset_dir(sec.load_dir);
    datagen::DataParams p = sec.params;
    if (patch_size_hint > 0) p.patch_size = patch_size_hint;
    return datagen::build_dataset(p);
}

void write_dataset(const datagen::Dataset& d, const fs::path& dir, bool write_patches,
                   std::vector<std::string>& outputs) {
    json rec;
    rec["version"] = 1;
    rec["domain"] = d.domain;
    rec["slides"] = json::array();
    for (const auto& s : d.slides) {
        rec["slides"].push_back({{"id", s.id}, {"seed", s.seed},
                                 {"params", slide_params_to_json(s.params)}});
        write_ppm((dir / (s.id + ".ppm")).string(), s.pixels);
        outputs.push_back(s.id + ".ppm");
    }
    {
        std::ofstream f(dir / "slides.json");
        f << rec.dump(2) << "\n";
    }
    outputs.push_back("slides.json");
    d.manifest.save((dir / "manifest.txt").string());
    outputs.push_back("manifest.txt");

    if (write_patches) {
        fs::create_directories(dir / "patches");
        for (const auto& e : d.manifest.entries) {
            const Image img = quantize8(d.patch(e));
            const std::string name = e.slide_id + "_" + std::to_string(e.x) + "_" +
                                     std::to_string(e.y) + "_" + datagen::mag_name(e.magnification) +
                                     ".ppm";
            write_ppm((dir / "patches" / name).string(), img);
        }
        outputs.push_back("patches/");
    }
}

// ---- commands ----

struct CommonArgs {
    std::string config_path;
    long long seed_override = -1;
    std::string out_root = "runs";
    bool quiet = false;
};

std::string start_run(const CommonArgs& args, const json& cfg, uint64_t seed) {
    const std::string hash = runio::run_hash_hex(cfg.dump(), seed);
    const std::string dir = runio::prepare_run_dir(args.out_root, hash);
    if (!args.quiet) std::cout << "run " << hash << " -> " << dir << "\n";
    return dir;
}

int cmd_datagen(const CommonArgs& args) {
    json cfg = load_config(args.config_path);
    require_keys(cfg, "config", {"version", "data", "write_patches"});
    DataSection sec = parse_data(cfg.at("data"), "data");
    if (!sec.load_dir.empty()) throw ConfigError("datagen: load_dir is not a generation source");
    if (args.seed_override >= 0) sec.params.seed = static_cast<uint64_t>(args.seed_override);
    const bool write_patches = cfg.value("write_patches", true);

    const std::string dir = start_run(args, cfg, sec.params.seed);
    datagen::Dataset d = datagen::build_dataset(sec.params);
    std::vector<std::string> outputs;
    write_dataset(d, dir, write_patches, outputs);

    const auto counts = d.manifest.labeled_class_counts();
    if (!args.quiet) {
        std::cout << "slides: " << d.slides.size() << ", entries: " << d.manifest.entries.size()
                  << "\nlabeled train class balance:";
        for (size_t i = 0; i < counts.size(); ++i) std::cout << " class" << i << "=" << counts[i];
        std::cout << "\n";
    }
    runio::write_run_record(dir, cfg.dump(), sec.params.seed, outputs);
    return 0;
}

int cmd_train(const CommonArgs& args) {
    json cfg = load_config(args.config_path);
    require_keys(cfg, "config", {"version", "train", "data", "source", "target"});
    trainer::TrainConfig tc = parse_train(cfg.at("train"));
    if (args.seed_override >= 0) tc.seed = static_cast<uint64_t>(args.seed_override);
    tc.quiet = args.quiet;

    const std::string dir = start_run(args, cfg, tc.seed);
    trainer::TrainResult res = [&] {
        if (tc.mode == "da") {
            if (!cfg.contains("source") || !cfg.contains("target"))
                throw ConfigError("da mode needs 'source' and 'target' data sections");
            DataSection s = parse_data(cfg.at("source"), "source");
            DataSection t = parse_data(cfg.at("target"), "target");
            if (s.load_dir.empty()) s.params.label_budget = tc.label_budget >= 0 ? s.params.label_budget : 1.0;
            datagen::Dataset source = realize_dataset(s, tc.encoder.input_size);
            datagen::Dataset target = realize_dataset(t, tc.encoder.input_size);
            return trainer::train_da(tc, source, target);
        }
        if (!cfg.contains("data")) throw ConfigError("missing 'data' section");
        DataSection sec = parse_data(cfg.at("data"), "data");
        if (sec.load_dir.empty()) sec.params.label_budget = tc.label_budget;
        datagen::Dataset data = realize_dataset(sec, tc.encoder.input_size);
        return tc.mode == "generative" ? trainer::train_generative(tc, data)
                                       : trainer::train_semi(tc, data);
    }();

    res.model.save((fs::path(dir) / "checkpoint.spck").string());
    res.history.save((fs::path(dir) / "metrics.csv").string());
    if (!args.quiet)
        std::cout << "best val auc " << res.best_val_auc << ", test auc " << res.test_auc << "\n";
    runio::write_run_record(dir, cfg.dump(), tc.seed, {"checkpoint.spck", "metrics.csv"});
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    json cfg = load_config(args.config_path);
    require_keys(cfg, "config", {"version", "train", "data", "sweep"});
    evalkit::SweepConfig sc;
    sc.train = parse_train(cfg.at("train"));
    sc.train.quiet = args.quiet;
    DataSection sec = parse_data(cfg.at("data"), "data");
    if (!sec.load_dir.empty()) throw ConfigError("sweep: load_dir is not supported here");
    sc.data = sec.params;
    sc.data.patch_size = sc.train.encoder.input_size;

    require_keys(cfg.at("sweep"), "sweep", {"budgets", "seeds", "arms"});
    sc.budgets = cfg.at("sweep").at("budgets").get<std::vector<double>>();
    sc.seeds = cfg.at("sweep").at("seeds").get<std::vector<uint64_t>>();
    for (const auto& a : cfg.at("sweep").at("arms")) {
        require_keys(a, "sweep.arms[]", {"name", "tasks"});
        evalkit::SweepArm arm;
        arm.name = a.at("name").get<std::string>();
        if (a.contains("tasks"))
            for (const auto& t : a.at("tasks")) {
                require_keys(t, "sweep.arms[].tasks[]", {"name", "weight"});
                trainer::TaskSetting ts;
                ts.name = t.at("name").get<std::string>();
                pretext::task_by_name(ts.name);
                ts.weight = t.value("weight", 1.0);
                arm.tasks.push_back(ts);
            }
        sc.arms.push_back(std::move(arm));
    }
    const uint64_t run_seed = args.seed_override >= 0 ? static_cast<uint64_t>(args.seed_override)
                                                      : sc.data.seed;
    sc.data.seed = run_seed;

    const std::string dir = start_run(args, cfg, run_seed);
    const auto results = evalkit::budget_sweep(sc);
    evalkit::save_records((fs::path(dir) / "results.csv").string(), results);
    const std::string table = evalkit::format_table(results);
    {
        std::ofstream f(fs::path(dir) / "table.txt");
        f << table;
    }
    plot::render_budget_curves((fs::path(dir) / "curves.ppm").string(), results);
    if (!args.quiet) std::cout << table;
    runio::write_run_record(dir, cfg.dump(), run_seed, {"results.csv", "table.txt", "curves.ppm"});
    return 0;
}

int cmd_heatmap(const CommonArgs& args) {
    json cfg = load_config(args.config_path);
    require_keys(cfg, "config", {"version", "heatmap", "data"});
    const json& hj = cfg.at("heatmap");
    require_keys(hj, "heatmap",
                 {"predictor", "patch_size", "stride", "n_slides", "negative_fraction",
                  "train_fraction", "forest_trees", "forest_seed", "seed"});
    DataSection sec = parse_data(cfg.at("data"), "data");
    if (!sec.load_dir.empty()) throw ConfigError("heatmap: generate slides via 'data', not load_dir");

    const std::string predictor_spec = hj.value("predictor", std::string("hematoxylin"));
    const int patch_size = hj.value("patch_size", 128);
    const int stride = hj.value("stride", patch_size / 2);
    const int n_slides = hj.value("n_slides", 12);
    const double neg_frac = hj.value("negative_fraction", 0.5);
    const double train_frac = hj.value("train_fraction", 0.5);
    uint64_t seed = hj.value("seed", sec.params.seed);
    if (args.seed_override >= 0) seed = static_cast<uint64_t>(args.seed_override);

    const std::string dir = start_run(args, cfg, seed);

    // Slide corpus: negatives are tumor-free, positives keep the configured fraction.
    std::vector<datagen::SyntheticSlide> slides;
    std::vector<int> labels;
    for (int i = 0; i < n_slides; ++i) {
        datagen::SlideParams p = sec.params.slide;
        const bool negative = i < static_cast<int>(neg_frac * n_slides);
        if (negative) p.tumor_fraction = 0.0;
        slides.push_back(datagen::generate_slide(p, derive_seed(seed, static_cast<uint64_t>(i)),
                                                 "slide_" + std::to_string(i)));
        labels.push_back(negative ? 0 : 1);
    }

    // Patch predictor.
    std::unique_ptr<model::ModelGraph> mg;
    wsiheat::PatchPredictor predict;
    if (predictor_spec.rfind("model:", 0) == 0) {
        mg = std::make_unique<model::ModelGraph>(model::ModelGraph::load(predictor_spec.substr(6)));
        predict = wsiheat::model_predictor(*mg, 32);
    } else if (predictor_spec.rfind("constant:", 0) == 0) {
        const double p = std::stod(predictor_spec.substr(9));
        predict = [p](const std::vector<Image>& xs) {
            return std::vector<double>(xs.size(), p);
        };
    } else if (predictor_spec == "hematoxylin") {
        // stain-derived heuristic: mean hematoxylin concentration per patch
        predict = [](const std::vector<Image>& xs) {
            std::vector<double> out;
            out.reserve(xs.size());
            for (const auto& img : xs) {
                const Image od = stainsep::rgb_to_od(img);
                const auto cm = stainsep::deconvolve(od, stainsep::StainMatrix::default_he());
                double s = 0.0;
                const size_t npix = static_cast<size_t>(od.h) * od.w;
                for (size_t i = 0; i < npix; ++i) s += cm.conc.px[i * 3];
                out.push_back(std::min(1.0, 2.5 * s / static_cast<double>(npix)));
            }
            return out;
        };
    } else {
        throw ConfigError("heatmap: unknown predictor '" + predictor_spec + "'");
    }

    std::vector<std::vector<double>> feats;
    std::vector<std::string> ids;
    std::vector<std::string> outputs;
    for (const auto& s : slides) {
        wsiheat::HeatMap map = wsiheat::build_heatmap(predict, s, patch_size, stride);
        feats.push_back(wsiheat::extract_features(map));
        ids.push_back(s.id);
        wsiheat::save_heatmap((fs::path(dir) / ("heat_" + s.id)).string(), map);
        write_ppm((fs::path(dir) / ("overlay_" + s.id + ".ppm")).string(),
                  wsiheat::render_overlay(s.pixels, map));
        outputs.push_back("heat_" + s.id + ".f32");
        outputs.push_back("overlay_" + s.id + ".ppm");
    }
    wsiheat::save_feature_csv((fs::path(dir) / "features.csv").string(), ids, labels, feats);
    outputs.push_back("features.csv");

    // Disjoint train/test split over slides, stratified by label.
    std::vector<size_t> tr, te;
    {
        std::vector<size_t> pos, neg;
        for (size_t i = 0; i < slides.size(); ++i) (labels[i] ? pos : neg).push_back(i);
        Rng rng(derive_seed(seed, 0xF0));
        rng.shuffle(pos);
        rng.shuffle(neg);
        for (auto& grp : {pos, neg}) {
            const size_t k = static_cast<size_t>(train_frac * static_cast<double>(grp.size()));
            for (size_t i = 0; i < grp.size(); ++i) (i < k ? tr : te).push_back(grp[i]);
        }
    }
    std::vector<std::vector<double>> trf, tef;
    std::vector<int> trl, tel;
    std::vector<std::string> teids;
    for (size_t i : tr) {
        trf.push_back(feats[i]);
        trl.push_back(labels[i]);
    }
    for (size_t i : te) {
        tef.push_back(feats[i]);
        tel.push_back(labels[i]);
        teids.push_back(ids[i]);
    }
    forest::ForestConfig fc;
    fc.n_trees = hj.value("forest_trees", 100);
    fc.seed = hj.value("forest_seed", static_cast<uint64_t>(0));
    const auto rep = wsiheat::classify_slides(trf, trl, tef, tel, fc);

    {
        std::ofstream f(fs::path(dir) / "scores.csv");
        f << "slide_id,label,score\n";
        for (size_t i = 0; i < teids.size(); ++i)
            f << teids[i] << "," << tel[i] << "," << rep.scores[i] << "\n";
    }
    json metrics{{"slide_auc", rep.auc}, {"average_precision", rep.average_precision},
                 {"forest_trees", fc.n_trees}, {"forest_seed", fc.seed}};
    {
        std::ofstream f(fs::path(dir) / "metrics.json");
        f << metrics.dump(2) << "\n";
    }
    outputs.push_back("scores.csv");
    outputs.push_back("metrics.json");
    if (!args.quiet)
        std::cout << "slide auc " << rep.auc << ", average precision " << rep.average_precision
                  << "\n";
    runio::write_run_record(dir, cfg.dump(), seed, outputs);
    return 0;
}

int cmd_pretext_preview(const CommonArgs& args) {
    json cfg = load_config(args.config_path);
    require_keys(cfg, "config", {"version", "preview", "data"});
    require_keys(cfg.at("preview"), "preview", {"tasks", "samples", "seed"});
    DataSection sec = parse_data(cfg.at("data"), "data");
    std::vector<std::string> tasks =
        cfg.at("preview").value("tasks", std::vector<std::string>{"rotation", "flipping",
                                                                  "magnification", "jigmag",
                                                                  "hematoxylin"});
    const int n_samples = cfg.at("preview").value("samples", 4);
    uint64_t seed = cfg.at("preview").value("seed", sec.params.seed);
    if (args.seed_override >= 0) seed = static_cast<uint64_t>(args.seed_override);

    const std::string dir = start_run(args, cfg, seed);
    datagen::Dataset data = realize_dataset(sec, 0);
    const int ps = data.manifest.patch_size;

    Rng rng(seed);
    std::vector<size_t> train = data.manifest.split_indices("train");
    if (train.empty()) throw DataError("preview: dataset has no train entries");

    const int cell = ps + 14;
    Image grid(static_cast<int>(tasks.size()) * cell, n_samples * cell, 3, 1.f);
    for (size_t row = 0; row < tasks.size(); ++row) {
        const pretext::TaskSpec spec = pretext::task_by_name(tasks[row]);
        for (int coli = 0; coli < n_samples; ++coli) {
            const auto& e = data.manifest.entries[train[rng.uniform_index(train.size())]];
            const auto& slide = data.slide_of(e);
            pretext::PretextExample ex;
            if (spec.kind == pretext::TaskKind::Classification && spec.num_classes > 0) {
                const int r = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(spec.num_classes)));
                if (spec.name == "rotation")
                    ex = pretext::rotate_example(data.patch(e), r);
                else if (spec.name == "flipping")
                    ex = pretext::flip_example(data.patch(e), r % 2);
                else if (spec.name == "magnification") {
                    ex.input = datagen::sample_at(slide, e.x, e.y, ps,
                                                  static_cast<datagen::Mag>(r)).image;
                    ex.class_label = r;
                } else if (spec.name == "jigmag") {
                    auto pyr = datagen::sample_pyramid(slide, e.x, e.y, ps,
                                                       {datagen::Mag::x40, datagen::Mag::x20,
                                                        datagen::Mag::x10, datagen::Mag::x5});
                    ex = pretext::jigmag_example(pyr, r);
                } else {
                    throw ConfigError("preview: unsupported task '" + spec.name + "'");
                }
            } else if (spec.name == "hematoxylin") {
                ex = pretext::hematoxylin_example(data.patch(e));
                // show the 1-channel target
                Image vis(ex.target.h, ex.target.w, 3);
                for (int p = 0; p < vis.h * vis.w; ++p)
                    for (int c = 0; c < 3; ++c) vis.px[static_cast<size_t>(p) * 3 + c] = ex.target.px[static_cast<size_t>(p)];
                ex.input = vis;
                ex.class_label = -1;
            } else if (spec.name == "autoencoder") {
                ex = pretext::autoencoder_example(data.patch(e));
            } else {
                throw ConfigError("preview: unsupported task '" + spec.name + "'");
            }
            const int oy = static_cast<int>(row) * cell + 12;
            const int ox = coli * cell;
            for (int y = 0; y < ex.input.h && y < ps; ++y)
                for (int x = 0; x < ex.input.w && x < ps; ++x)
                    for (int c = 0; c < 3; ++c)
                        grid.at(oy + y, ox + x, c) = ex.input.at(y, x, std::min(c, ex.input.c - 1));
            if (ex.class_label >= 0)
                plot::draw_text(grid, static_cast<int>(row) * cell + 2, ox + 2,
                                std::to_string(ex.class_label), 0.f, 0.f, 0.f, 2);
        }
    }
    write_ppm((fs::path(dir) / "preview.ppm").string(), grid);
    if (!args.quiet) std::cout << "wrote preview.ppm (" << tasks.size() << " tasks x "
                               << n_samples << " samples)\n";
    runio::write_run_record(dir, cfg.dump(), seed, {"preview.ppm"});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-histology self-supervision workbench"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "JSON config file")->required();
        sub->add_option("--seed", args.seed_override, "override the config seed");
        sub->add_option("--out", args.out_root, "output root directory");
        sub->add_flag("--quiet", args.quiet, "suppress progress output");
    };

    auto* sub_datagen = app.add_subcommand("datagen", "generate slides, patches and a manifest");
    auto* sub_train = app.add_subcommand("train", "train (semi | da | generative)");
    auto* sub_sweep = app.add_subcommand("sweep", "annotation-budget sweep with seeds and arms");
    auto* sub_heatmap = app.add_subcommand("heatmap", "slide heat maps, features and slide scores");
    auto* sub_preview = app.add_subcommand("pretext-preview", "render transformed task inputs");
    for (auto* s : {sub_datagen, sub_train, sub_sweep, sub_heatmap, sub_preview}) add_common(s);

    try {
        app.parse(argc, argv);
        if (sub_datagen->parsed()) return cmd_datagen(args);
        if (sub_train->parsed()) return cmd_train(args);
        if (sub_sweep->parsed()) return cmd_sweep(args);
        if (sub_heatmap->parsed()) return cmd_heatmap(args);
        if (sub_preview->parsed()) return cmd_pretext_preview(args);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const selfpath::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const selfpath::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const selfpath::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
