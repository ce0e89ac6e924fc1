#include "selfpath/trainer.hpp"

#include "selfpath/evalkit.hpp"
#include "selfpath/stainsep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace selfpath::trainer {

using model::Tensor;

TrainConfig TrainConfig::defaults(const std::string& mode) {
    TrainConfig cfg;
    cfg.mode = mode;
    if (mode == "generative") {
        cfg.epochs = 500;
        cfg.batch_size = 32;
        cfg.learning_rate = 3e-4;
    } else if (mode == "semi" || mode == "da") {
        cfg.epochs = 200;
        cfg.batch_size = 64;
        cfg.learning_rate = 1e-3;
    } else {
        throw ConfigError("unknown training mode '" + mode + "'");
    }
    return cfg;
}

double LossReport::recompose() const {
    double t = main_loss;
    for (const auto& e : tasks) t += e.alpha * (e.labeled + e.unlabeled);
    return t;
}

void MetricHistory::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("metrics: cannot open " + path);
    f.precision(17);
    for (const auto& r : records)
        f << r.step << "," << r.split << "," << r.metric << "," << r.value << "\n";
}

std::vector<size_t> Cycler::next(size_t k) {
    std::vector<size_t> out;
    if (idx_.empty()) return out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) {
        if (pos_ >= idx_.size()) {
            rng_.shuffle(idx_);
            pos_ = 0;
        }
        out.push_back(idx_[pos_++]);
    }
    return out;
}

PoolBatch materialize(const datagen::Dataset& ds, const std::vector<size_t>& entries,
                      bool with_labels) {
    PoolBatch b;
    b.ds = &ds;
    b.entries = entries;
    b.images.resize(entries.size());
    const int workers = pipeline_workers();
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long long i = 0; i < static_cast<long long>(entries.size()); ++i)
        b.images[static_cast<size_t>(i)] = ds.patch(ds.manifest.entries[entries[static_cast<size_t>(i)]]);
    if (with_labels) {
        b.labels.reserve(entries.size());
        for (size_t e : entries) {
            const int y = ds.manifest.entries[e].label;
            if (y < 0) throw DataError("materialize: unlabeled entry in labeled pool");
            b.labels.push_back(y);
        }
    }
    return b;
}

namespace {

// Mean classification loss of one pool under one pretext task; backward is
// scaled by alpha.
double pretext_class_pool(model::ModelGraph& m, const pretext::TaskSpec& spec,
                          const PoolBatch& pool, Rng& rng, double alpha, bool backward) {
    const size_t n = pool.images.size();
    std::vector<int> rs(n);
    for (size_t i = 0; i < n; ++i) rs[i] = static_cast<int>(rng.uniform_index(
        static_cast<uint64_t>(spec.num_classes)));

    std::vector<Image> inputs(n);
    const int workers = pipeline_workers();
    const int patch = pool.ds ? pool.ds->manifest.patch_size : pool.images[0].h;
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        const auto i = static_cast<size_t>(ii);
        if (spec.name == "rotation") {
            inputs[i] = pretext::rotate_example(pool.images[i], rs[i]).input;
        } else if (spec.name == "flipping") {
            inputs[i] = pretext::flip_example(pool.images[i], rs[i]).input;
        } else if (spec.name == "magnification") {
            const auto& e = pool.ds->manifest.entries[pool.entries[i]];
            inputs[i] = datagen::sample_at(pool.ds->slide_of(e), e.x, e.y, patch,
                                           static_cast<datagen::Mag>(rs[i])).image;
        } else if (spec.name == "jigmag") {
            const auto& e = pool.ds->manifest.entries[pool.entries[i]];
            auto pyramid = datagen::sample_pyramid(
                pool.ds->slide_of(e), e.x, e.y, patch,
                {datagen::Mag::x40, datagen::Mag::x20, datagen::Mag::x10, datagen::Mag::x5});
            inputs[i] = pretext::jigmag_example(pyramid, rs[i]).input;
        }
    }

    Tensor x = model::to_tensor(inputs);
    Tensor f = m.forward_shared(x);
    Tensor logits = m.head_forward(spec.name, f);
    Tensor dlogits;
    const double loss = model::softmax_ce(logits, rs, backward ? &dlogits : nullptr);
    if (backward) {
        for (float& g : dlogits.v) g = static_cast<float>(g * alpha);
        m.backward_shared(m.head_backward(spec.name, dlogits));
    }
    return loss;
}

double pretext_pixel_pool(model::ModelGraph& m, const pretext::TaskSpec& spec,
                          const PoolBatch& pool, double alpha, bool backward) {
    const size_t n = pool.images.size();
    std::vector<Image> targets(n);
    const int workers = pipeline_workers();
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        const auto i = static_cast<size_t>(ii);
        targets[i] = spec.name == "hematoxylin"
                         ? pretext::hematoxylin_example(pool.images[i]).target
                         : pool.images[i];
    }
    Tensor x = model::to_tensor(pool.images);
    Tensor t = model::to_tensor(targets);
    Tensor f = m.forward_shared(x);
    Tensor pred = m.head_forward(spec.name, f);
    Tensor dpred;
    const double loss = model::l1_loss(pred, t, backward ? &dpred : nullptr);
    if (backward) {
        for (float& g : dpred.v) g = static_cast<float>(g * alpha);
        m.backward_shared(m.head_backward(spec.name, dpred));
    }
    return loss;
}

double domain_pool(model::ModelGraph& m, const PoolBatch& pool, double alpha, bool backward) {
    if (pool.domain_labels.size() != pool.images.size())
        throw ConfigError("domain task: pool has no domain labels");
    Tensor x = model::to_tensor(pool.images);
    Tensor f = m.forward_shared(x);
    Tensor logits = m.head_forward("domain", f);
    Tensor dlogits;
    const double loss = model::softmax_ce(logits, pool.domain_labels, backward ? &dlogits : nullptr);
    if (backward) {
        for (float& g : dlogits.v) g = static_cast<float>(g * alpha);
        m.backward_shared(m.head_backward("domain", dlogits));
    }
    return loss;
}

}  // namespace

LossReport multitask_loss(model::ModelGraph& m, const PoolBatch& labeled,
                          const PoolBatch& unlabeled, const std::vector<TaskSetting>& tasks,
                          Rng& rng, bool backward) {
    LossReport rep;
    if (!labeled.images.empty()) {
        Tensor x = model::to_tensor(labeled.images);
        Tensor f = m.forward_shared(x);
        Tensor logits = m.head_forward("main", f);
        Tensor dlogits;
        rep.main_loss = model::softmax_ce(logits, labeled.labels, backward ? &dlogits : nullptr);
        if (backward) m.backward_shared(m.head_backward("main", dlogits));
    }
    rep.total = rep.main_loss;
    for (const auto& task : tasks) {
        if (task.weight == 0.0) continue;
        if (task.weight < 0.0) throw ConfigError("task weight must be >= 0");
        const pretext::TaskSpec spec = pretext::task_by_name(task.name);
        if (spec.kind == pretext::TaskKind::Adversarial)
            throw ConfigError("task '" + task.name + "' requires the generative regime");
        if (!m.has_head(task.name))
            throw ConfigError("task '" + task.name + "' references a missing head");
        TaskLossEntry e;
        e.name = task.name;
        e.alpha = task.weight;
        if (task.name == "domain") {
            if (!labeled.images.empty()) e.labeled = domain_pool(m, labeled, task.weight, backward);
            if (!unlabeled.images.empty()) e.unlabeled = domain_pool(m, unlabeled, task.weight, backward);
        } else if (spec.kind == pretext::TaskKind::Classification) {
            if (spec.uses_labeled && !labeled.images.empty())
                e.labeled = pretext_class_pool(m, spec, labeled, rng, task.weight, backward);
            if (spec.uses_unlabeled && !unlabeled.images.empty())
                e.unlabeled = pretext_class_pool(m, spec, unlabeled, rng, task.weight, backward);
        } else {
            if (spec.uses_labeled && !labeled.images.empty())
                e.labeled = pretext_pixel_pool(m, spec, labeled, task.weight, backward);
            if (spec.uses_unlabeled && !unlabeled.images.empty())
                e.unlabeled = pretext_pixel_pool(m, spec, unlabeled, task.weight, backward);
        }
        rep.tasks.push_back(e);
        rep.total += task.weight * (e.labeled + e.unlabeled);
    }
    return rep;
}

std::vector<double> mean_abs_features(const Tensor& feats) {
    std::vector<double> out(static_cast<size_t>(feats.c), 0.0);
    for (int i = 0; i < feats.n; ++i)
        for (int j = 0; j < feats.c; ++j)
            out[static_cast<size_t>(j)] += std::abs(feats.v[static_cast<size_t>(i) * feats.c + j]);
    for (double& v : out) v /= feats.n;
    return out;
}

double feature_matching_loss(const std::vector<double>& real_mean_abs,
                             const Tensor& gen_feats, Tensor* dgen) {
    if (static_cast<int>(real_mean_abs.size()) != gen_feats.c)
        throw ConfigError("feature_matching_loss: dimension mismatch");
    const std::vector<double> mg = mean_abs_features(gen_feats);
    double loss = 0.0;
    if (dgen) *dgen = Tensor(gen_feats.n, gen_feats.c, 1, 1);
    for (int j = 0; j < gen_feats.c; ++j) {
        const double d = real_mean_abs[static_cast<size_t>(j)] - mg[static_cast<size_t>(j)];
        loss += std::abs(d);
        if (dgen) {
            const double sd = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            for (int i = 0; i < gen_feats.n; ++i) {
                const float f = gen_feats.v[static_cast<size_t>(i) * gen_feats.c + j];
                const double sf = f > 0.f ? 1.0 : (f < 0.f ? -1.0 : 0.0);
                dgen->v[static_cast<size_t>(i) * gen_feats.c + j] =
                    static_cast<float>(-sd * sf / gen_feats.n);
            }
        }
    }
    return loss;
}

model::ModelGraph build_model(const TrainConfig& cfg, int num_classes) {
    model::ModelGraph m(cfg.encoder, cfg.seed);
    m.add_classifier_head("main", num_classes);
    if (cfg.mode == "da") m.add_domain_head("domain", cfg.grl_lambda);
    for (const auto& t : cfg.tasks) {
        if (t.weight == 0.0) continue;
        if (t.name == "domain") continue;  // added above in da mode
        const pretext::TaskSpec spec = pretext::task_by_name(t.name);
        if (spec.kind == pretext::TaskKind::Classification)
            m.add_classifier_head(t.name, spec.num_classes);
        else if (spec.kind == pretext::TaskKind::Pixelwise)
            m.add_decoder_head(t.name, spec.target_channels);
        else if (t.name == "generative") {
            m.add_discriminator_head("dis");
            m.add_generator({cfg.noise_dim, cfg.encoder.input_size, 3});
        }
    }
    return m;
}

double evaluate_auc(model::ModelGraph& m, const datagen::Dataset& ds,
                    const std::string& split, int batch_size) {
    std::vector<size_t> idx;
    for (size_t i : ds.manifest.split_indices(split))
        if (ds.manifest.entries[i].label >= 0) idx.push_back(i);
    if (idx.empty()) throw DataError("evaluate_auc: split '" + split + "' has no labeled entries");

    const int k = ds.manifest.num_classes;
    std::vector<std::vector<double>> probs;
    std::vector<int> labels;
    for (size_t off = 0; off < idx.size(); off += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(idx.size(), off + static_cast<size_t>(batch_size));
        std::vector<size_t> chunk(idx.begin() + static_cast<long>(off), idx.begin() + static_cast<long>(end));
        PoolBatch batch = materialize(ds, chunk, true);
        Tensor p = m.predict_proba(model::to_tensor(batch.images));
        for (int i = 0; i < p.n; ++i) {
            std::vector<double> row(static_cast<size_t>(k));
            for (int j = 0; j < k; ++j) row[static_cast<size_t>(j)] = p.v[static_cast<size_t>(i) * k + j];
            probs.push_back(std::move(row));
            labels.push_back(batch.labels[static_cast<size_t>(i)]);
        }
    }
    if (k == 2) {
        std::vector<double> scores;
        scores.reserve(probs.size());
        for (const auto& r : probs) scores.push_back(r[1]);
        return evalkit::auc_roc(scores, labels);
    }
    return evalkit::macro_auc(probs, labels, k);
}

namespace {

struct LoopState {
    model::Adam opt;
    std::vector<model::Param> params;
    long long step = 0;
    double best_val = -1.0;
    std::vector<std::vector<float>> best_snap;

    explicit LoopState(double lr) : opt(lr) {}
};

void log_report(MetricHistory& hist, const LossReport& rep, const std::string& mode) {
    hist.add(rep.step, "train", "loss_total", rep.total);
    hist.add(rep.step, "train", "loss_main", rep.main_loss);
    for (const auto& t : rep.tasks)
        hist.add(rep.step, "train", "loss_" + t.name, t.alpha * (t.labeled + t.unlabeled));
    if (mode == "generative") hist.add(rep.step, "train", "loss_gen", rep.gen_loss);
}

void check_finite(const LossReport& rep) {
    if (!std::isfinite(rep.total) || !std::isfinite(rep.gen_loss))
        throw NumericError("non-finite loss at step " + std::to_string(rep.step) +
                           " (total=" + std::to_string(rep.total) +
                           ", gen=" + std::to_string(rep.gen_loss) + "); aborting run");
}

}  // namespace

TrainResult train_semi(const TrainConfig& cfg, const datagen::Dataset& data) {
    if (cfg.mode != "semi") throw ConfigError("train_semi requires mode=semi");
    const auto labeled_idx = data.manifest.labeled_train_indices();
    if (labeled_idx.empty()) throw ConfigError("train_semi: empty labeled pool");

    auto driver_idx = data.manifest.unlabeled_train_indices();
    const bool have_unlabeled = !driver_idx.empty();
    if (!have_unlabeled) driver_idx = data.manifest.split_indices("train");

    model::ModelGraph m = build_model(cfg, data.manifest.num_classes);
    LoopState st(cfg.learning_rate);
    st.params = m.params();

    Rng data_rng(derive_seed(cfg.seed, 1));
    Cycler labeled_pool(labeled_idx, derive_seed(cfg.seed, 2));
    const size_t lb = std::min<size_t>(static_cast<size_t>(cfg.batch_size), labeled_idx.size());

    TrainResult res{std::move(m), {}, {}, 0.0, 0.0};
    const bool track_val = !data.manifest.split_indices("val").empty();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        data_rng.shuffle(driver_idx);
        for (size_t off = 0; off < driver_idx.size(); off += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(driver_idx.size(), off + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> chunk(driver_idx.begin() + static_cast<long>(off),
                                      driver_idx.begin() + static_cast<long>(end));
            PoolBatch unl;
            if (have_unlabeled) unl = materialize(data, chunk, false);
            PoolBatch lab = materialize(data, labeled_pool.next(lb), true);

            st.opt.zero_grad(st.params);
            LossReport rep = multitask_loss(res.model, lab, unl, cfg.tasks, data_rng, true);
            rep.step = st.step;
            check_finite(rep);
            st.opt.step(st.params);
            log_report(res.history, rep, cfg.mode);
            res.loss_trace.push_back(rep);
            ++st.step;
        }
        if (track_val) {
            const double auc = evaluate_auc(res.model, data, "val", cfg.batch_size);
            res.history.add(st.step, "val", "auc", auc);
            if (auc > st.best_val) {
                st.best_val = auc;
                st.best_snap = res.model.snapshot();
            }
            if (!cfg.quiet)
                std::cerr << "epoch " << epoch << " val auc " << auc << "\n";
        }
    }
    if (!st.best_snap.empty()) res.model.restore(st.best_snap);
    res.best_val_auc = st.best_val;
    if (!data.manifest.split_indices("test").empty()) {
        res.test_auc = evaluate_auc(res.model, data, "test", cfg.batch_size);
        res.history.add(st.step, "test", "auc", res.test_auc);
    }
    return res;
}

TrainResult train_da(const TrainConfig& cfg, const datagen::Dataset& source,
                     const datagen::Dataset& target) {
    if (cfg.mode != "da") throw ConfigError("train_da requires mode=da");
    if (source.domain == target.domain)
        throw ConfigError("train_da: source and target share the domain identifier '" +
                          source.domain + "'");
    const auto labeled_idx = source.manifest.labeled_train_indices();
    if (labeled_idx.empty()) throw ConfigError("train_da: empty labeled source pool");

    // The domain task is part of the regime; add it if the config left it out.
    std::vector<TaskSetting> tasks = cfg.tasks;
    if (std::none_of(tasks.begin(), tasks.end(),
                     [](const TaskSetting& t) { return t.name == "domain"; }))
        tasks.push_back({"domain", 1.0});

    auto driver_idx = target.manifest.split_indices("train");
    if (driver_idx.empty()) throw ConfigError("train_da: target has no train entries");

    model::ModelGraph m = build_model(cfg, source.manifest.num_classes);
    LoopState st(cfg.learning_rate);
    st.params = m.params();

    Rng data_rng(derive_seed(cfg.seed, 1));
    Cycler labeled_pool(labeled_idx, derive_seed(cfg.seed, 2));
    const size_t lb = std::min<size_t>(static_cast<size_t>(cfg.batch_size), labeled_idx.size());

    TrainResult res{std::move(m), {}, {}, 0.0, 0.0};
    const bool track_val = !target.manifest.split_indices("val").empty();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        data_rng.shuffle(driver_idx);
        for (size_t off = 0; off < driver_idx.size(); off += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(driver_idx.size(), off + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> chunk(driver_idx.begin() + static_cast<long>(off),
                                      driver_idx.begin() + static_cast<long>(end));
            PoolBatch tgt = materialize(target, chunk, false);
            tgt.domain_labels.assign(tgt.images.size(), 1);
            PoolBatch src = materialize(source, labeled_pool.next(lb), true);
            src.domain_labels.assign(src.images.size(), 0);

            st.opt.zero_grad(st.params);
            LossReport rep = multitask_loss(res.model, src, tgt, tasks, data_rng, true);
            rep.step = st.step;
            check_finite(rep);
            st.opt.step(st.params);
            log_report(res.history, rep, cfg.mode);
            res.loss_trace.push_back(rep);
            ++st.step;
        }
        if (track_val) {
            const double auc = evaluate_auc(res.model, target, "val", cfg.batch_size);
            res.history.add(st.step, "val", "auc", auc);
            if (auc > st.best_val) {
                st.best_val = auc;
                st.best_snap = res.model.snapshot();
            }
            if (!cfg.quiet)
                std::cerr << "epoch " << epoch << " target val auc " << auc << "\n";
        }
    }
    if (!st.best_snap.empty()) res.model.restore(st.best_snap);
    res.best_val_auc = st.best_val;
    if (!target.manifest.split_indices("test").empty()) {
        res.test_auc = evaluate_auc(res.model, target, "test", cfg.batch_size);
        res.history.add(st.step, "test", "auc", res.test_auc);
    }
    return res;
}

TrainResult train_generative(const TrainConfig& cfg, const datagen::Dataset& data) {
    if (cfg.mode != "generative") throw ConfigError("train_generative requires mode=generative");
    if (cfg.encoder.arch != "small-conv")
        throw ConfigError("the generative regime requires the small-conv encoder preset");
    const auto labeled_idx = data.manifest.labeled_train_indices();
    if (labeled_idx.empty()) throw ConfigError("train_generative: empty labeled pool");

    double alpha = 1.0;
    for (const auto& t : cfg.tasks)
        if (t.name == "generative") alpha = t.weight;

    TrainConfig model_cfg = cfg;
    if (std::none_of(model_cfg.tasks.begin(), model_cfg.tasks.end(),
                     [](const TaskSetting& t) { return t.name == "generative"; }))
        model_cfg.tasks.push_back({"generative", alpha});
    model::ModelGraph m = build_model(model_cfg, data.manifest.num_classes);
    if (!m.has_generator()) throw ConfigError("train_generative: generative task weight is 0");

    auto driver_idx = data.manifest.unlabeled_train_indices();
    if (driver_idx.empty()) driver_idx = data.manifest.split_indices("train");

    model::Adam opt_d(cfg.learning_rate);
    model::Adam opt_g(cfg.learning_rate);
    TrainResult res{std::move(m), {}, {}, 0.0, 0.0};

    std::vector<model::Param> d_params = res.model.encoder_params();
    for (auto& p : res.model.head_params("main")) d_params.push_back(p);
    for (auto& p : res.model.head_params("dis")) d_params.push_back(p);
    std::vector<model::Param> g_params = res.model.generator_params();
    std::vector<model::Param> all_params = res.model.params();

    Rng data_rng(derive_seed(cfg.seed, 1));
    Cycler labeled_pool(labeled_idx, derive_seed(cfg.seed, 2));
    const size_t lb = std::min<size_t>(static_cast<size_t>(cfg.batch_size), labeled_idx.size());
    const int nz = res.model.generator_config().noise_dim;

    long long step = 0;
    double best_val = -1.0;
    std::vector<std::vector<float>> best_snap;
    const bool track_val = !data.manifest.split_indices("val").empty();

    auto draw_noise = [&](int n) {
        Tensor z(n, nz, 1, 1);
        for (float& v : z.v) v = static_cast<float>(data_rng.uniform(-1.0, 1.0));
        return z;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        data_rng.shuffle(driver_idx);
        for (size_t off = 0; off < driver_idx.size(); off += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(driver_idx.size(), off + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> chunk(driver_idx.begin() + static_cast<long>(off),
                                      driver_idx.begin() + static_cast<long>(end));
            PoolBatch real = materialize(data, chunk, false);
            PoolBatch lab = materialize(data, labeled_pool.next(lb), true);

            // Discriminator/encoder phase: L_c + alpha * L_dis.
            opt_d.zero_grad(all_params);
            LossReport rep;
            rep.step = step;
            {
                Tensor x = model::to_tensor(lab.images);
                Tensor f = res.model.forward_shared(x);
                Tensor logits = res.model.head_forward("main", f);
                Tensor dlogits;
                rep.main_loss = model::softmax_ce(logits, lab.labels, &dlogits);
                res.model.backward_shared(res.model.head_backward("main", dlogits));
            }
            std::vector<double> real_feat_mean;
            double term_real = 0.0, term_fake = 0.0;
            {
                Tensor xr = model::to_tensor(real.images);
                Tensor fr = res.model.forward_shared(xr);
                real_feat_mean = mean_abs_features(fr);
                Tensor logits = res.model.head_forward("dis", fr);
                Tensor dlogits;
                term_real = cfg.swap_real_fake
                                ? model::neg_log_sigmoid_mean(logits, &dlogits)
                                : model::neg_log_one_minus_sigmoid_mean(logits, &dlogits);
                for (float& g : dlogits.v) g = static_cast<float>(g * alpha);
                res.model.backward_shared(res.model.head_backward("dis", dlogits));
            }
            {
                Tensor z = draw_noise(static_cast<int>(real.images.size()));
                Tensor fake = res.model.generator_forward(z);  // constant for this phase
                Tensor ff = res.model.forward_shared(fake);
                Tensor logits = res.model.head_forward("dis", ff);
                Tensor dlogits;
                term_fake = cfg.swap_real_fake
                                ? model::neg_log_one_minus_sigmoid_mean(logits, &dlogits)
                                : model::neg_log_sigmoid_mean(logits, &dlogits);
                for (float& g : dlogits.v) g = static_cast<float>(g * alpha);
                res.model.backward_shared(res.model.head_backward("dis", dlogits));
            }
            rep.tasks.push_back({"generative", alpha, term_real, term_fake});
            rep.total = rep.main_loss + alpha * (term_real + term_fake);
            opt_d.step(d_params);

            // Generator phase: feature matching against this step's real batch.
            opt_g.zero_grad(all_params);
            {
                Tensor z = draw_noise(static_cast<int>(real.images.size()));
                Tensor fake = res.model.generator_forward(z);
                Tensor fg = res.model.forward_shared(fake);
                Tensor dfeat;
                rep.gen_loss = feature_matching_loss(real_feat_mean, fg, &dfeat);
                Tensor dimg = res.model.backward_shared(dfeat);
                res.model.generator_backward(dimg);
            }
            opt_g.step(g_params);

            check_finite(rep);
            log_report(res.history, rep, cfg.mode);
            res.history.add(step, "train", "loss_dis", alpha * (term_real + term_fake));
            res.loss_trace.push_back(rep);
            ++step;
        }
        if (track_val) {
            const double auc = evaluate_auc(res.model, data, "val", cfg.batch_size);
            res.history.add(step, "val", "auc", auc);
            if (auc > best_val) {
                best_val = auc;
                best_snap = res.model.snapshot();
            }
            if (!cfg.quiet)
                std::cerr << "epoch " << epoch << " val auc " << auc << "\n";
        }
    }
    if (!best_snap.empty()) res.model.restore(best_snap);
    res.best_val_auc = best_val;
    if (!data.manifest.split_indices("test").empty()) {
        res.test_auc = evaluate_auc(res.model, data, "test", cfg.batch_size);
        res.history.add(step, "test", "auc", res.test_auc);
    }
    return res;
}

TrainResult train(const TrainConfig& cfg, const std::vector<const datagen::Dataset*>& datasets) {
    if (cfg.mode == "semi") {
        if (datasets.size() != 1) throw ConfigError("semi mode takes exactly one dataset");
        return train_semi(cfg, *datasets[0]);
    }
    if (cfg.mode == "da") {
        if (datasets.size() != 2) throw ConfigError("da mode takes source and target datasets");
        return train_da(cfg, *datasets[0], *datasets[1]);
    }
    if (cfg.mode == "generative") {
        if (datasets.size() != 1) throw ConfigError("generative mode takes exactly one dataset");
        return train_generative(cfg, *datasets[0]);
    }
    throw ConfigError("unknown training mode '" + cfg.mode + "'");
}

}  // namespace selfpath::trainer
