#pragma once

#include "selfpath/datagen.hpp"
#include "selfpath/model.hpp"
#include "selfpath/pretext.hpp"

#include <string>
#include <vector>

namespace selfpath::trainer {

struct TaskSetting {
    std::string name;
    double weight = 1.0;  // alpha; 0 disables the task entirely
};

struct TrainConfig {
    std::string mode = "semi";  // semi | da | generative
    std::vector<TaskSetting> tasks;
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
    double label_budget = 1.0;
    model::EncoderConfig encoder;
    double grl_lambda = 1.0;
    bool swap_real_fake = false;  // false = discriminator loss exactly as printed
    int noise_dim = 64;
    bool quiet = true;

    // Published defaults: semi/da 200 epochs, batch 64, lr 1e-3;
    // generative 500 epochs, batch 32, lr 3e-4. Task weights default to 1.
    static TrainConfig defaults(const std::string& mode);
};

struct TaskLossEntry {
    std::string name;
    double alpha = 1.0;
    double labeled = 0.0;    // pool means; for the generative task these are
    double unlabeled = 0.0;  // the real / generated discriminator terms
};

struct LossReport {
    long long step = 0;
    double main_loss = 0.0;
    std::vector<TaskLossEntry> tasks;
    double total = 0.0;
    double gen_loss = 0.0;  // generator feature-matching loss (generative mode)

    // total recomputed from the parts, in composition order.
    double recompose() const;
};

struct MetricRecord {
    long long step = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
};

struct MetricHistory {
    std::vector<MetricRecord> records;
    void add(long long step, const std::string& split, const std::string& metric, double value) {
        records.push_back({step, split, metric, value});
    }
    // Line-delimited records: step,split,metric,value
    void save(const std::string& path) const;
};

struct TrainResult {
    model::ModelGraph model;  // parameters of the best-validation-AUC epoch
    MetricHistory history;
    std::vector<LossReport> loss_trace;
    double best_val_auc = 0.0;
    double test_auc = 0.0;
};

// Cycles a seeded shuffled index list; reshuffles at each wrap.
class Cycler {
public:
    Cycler(std::vector<size_t> indices, uint64_t seed) : idx_(std::move(indices)), rng_(seed) {
        if (!idx_.empty()) rng_.shuffle(idx_);
    }
    bool empty() const { return idx_.empty(); }
    size_t size() const { return idx_.size(); }
    std::vector<size_t> next(size_t k);

private:
    std::vector<size_t> idx_;
    size_t pos_ = 0;
    Rng rng_;
};

// One pool of a step batch; entries point into ds->manifest.
struct PoolBatch {
    const datagen::Dataset* ds = nullptr;
    std::vector<size_t> entries;
    std::vector<Image> images;
    std::vector<int> labels;        // class labels (labeled pool only)
    std::vector<int> domain_labels; // filled in da mode
};

PoolBatch materialize(const datagen::Dataset& ds, const std::vector<size_t>& entries,
                      bool with_labels);

// Eq-1 step: main cross-entropy over the labeled pool plus every active
// pretext task over its pools, each scaled by alpha. Pretext labels r are
// drawn fresh from rng. When backward is set, gradients accumulate into the
// model (a zero_grad is the caller's job).
LossReport multitask_loss(model::ModelGraph& m, const PoolBatch& labeled,
                          const PoolBatch& unlabeled, const std::vector<TaskSetting>& tasks,
                          Rng& rng, bool backward);

// Mean |features| per dimension over the batch.
std::vector<double> mean_abs_features(const model::Tensor& feats);
// || real_mean_abs - mean_abs(gen_feats) ||_1 with gradient wrt gen features.
double feature_matching_loss(const std::vector<double>& real_mean_abs,
                             const model::Tensor& gen_feats, model::Tensor* dgen);

// Builds encoder + main classifier + one head per configured task.
model::ModelGraph build_model(const TrainConfig& cfg, int num_classes);

// AUC of the named split (binary: class-1 score; multiclass: macro AUC).
double evaluate_auc(model::ModelGraph& m, const datagen::Dataset& ds,
                    const std::string& split, int batch_size);

TrainResult train_semi(const TrainConfig& cfg, const datagen::Dataset& data);
TrainResult train_da(const TrainConfig& cfg, const datagen::Dataset& source,
                     const datagen::Dataset& target);
TrainResult train_generative(const TrainConfig& cfg, const datagen::Dataset& data);

// Dispatch on cfg.mode (semi and generative take one dataset).
TrainResult train(const TrainConfig& cfg, const std::vector<const datagen::Dataset*>& datasets);

}  // namespace selfpath::trainer
