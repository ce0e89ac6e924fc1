#pragma once

#include "selfpath/datagen.hpp"
#include "selfpath/trainer.hpp"

#include <functional>
#include <string>
#include <vector>

namespace selfpath::evalkit {

// Mann-Whitney AUC via midranks; ties count 1/2. Labels are 0/1 and both
// classes must be present. Throws DataError otherwise.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Unweighted mean of K one-vs-rest AUCs; scores[i] has K class probabilities.
// Every class must appear in labels.
double macro_auc(const std::vector<std::vector<double>>& scores,
                 const std::vector<int>& labels, int num_classes);

double mean(const std::vector<double>& v);
double population_std(const std::vector<double>& v);

struct SweepArm {
    std::string name;
    std::vector<trainer::TaskSetting> tasks;
};

struct SweepConfig {
    datagen::DataParams data;      // the corpus; test split stays fixed
    trainer::TrainConfig train;    // per-cell seed/budget/tasks are overwritten
    std::vector<double> budgets;
    std::vector<uint64_t> seeds;
    std::vector<SweepArm> arms;
};

struct BudgetResult {
    std::string arm;
    double budget = 0.0;
    std::vector<double> per_seed_auc;
    double auc_mean = 0.0;
    double auc_std = 0.0;  // population std over seeds
    bool failed = false;
    std::string error;
};

// Runs one (arm, budget, seed) cell and returns its test AUC.
using CellRunner = std::function<double(const SweepArm& arm, double budget, uint64_t seed)>;

// Full protocol: one dataset, per-cell label resampling via apply_budget,
// training per arm, evaluation on the shared test split. A failing cell is
// recorded and the sweep continues.
std::vector<BudgetResult> budget_sweep(const SweepConfig& cfg);
// Aggregation-only variant with an injected runner (used by tests).
std::vector<BudgetResult> budget_sweep(const SweepConfig& cfg, const CellRunner& runner);

// Aligned plain-text table: one row per arm, one column per budget,
// cells "mean +- std" (population std over seeds, noted in the footer).
std::string format_table(const std::vector<BudgetResult>& results);

// Machine-readable records: arm,budget,seed,auc one line per cell run,
// then aggregate lines arm,budget,,mean,std.
void save_records(const std::string& path, const std::vector<BudgetResult>& results);

}  // namespace selfpath::evalkit
