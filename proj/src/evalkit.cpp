#include "selfpath/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace selfpath::evalkit {

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("auc_roc: scores and labels must be non-empty and equal length");
    const size_t n = scores.size();
    size_t n1 = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("auc_roc: labels must be 0/1");
        n1 += static_cast<size_t>(y);
    }
    const size_t n0 = n - n1;
    if (n1 == 0 || n0 == 0)
        throw DataError("auc_roc: undefined metric, both classes must be present");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups; rank sum of positives gives Mann-Whitney U.
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k] == 1) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
    return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

double macro_auc(const std::vector<std::vector<double>>& scores,
                 const std::vector<int>& labels, int num_classes) {
    if (num_classes < 2) throw DataError("macro_auc: need at least 2 classes");
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("macro_auc: scores and labels must be non-empty and equal length");
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<double> s;
        std::vector<int> y;
        s.reserve(scores.size());
        y.reserve(labels.size());
        bool present = false;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (static_cast<int>(scores[i].size()) != num_classes)
                throw DataError("macro_auc: score row width mismatch");
            s.push_back(scores[i][static_cast<size_t>(k)]);
            const int bin = labels[i] == k ? 1 : 0;
            present = present || bin == 1;
            y.push_back(bin);
        }
        if (!present)
            throw DataError("macro_auc: class " + std::to_string(k) + " missing from labels");
        sum += auc_roc(s, y);
    }
    return sum / num_classes;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<BudgetResult> budget_sweep(const SweepConfig& cfg, const CellRunner& runner) {
    if (cfg.seeds.empty()) throw ConfigError("budget_sweep: seeds must be non-empty");
    if (cfg.arms.empty()) throw ConfigError("budget_sweep: no arms configured");
    for (double b : cfg.budgets)
        if (b <= 0.0 || b > 1.0) throw ConfigError("budget_sweep: budgets must be in (0, 1]");

    std::vector<BudgetResult> results;
    for (const auto& arm : cfg.arms) {
        for (double budget : cfg.budgets) {
            BudgetResult r;
            r.arm = arm.name;
            r.budget = budget;
            for (uint64_t seed : cfg.seeds) {
                try {
                    r.per_seed_auc.push_back(runner(arm, budget, seed));
                } catch (const std::exception& e) {
                    r.failed = true;
                    r.error = e.what();
                }
            }
            r.auc_mean = mean(r.per_seed_auc);
            r.auc_std = population_std(r.per_seed_auc);
            results.push_back(std::move(r));
        }
    }
    return results;
}

std::vector<BudgetResult> budget_sweep(const SweepConfig& cfg) {
    if (cfg.train.mode != "semi")
        throw ConfigError("budget_sweep: the annotation-budget protocol runs in semi mode");
    datagen::DataParams dp = cfg.data;
    dp.label_budget = 1.0;  // per-cell budgets are applied below
    datagen::Dataset base = datagen::build_dataset(dp);

    datagen::Dataset work = base;  // shared slides and fixed splits for every cell
    CellRunner runner = [&](const SweepArm& arm, double budget, uint64_t seed) {
        work.manifest = datagen::apply_budget(base.manifest, budget, seed, cfg.data.granularity);
        trainer::TrainConfig tc = cfg.train;
        tc.tasks = arm.tasks;
        tc.seed = seed;
        tc.label_budget = budget;
        return trainer::train_semi(tc, work).test_auc;
    };
    return budget_sweep(cfg, runner);
}

std::string format_table(const std::vector<BudgetResult>& results) {
    std::vector<std::string> arms;
    std::vector<double> budgets;
    for (const auto& r : results) {
        if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
        if (std::find(budgets.begin(), budgets.end(), r.budget) == budgets.end())
            budgets.push_back(r.budget);
    }
    auto cell_of = [&](const std::string& arm, double budget) -> const BudgetResult* {
        for (const auto& r : results)
            if (r.arm == arm && r.budget == budget) return &r;
        return nullptr;
    };

    const int name_w = 22, cell_w = 17;
    std::ostringstream out;
    out << std::left;
    out.width(name_w);
    out << "arm";
    for (double b : budgets) {
        std::ostringstream h;
        h << "budget " << b * 100.0 << "%";
        out.width(cell_w);
        out << h.str();
    }
    out << "\n" << std::string(static_cast<size_t>(name_w + cell_w * static_cast<int>(budgets.size())), '-') << "\n";
    for (const auto& arm : arms) {
        out.width(name_w);
        out << arm;
        for (double b : budgets) {
            const BudgetResult* r = cell_of(arm, b);
            std::ostringstream c;
            if (!r) c << "-";
            else if (r->failed && r->per_seed_auc.empty()) c << "FAILED";
            else {
                c.precision(3);
                c << std::fixed << r->auc_mean << " +- " << r->auc_std;
                if (r->failed) c << " *";
            }
            out.width(cell_w);
            out << c.str();
        }
        out << "\n";
    }
    out << "AUC-ROC, mean +- population std over seeds; * marks cells with failed runs.\n";
    return out.str();
}

void save_records(const std::string& path, const std::vector<BudgetResult>& results) {
    std::ofstream f(path);
    if (!f) throw DataError("sweep records: cannot open " + path);
    f.precision(17);
    f << "arm,budget,seed_index,auc,mean,std,failed\n";
    for (const auto& r : results) {
        for (size_t i = 0; i < r.per_seed_auc.size(); ++i)
            f << r.arm << "," << r.budget << "," << i << "," << r.per_seed_auc[i] << ",,,\n";
        f << r.arm << "," << r.budget << ",,," << r.auc_mean << "," << r.auc_std << ","
          << (r.failed ? 1 : 0) << "\n";
    }
}

}  // namespace selfpath::evalkit
