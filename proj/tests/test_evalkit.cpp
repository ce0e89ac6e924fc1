#include <doctest.h>

#include "selfpath/common.hpp"
#include "selfpath/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace selfpath;
using namespace selfpath::evalkit;

namespace {

// O(n^2) pairwise Mann-Whitney oracle, ties credited 1/2.
double auc_pairwise_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i)
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[i] != 1 || labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc_roc basics") {
    SUBCASE("perfect separation") {
        CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    }
    SUBCASE("total inversion") {
        CHECK(auc_roc({0.9, 0.1}, {0, 1}) == doctest::Approx(0.0));
    }
    SUBCASE("ties count one half") {
        CHECK(auc_roc({0.5, 0.5}, {0, 1}) == doctest::Approx(0.5));
        CHECK(auc_roc({0.5, 0.5, 0.9}, {0, 1, 1}) == doctest::Approx(0.75));
    }
    SUBCASE("single-class labels are an undefined-metric error") {
        CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1, 1}), DataError);
        CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {0, 0}), DataError);
    }
}

TEST_CASE("fast auc equals the pairwise oracle (property)") {
    Rng rng(41);
    for (int trial = 0; trial < 80; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(199));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores force ties
            scores[static_cast<size_t>(i)] = std::floor(rng.uniform() * 20.0) / 20.0;
            labels[static_cast<size_t>(i)] = rng.uniform() < 0.5 ? 0 : 1;
            (labels[static_cast<size_t>(i)] ? has1 : has0) = true;
        }
        if (!has0) labels[0] = 0;
        if (!has1) labels[static_cast<size_t>(n - 1)] = 1;
        const double fast = auc_roc(scores, labels);
        const double slow = auc_pairwise_oracle(scores, labels);
        CHECK(std::abs(fast - slow) <= 1e-12);
    }
}

TEST_CASE("auc invariances") {
    Rng rng(43);
    std::vector<double> scores(60);
    std::vector<int> labels(60);
    for (size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.uniform();
        labels[i] = i % 3 == 0 ? 1 : 0;
    }
    const double base = auc_roc(scores, labels);

    SUBCASE("strictly monotone transforms leave auc unchanged") {
        std::vector<double> exp_scores(scores.size()), affine(scores.size());
        for (size_t i = 0; i < scores.size(); ++i) {
            exp_scores[i] = std::exp(3.0 * scores[i]);
            affine[i] = 7.0 * scores[i] - 2.0;
        }
        CHECK(auc_roc(exp_scores, labels) == doctest::Approx(base).epsilon(1e-12));
        CHECK(auc_roc(affine, labels) == doctest::Approx(base).epsilon(1e-12));
    }
    SUBCASE("label complement mirrors the score") {
        std::vector<int> flipped(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) flipped[i] = 1 - labels[i];
        CHECK(auc_roc(scores, labels) + auc_roc(scores, flipped) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("macro auc") {
    SUBCASE("K=2 equals the mean of the two one-vs-rest aucs") {
        std::vector<std::vector<double>> scores{{0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}, {0.1, 0.9}};
        std::vector<int> labels{0, 1, 0, 1};
        std::vector<double> s0, s1;
        std::vector<int> y0, y1;
        for (size_t i = 0; i < scores.size(); ++i) {
            s0.push_back(scores[i][0]);
            s1.push_back(scores[i][1]);
            y0.push_back(labels[i] == 0 ? 1 : 0);
            y1.push_back(labels[i] == 1 ? 1 : 0);
        }
        const double expect = 0.5 * (auc_roc(s0, y0) + auc_roc(s1, y1));
        CHECK(macro_auc(scores, labels, 2) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("K=3 random case matches the composed oracle") {
        Rng rng(47);
        const int n = 60;
        std::vector<std::vector<double>> scores;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(3);
            double sum = 0.0;
            for (double& v : row) {
                v = rng.uniform() + 1e-3;
                sum += v;
            }
            for (double& v : row) v /= sum;
            scores.push_back(row);
            labels.push_back(static_cast<int>(rng.uniform_index(3)));
        }
        labels[0] = 0;
        labels[1] = 1;
        labels[2] = 2;
        double expect = 0.0;
        for (int k = 0; k < 3; ++k) {
            std::vector<double> s;
            std::vector<int> y;
            for (int i = 0; i < n; ++i) {
                s.push_back(scores[static_cast<size_t>(i)][static_cast<size_t>(k)]);
                y.push_back(labels[static_cast<size_t>(i)] == k ? 1 : 0);
            }
            expect += auc_pairwise_oracle(s, y);
        }
        expect /= 3.0;
        CHECK(macro_auc(scores, labels, 3) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("all per-class aucs equal a gives macro = a") {
        // symmetric construction: both classes perfectly separated
        std::vector<std::vector<double>> scores{{0.9, 0.1}, {0.8, 0.2}, {0.2, 0.8}, {0.1, 0.9}};
        std::vector<int> labels{0, 0, 1, 1};
        CHECK(macro_auc(scores, labels, 2) == doctest::Approx(1.0));
    }
    SUBCASE("missing class is an error") {
        std::vector<std::vector<double>> scores{{0.5, 0.3, 0.2}, {0.2, 0.5, 0.3}};
        CHECK_THROWS_AS(macro_auc(scores, {0, 1}, 3), DataError);
    }
}

TEST_CASE("mean and population std") {
    const std::vector<double> v{0.8, 0.82, 0.84};
    CHECK(mean(v) == doctest::Approx(0.82).epsilon(1e-12));
    CHECK(population_std(v) == doctest::Approx(0.016329931618554522).epsilon(1e-9));
}

TEST_CASE("budget sweep aggregation with an injected runner") {
    SweepConfig cfg;
    cfg.budgets = {0.5, 1.0};
    cfg.arms = {{"supervised", {}}, {"jigmag", {{"jigmag", 1.0}}}};

    SUBCASE("single seed gives zero std") {
        cfg.seeds = {7};
        const auto results = budget_sweep(cfg, [](const SweepArm&, double budget, uint64_t) {
            return 0.6 + 0.2 * budget;
        });
        REQUIRE(results.size() == 4);
        for (const auto& r : results) {
            CHECK(r.auc_std == doctest::Approx(0.0));
            CHECK(r.per_seed_auc.size() == 1);
        }
    }
    SUBCASE("multi-seed aggregation") {
        cfg.seeds = {1, 2, 3};
        const auto results = budget_sweep(cfg, [](const SweepArm&, double, uint64_t seed) {
            return 0.8 + 0.02 * static_cast<double>(seed - 1);  // 0.80, 0.82, 0.84
        });
        CHECK(results[0].auc_mean == doctest::Approx(0.82));
        CHECK(results[0].auc_std == doctest::Approx(0.016329931618554522).epsilon(1e-9));
    }
    SUBCASE("a failing cell is marked failed without aborting the sweep") {
        cfg.seeds = {1, 2};
        const auto results = budget_sweep(cfg, [](const SweepArm& arm, double budget, uint64_t seed) {
            if (arm.name == "jigmag" && budget == 0.5 && seed == 2)
                throw NumericError("boom");
            return 0.75;
        });
        REQUIRE(results.size() == 4);
        int failed = 0;
        for (const auto& r : results) {
            if (r.failed) {
                ++failed;
                CHECK(r.arm == "jigmag");
                CHECK(r.budget == 0.5);
                CHECK(r.per_seed_auc.size() == 1);  // surviving seed kept
            }
        }
        CHECK(failed == 1);
    }
    SUBCASE("input validation") {
        cfg.seeds = {};
        CHECK_THROWS_AS(budget_sweep(cfg, [](const SweepArm&, double, uint64_t) { return 0.5; }),
                        ConfigError);
        cfg.seeds = {1};
        cfg.budgets = {0.0};
        CHECK_THROWS_AS(budget_sweep(cfg, [](const SweepArm&, double, uint64_t) { return 0.5; }),
                        ConfigError);
    }
}

TEST_CASE("table and records formatting") {
    std::vector<BudgetResult> results;
    BudgetResult a;
    a.arm = "supervised";
    a.budget = 0.01;
    a.per_seed_auc = {0.7, 0.72, 0.74};
    a.auc_mean = 0.72;
    a.auc_std = 0.0163;
    results.push_back(a);
    BudgetResult b = a;
    b.arm = "jigmag";
    b.auc_mean = 0.81;
    results.push_back(b);

    const std::string table = format_table(results);
    CHECK(table.find("supervised") != std::string::npos);
    CHECK(table.find("jigmag") != std::string::npos);
    CHECK(table.find("budget 1%") != std::string::npos);
    CHECK(table.find("0.810 +- ") != std::string::npos);
    CHECK(table.find("population std") != std::string::npos);

    const std::string path = "/tmp/selfpath_sweep_records.csv";
    save_records(path, results);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "arm,budget,seed_index,auc,mean,std,failed");
    size_t lines = 0;
    std::string line;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 8);  // 3 per-seed rows + 1 aggregate, per arm
    std::remove(path.c_str());
}

TEST_CASE("end-to-end tiny sweep through the real trainer") {
    SweepConfig cfg;
    cfg.data.n_slides = 2;
    cfg.data.patches_per_slide = 30;
    cfg.data.patch_size = 16;
    cfg.data.seed = 5;
    cfg.data.splits = {0.6, 0.2, 0.2};
    cfg.data.slide.width = 128;
    cfg.data.slide.height = 128;
    cfg.train = trainer::TrainConfig::defaults("semi");
    cfg.train.epochs = 1;
    cfg.train.batch_size = 8;
    cfg.train.encoder.input_size = 16;
    cfg.train.encoder.feature_width = 8;
    cfg.budgets = {1.0};
    cfg.seeds = {3};
    cfg.arms = {{"supervised", {}}};
    const auto results = budget_sweep(cfg);
    REQUIRE(results.size() == 1);
    CHECK(!results[0].failed);
    CHECK(results[0].per_seed_auc.size() == 1);
    CHECK(results[0].auc_mean >= 0.0);
    CHECK(results[0].auc_mean <= 1.0);
}
