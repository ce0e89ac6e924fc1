#pragma once

#include <cstdint>
#include <vector>

namespace selfpath::forest {

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 12;
    int min_leaf = 1;
    int feature_subset = 0;  // 0 = floor(sqrt(d))
    uint64_t seed = 0;
};

// Seeded bagged CART forest for binary labels; probability is the mean of
// per-tree leaf positive fractions.
class RandomForest {
public:
    void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
             const ForestConfig& cfg);
    double predict_proba(const std::vector<double>& x) const;
    std::vector<double> predict_proba(const std::vector<std::vector<double>>& x) const;
    bool trained() const { return !trees_.empty(); }

private:
    struct Node {
        int feature = -1;       // -1 = leaf
        double threshold = 0.0; // go left when x[feature] <= threshold
        int left = -1, right = -1;
        double p1 = 0.0;        // leaf positive fraction
    };
    struct Tree {
        std::vector<Node> nodes;
    };
    std::vector<Tree> trees_;
    int dim_ = 0;
};

}  // namespace selfpath::forest
