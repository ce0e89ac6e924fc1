#include "selfpath/forest.hpp"

#include "selfpath/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace selfpath::forest {

void RandomForest::fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       const ForestConfig& cfg) {
    if (x.empty() || x.size() != y.size())
        throw DataError("forest: features and labels must be non-empty and equal length");
    dim_ = static_cast<int>(x.front().size());
    for (const auto& row : x)
        if (static_cast<int>(row.size()) != dim_) throw DataError("forest: ragged feature rows");
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw DataError("forest: labels must be 0/1");
        (v ? has1 : has0) = true;
    }
    if (!has0 || !has1)
        throw ConfigError("forest: degenerate single-class training set");

    const int mtry = cfg.feature_subset > 0
                         ? std::min(cfg.feature_subset, dim_)
                         : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(dim_))));
    const size_t n = x.size();
    trees_.clear();
    trees_.resize(static_cast<size_t>(cfg.n_trees));

    Rng rng(cfg.seed);
    for (auto& tree : trees_) {
        // bootstrap sample
        std::vector<size_t> sample(n);
        for (size_t i = 0; i < n; ++i) sample[i] = rng.uniform_index(n);

        // iterative depth-first growth
        struct Work {
            int node;
            std::vector<size_t> idx;
            int depth;
        };
        auto make_leaf = [&](Node& node, const std::vector<size_t>& idx) {
            size_t pos = 0;
            for (size_t i : idx) pos += static_cast<size_t>(y[i]);
            node.feature = -1;
            node.p1 = static_cast<double>(pos) / static_cast<double>(idx.size());
        };

        tree.nodes.emplace_back();
        std::vector<Work> stack;
        stack.push_back({0, sample, 0});
        while (!stack.empty()) {
            Work w = std::move(stack.back());
            stack.pop_back();
            Node& node = tree.nodes[static_cast<size_t>(w.node)];

            size_t pos = 0;
            for (size_t i : w.idx) pos += static_cast<size_t>(y[i]);
            const bool pure = pos == 0 || pos == w.idx.size();
            if (pure || w.depth >= cfg.max_depth ||
                w.idx.size() < static_cast<size_t>(2 * cfg.min_leaf)) {
                make_leaf(node, w.idx);
                continue;
            }

            // best gini split over a random feature subset
            std::vector<int> feats(static_cast<size_t>(dim_));
            std::iota(feats.begin(), feats.end(), 0);
            rng.shuffle(feats);
            feats.resize(static_cast<size_t>(mtry));

            double best_gain = 0.0;
            int best_f = -1;
            double best_t = 0.0;
            const double total = static_cast<double>(w.idx.size());
            const double parent_gini =
                1.0 - std::pow(pos / total, 2) - std::pow((total - pos) / total, 2);

            for (int f : feats) {
                std::vector<size_t> order = w.idx;
                std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                    return x[a][static_cast<size_t>(f)] < x[b][static_cast<size_t>(f)];
                });
                size_t lp = 0;
                for (size_t k = 0; k + 1 < order.size(); ++k) {
                    lp += static_cast<size_t>(y[order[k]]);
                    const double xv = x[order[k]][static_cast<size_t>(f)];
                    const double xn = x[order[k + 1]][static_cast<size_t>(f)];
                    if (xv == xn) continue;
                    const double nl = static_cast<double>(k + 1);
                    const double nr = total - nl;
                    if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
                    const double pl = lp / nl;
                    const double pr = (pos - lp) / nr;
                    const double gini = nl / total * (1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)) +
                                        nr / total * (1.0 - pr * pr - (1.0 - pr) * (1.0 - pr));
                    const double gain = parent_gini - gini;
                    if (gain > best_gain + 1e-15) {
                        best_gain = gain;
                        best_f = f;
                        best_t = 0.5 * (xv + xn);
                    }
                }
            }

            if (best_f < 0) {
                make_leaf(node, w.idx);
                continue;
            }

            std::vector<size_t> left, right;
            for (size_t i : w.idx)
                (x[i][static_cast<size_t>(best_f)] <= best_t ? left : right).push_back(i);
            const int left_id = static_cast<int>(tree.nodes.size());
            const int right_id = left_id + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            // re-fetch: emplace_back may have reallocated the node storage
            Node& nd = tree.nodes[static_cast<size_t>(w.node)];
            nd.feature = best_f;
            nd.threshold = best_t;
            nd.left = left_id;
            nd.right = right_id;
            stack.push_back({right_id, std::move(right), w.depth + 1});
            stack.push_back({left_id, std::move(left), w.depth + 1});
        }
    }
}

double RandomForest::predict_proba(const std::vector<double>& x) const {
    if (trees_.empty()) throw ConfigError("forest: predict before fit");
    if (static_cast<int>(x.size()) != dim_) throw DataError("forest: feature width mismatch");
    double sum = 0.0;
    for (const auto& tree : trees_) {
        int cur = 0;
        while (tree.nodes[static_cast<size_t>(cur)].feature >= 0) {
            const Node& nd = tree.nodes[static_cast<size_t>(cur)];
            cur = x[static_cast<size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        sum += tree.nodes[static_cast<size_t>(cur)].p1;
    }
    return sum / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::predict_proba(const std::vector<std::vector<double>>& x) const {
    std::vector<double> out;
    out.reserve(x.size());
    for (const auto& row : x) out.push_back(predict_proba(row));
    return out;
}

}  // namespace selfpath::forest
