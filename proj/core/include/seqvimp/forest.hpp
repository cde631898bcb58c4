#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "seqvimp/dataset.hpp"
#include "seqvimp/rng.hpp"

namespace seqvimp {

enum class TaskKind { Classification, Regression };
enum class LossKind { SquaredError, Brier, Misclassification };

std::string to_string(TaskKind task);
std::string to_string(LossKind loss);
LossKind parse_loss(const std::string& name);

// Forest-growing parameters.  Zeros select the task-dependent defaults:
// mtry ceil(sqrt(p)) for classification and ceil(p/3) for regression,
// min_node_size 1 and 5 respectively.  A split must leave at least
// min_node_size bootstrap-weighted rows in each child.  `loss` defaults to
// squared error (regression) or the Brier score (classification);
// misclassification rate is the opt-in alternative for classification.
struct ForestConfig {
    int ntree = 500;
    int mtry = 0;
    int nperm = 1;
    int min_node_size = 0;
    std::uint64_t seed = 0;
    std::optional<LossKind> loss;
};

// Concrete parameters after applying defaults against one dataset; throws
// ConfigError when the explicit values cannot work for it.
struct ResolvedConfig {
    TaskKind task = TaskKind::Regression;
    int n_classes = 0;  // classification only
    int ntree = 0;
    int mtry = 0;
    int nperm = 0;
    int min_node_size = 0;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::SquaredError;
};

ResolvedConfig resolve_config(const ForestConfig& config, const Dataset& data);

// One grown tree.  Interior nodes route row x left when x[var] <= threshold
// (numeric) or when the bit of its level code is set in level_mask
// (categorical); leaves have var = -1 and payload pointing at their
// prediction in leaf_values (the mean for regression, n_classes
// probabilities for classification).
struct TreeNode {
    int var = -1;
    double threshold = 0;
    std::uint64_t level_mask = 0;
    int left = -1;
    int right = -1;
    int payload = -1;
};

struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<double> leaf_values;
    std::vector<int> bootstrap_count;  // per data row; 0 marks out-of-bag
    std::vector<int> oob;              // rows with count 0, ascending
    std::uint64_t seed = 0;            // the stream that grew this tree
};

struct ForestModel {
    ResolvedConfig config;
    std::vector<Tree> trees;
};

// Grows config.ntree trees, each from its own derived RNG stream: bootstrap
// of n rows with replacement, mtry-subset splits by impurity decrease
// (variance / Gini), impurity ties broken toward the lowest variable index
// and then the lowest threshold.  Deterministic for a given seed; tree order
// never depends on the SEQVIMP_WORKERS thread count.
ForestModel fit_forest(const Dataset& data, const ForestConfig& config);

// Grows a single tree from explicit bootstrap multiplicities; `rng` drives
// only the split-candidate draws.  fit_forest is built on this; exposed so
// bootstrap-identical refits can be compared directly.
Tree fit_tree(const Dataset& data, const ResolvedConfig& config,
              std::vector<int> bootstrap_count, std::uint64_t tree_seed);

// Leaf reached by one row: a pointer to 1 (regression) or n_classes
// (classification) values.
const double* tree_leaf(const Tree& tree, const Dataset& data,
                        std::size_t row);

// Mean loss of one tree over its out-of-bag rows: squared error, Brier
// score, or misclassification rate per model.config.loss.  Empty OOB is the
// caller's problem (returns NaN).
double tree_oob_loss(const ForestModel& model, int t, const Dataset& data);

// Ensemble out-of-bag loss: each row is predicted by averaging the trees
// that did not see it; rows in every bootstrap sample are skipped.
double oob_ensemble_loss(const ForestModel& model, const Dataset& data);

// Importance of variable j for tree t: mean over nperm rounds of the OOB
// loss increase when column j is permuted within the tree's OOB rows.
// Exactly 0 when the tree never splits on j; NaN when the OOB set is empty
// (the tree then drops out of the forest mean).
double tree_vi(const ForestModel& model, int t, int j, const Dataset& data,
               int nperm, std::mt19937_64& rng);

struct VimpReport {
    int variable = -1;
    LossKind loss = LossKind::SquaredError;
    std::vector<double> per_tree_vi;  // NaN for trees with empty OOB
    double vimp = 0;                  // mean over the non-missing entries
};

// Mean per-tree importance of variable j (the forest VIMP).  Per-tree
// permutation streams are derived from one draw of `rng`, so the result does
// not depend on tree evaluation order.  Throws NumericError when every tree
// has an empty OOB set.
VimpReport forest_vimp(const ForestModel& model, int j, const Dataset& data,
                       int nperm, std::mt19937_64& rng);

}  // namespace seqvimp
