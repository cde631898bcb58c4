#include "seqvimp/forest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "parallel_util.hpp"
#include "seqvimp/errors.hpp"

namespace seqvimp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// The winning split so far.  Lower score wins; exact score ties fall to the
// lower variable index, then the lower threshold (numeric) or the smaller
// level mask (categorical), so the chosen tree never depends on the order
// candidates were examined in.
struct BestSplit {
    double score = std::numeric_limits<double>::infinity();
    int var = -1;
    bool categorical = false;
    double threshold = 0;
    std::uint64_t mask = 0;

    void offer(double cand_score, int cand_var, double cand_thr) {
        if (cand_score > score) return;
        if (cand_score == score &&
            (var < cand_var ||
             (var == cand_var && !categorical && threshold <= cand_thr)))
            return;
        score = cand_score;
        var = cand_var;
        categorical = false;
        threshold = cand_thr;
    }

    void offer_mask(double cand_score, int cand_var, std::uint64_t cand_mask) {
        if (cand_score > score) return;
        if (cand_score == score &&
            (var < cand_var ||
             (var == cand_var && categorical && mask <= cand_mask)))
            return;
        score = cand_score;
        var = cand_var;
        categorical = true;
        mask = cand_mask;
    }
};

// Scratch tuples for split search.  Sorting them puts every accumulation
// into a value-canonical order, which keeps fitted trees identical when the
// dataset's rows are presented in a different order (floating-point sums
// would otherwise round differently).
struct NumTuple {  // regression, numeric predictor
    double x;
    double y;
    int w;
    bool operator<(const NumTuple& o) const {
        if (x != o.x) return x < o.x;
        if (y != o.y) return y < o.y;
        return w < o.w;
    }
};

struct ClsTuple {  // classification, numeric predictor
    double x;
    int cls;
    int w;
    bool operator<(const ClsTuple& o) const { return x < o.x; }
};

struct CatTuple {  // regression, categorical predictor
    int code;
    double y;
    int w;
    bool operator<(const CatTuple& o) const {
        if (code != o.code) return code < o.code;
        if (y != o.y) return y < o.y;
        return w < o.w;
    }
};

struct LevelOrder {
    int code;
    double mean;
};

class TreeGrower {
public:
    TreeGrower(const Dataset& data, const ResolvedConfig& config,
               const std::vector<int>& counts, std::uint64_t split_seed)
        : data_(data),
          cfg_(config),
          counts_(counts),
          rng_(split_seed),
          predictors_(data.predictor_indices()) {
        target_num_ =
            cfg_.task == TaskKind::Regression
                ? data_.columns[data_.target].numeric.data()
                : nullptr;
        target_cls_ = cfg_.task == TaskKind::Classification
                          ? data_.columns[data_.target].codes.data()
                          : nullptr;
    }

    Tree grow() {
        Tree tree;
        for (int r = 0; r < int(counts_.size()); ++r) {
            if (counts_[r] > 0)
                rows_.push_back(r);
            else
                tree.oob.push_back(r);
        }
        tree.nodes.emplace_back();
        // Depth-first with an explicit stack of (node, row range).
        struct Item {
            int node;
            int begin;
            int end;
        };
        std::vector<Item> stack{{0, 0, int(rows_.size())}};
        while (!stack.empty()) {
            const Item item = stack.back();
            stack.pop_back();
            const int split_row = split_node(tree, item.node, item.begin,
                                             item.end);
            if (split_row < 0) continue;
            const TreeNode& node = tree.nodes[item.node];
            stack.push_back({node.right, split_row, item.end});
            stack.push_back({node.left, item.begin, split_row});
        }
        return tree;
    }

private:
    // Decides node's fate over rows_[begin, end).  Returns the partition
    // point when it split, -1 when it became a leaf.
    int split_node(Tree& tree, int node_index, int begin, int end) {
        int weight = 0;
        for (int i = begin; i < end; ++i) weight += counts_[rows_[i]];

        const bool small = weight < 2 * cfg_.min_node_size;
        if (small || pure(begin, end)) {
            make_leaf(tree, node_index, begin, end);
            return -1;
        }

        BestSplit best;
        draw_candidates();
        for (int var : candidates_) {
            if (data_.columns[var].type == ColumnType::Numeric)
                search_numeric(var, begin, end, &best);
            else
                search_categorical(var, begin, end, &best);
        }
        if (best.var < 0) {
            make_leaf(tree, node_index, begin, end);
            return -1;
        }

        TreeNode& node = tree.nodes[node_index];
        node.var = best.var;
        node.threshold = best.threshold;
        node.level_mask = best.categorical ? best.mask : 0;
        const int* codes = data_.columns[best.var].codes.data();
        const double* values = data_.columns[best.var].numeric.data();
        const auto goes_left = [&](int row) {
            return best.categorical
                       ? ((best.mask >> codes[row]) & 1u) != 0
                       : values[row] <= best.threshold;
        };
        int* mid = std::stable_partition(rows_.data() + begin,
                                         rows_.data() + end, goes_left);
        node.left = int(tree.nodes.size());
        node.right = node.left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        return int(mid - rows_.data());
    }

    bool pure(int begin, int end) const {
        if (cfg_.task == TaskKind::Classification) {
            const int first = target_cls_[rows_[begin]];
            for (int i = begin + 1; i < end; ++i)
                if (target_cls_[rows_[i]] != first) return false;
            return true;
        }
        const double first = target_num_[rows_[begin]];
        for (int i = begin + 1; i < end; ++i)
            if (target_num_[rows_[i]] != first) return false;
        return true;
    }

    void make_leaf(Tree& tree, int node_index, int begin, int end) {
        TreeNode& node = tree.nodes[node_index];
        node.payload = int(tree.leaf_values.size());
        if (cfg_.task == TaskKind::Classification) {
            cls_scratch_.assign(cfg_.n_classes, 0);
            std::int64_t total = 0;
            for (int i = begin; i < end; ++i) {
                const int row = rows_[i];
                cls_scratch_[target_cls_[row]] += counts_[row];
                total += counts_[row];
            }
            for (int k = 0; k < cfg_.n_classes; ++k)
                tree.leaf_values.push_back(double(cls_scratch_[k]) /
                                           double(total));
        } else {
            // Mean in (y, w)-canonical order; see the tuple comment above.
            leaf_scratch_.clear();
            for (int i = begin; i < end; ++i) {
                const int row = rows_[i];
                leaf_scratch_.push_back({target_num_[row], counts_[row]});
            }
            std::sort(leaf_scratch_.begin(), leaf_scratch_.end());
            double sum = 0;
            std::int64_t total = 0;
            for (const auto& [y, w] : leaf_scratch_) {
                sum += y * w;
                total += w;
            }
            tree.leaf_values.push_back(sum / double(total));
        }
    }

    // mtry distinct predictors by partial Fisher-Yates.
    void draw_candidates() {
        candidates_ = predictors_;
        const int p = int(candidates_.size());
        for (int i = 0; i < cfg_.mtry; ++i) {
            std::uniform_int_distribution<int> pick(i, p - 1);
            std::swap(candidates_[i], candidates_[pick(rng_)]);
        }
        candidates_.resize(cfg_.mtry);
    }

    void search_numeric(int var, int begin, int end, BestSplit* best) {
        const double* values = data_.columns[var].numeric.data();
        if (cfg_.task == TaskKind::Classification) {
            cls_tuples_.clear();
            for (int i = begin; i < end; ++i) {
                const int row = rows_[i];
                cls_tuples_.push_back(
                    {values[row], target_cls_[row], counts_[row]});
            }
            std::sort(cls_tuples_.begin(), cls_tuples_.end());
            sweep_classification(var, best);
        } else {
            num_tuples_.clear();
            for (int i = begin; i < end; ++i) {
                const int row = rows_[i];
                num_tuples_.push_back(
                    {values[row], target_num_[row], counts_[row]});
            }
            std::sort(num_tuples_.begin(), num_tuples_.end());
            sweep_regression(var, best);
        }
    }

    // Threshold sweep over sorted (x, class, w): exact integer class counts
    // on each side, Gini score from them.
    void sweep_classification(int var, BestSplit* best) {
        const int K = cfg_.n_classes;
        cls_left_.assign(K, 0);
        cls_right_.assign(K, 0);
        std::int64_t weight_right = 0;
        for (const ClsTuple& t : cls_tuples_) {
            cls_right_[t.cls] += t.w;
            weight_right += t.w;
        }
        std::int64_t weight_left = 0;
        const std::size_t n = cls_tuples_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const ClsTuple& t = cls_tuples_[i];
            cls_left_[t.cls] += t.w;
            cls_right_[t.cls] -= t.w;
            weight_left += t.w;
            weight_right -= t.w;
            if (cls_tuples_[i + 1].x == t.x) continue;
            if (weight_left < cfg_.min_node_size ||
                weight_right < cfg_.min_node_size)
                continue;
            std::int64_t sq_left = 0, sq_right = 0;
            for (int k = 0; k < K; ++k) {
                sq_left += cls_left_[k] * cls_left_[k];
                sq_right += cls_right_[k] * cls_right_[k];
            }
            const double score =
                (double(weight_left) - double(sq_left) / double(weight_left)) +
                (double(weight_right) -
                 double(sq_right) / double(weight_right));
            best->offer(score, var, midpoint(t.x, cls_tuples_[i + 1].x));
        }
    }

    // Threshold sweep over sorted (x, y, w): weighted SSE on each side from
    // canonical prefix sums.
    void sweep_regression(int var, BestSplit* best) {
        double sum_total = 0, sq_total = 0;
        std::int64_t weight_total = 0;
        for (const NumTuple& t : num_tuples_) {
            sum_total += t.y * t.w;
            sq_total += t.y * t.y * t.w;
            weight_total += t.w;
        }
        double sum_left = 0, sq_left = 0;
        std::int64_t weight_left = 0;
        const std::size_t n = num_tuples_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const NumTuple& t = num_tuples_[i];
            sum_left += t.y * t.w;
            sq_left += t.y * t.y * t.w;
            weight_left += t.w;
            if (num_tuples_[i + 1].x == t.x) continue;
            const std::int64_t weight_right = weight_total - weight_left;
            if (weight_left < cfg_.min_node_size ||
                weight_right < cfg_.min_node_size)
                continue;
            const double sse_left =
                sq_left - sum_left * sum_left / double(weight_left);
            const double sum_right = sum_total - sum_left;
            const double sse_right = (sq_total - sq_left) -
                                     sum_right * sum_right /
                                         double(weight_right);
            best->offer(sse_left + sse_right, var,
                        midpoint(t.x, num_tuples_[i + 1].x));
        }
    }

    static double midpoint(double lo, double hi) {
        const double mid = lo + (hi - lo) / 2.0;
        // Guard against rounding onto hi, which would flip that row's side.
        return mid < hi ? mid : lo;
    }

    void search_categorical(int var, int begin, int end, BestSplit* best) {
        const Column& col = data_.columns[var];
        const int n_levels = int(col.levels.size());
        const int K =
            cfg_.task == TaskKind::Classification ? cfg_.n_classes : 0;

        // Per-level aggregates, canonical for regression via sorted tuples.
        level_weight_.assign(n_levels, 0);
        if (cfg_.task == TaskKind::Classification) {
            level_class_.assign(std::size_t(n_levels) * K, 0);
            for (int i = begin; i < end; ++i) {
                const int row = rows_[i];
                const int code = col.codes[row];
                level_weight_[code] += counts_[row];
                level_class_[std::size_t(code) * K + target_cls_[row]] +=
                    counts_[row];
            }
        } else {
            level_sum_.assign(n_levels, 0.0);
            level_sq_.assign(n_levels, 0.0);
            cat_tuples_.clear();
            for (int i = begin; i < end; ++i) {
                const int row = rows_[i];
                cat_tuples_.push_back(
                    {col.codes[row], target_num_[row], counts_[row]});
            }
            std::sort(cat_tuples_.begin(), cat_tuples_.end());
            for (const CatTuple& t : cat_tuples_) {
                level_weight_[t.code] += t.w;
                level_sum_[t.code] += t.y * t.w;
                level_sq_[t.code] += t.y * t.y * t.w;
            }
        }

        std::uint64_t present = 0;
        for (int l = 0; l < n_levels; ++l)
            if (level_weight_[l] > 0) present |= std::uint64_t(1) << l;
        if (std::popcount(present) < 2) return;

        if (std::popcount(present) <= 10) {
            // Every two-block partition of the present levels, written with
            // the lowest present level on the left so each partition is
            // scored once.
            const std::uint64_t low = present & (~present + 1);
            const std::uint64_t rest = present ^ low;
            std::uint64_t sub = rest;
            while (true) {
                sub = (sub - 1) & rest;
                const std::uint64_t mask = sub | low;
                if (mask != present) score_mask(var, mask, present, K, best);
                if (sub == 0) break;
            }
        } else {
            // Order the present levels by mean outcome (probability of the
            // first class for classification) and sweep the prefix cuts.
            level_order_.clear();
            for (int l = 0; l < n_levels; ++l) {
                if (!((present >> l) & 1u)) continue;
                const double mean =
                    cfg_.task == TaskKind::Classification
                        ? double(level_class_[std::size_t(l) * K]) /
                              double(level_weight_[l])
                        : level_sum_[l] / double(level_weight_[l]);
                level_order_.push_back({l, mean});
            }
            std::sort(level_order_.begin(), level_order_.end(),
                      [](const LevelOrder& a, const LevelOrder& b) {
                          if (a.mean != b.mean) return a.mean < b.mean;
                          return a.code < b.code;
                      });
            std::uint64_t mask = 0;
            for (std::size_t i = 0; i + 1 < level_order_.size(); ++i) {
                mask |= std::uint64_t(1) << level_order_[i].code;
                score_mask(var, mask, present, K, best);
            }
        }
    }

    // Scores the partition (mask | rest of present) from the per-level
    // aggregates, iterating levels in ascending order so regression sums
    // stay canonical.
    void score_mask(int var, std::uint64_t mask, std::uint64_t present, int K,
                    BestSplit* best) {
        if (cfg_.task == TaskKind::Classification) {
            cls_left_.assign(K, 0);
            cls_right_.assign(K, 0);
            std::int64_t weight_left = 0, weight_right = 0;
            for (std::uint64_t bits = present; bits;) {
                const int l = std::countr_zero(bits);
                bits &= bits - 1;
                const bool left = ((mask >> l) & 1u) != 0;
                (left ? weight_left : weight_right) += level_weight_[l];
                for (int k = 0; k < K; ++k)
                    (left ? cls_left_ : cls_right_)[k] +=
                        level_class_[std::size_t(l) * K + k];
            }
            if (weight_left < cfg_.min_node_size ||
                weight_right < cfg_.min_node_size)
                return;
            std::int64_t sq_left = 0, sq_right = 0;
            for (int k = 0; k < K; ++k) {
                sq_left += cls_left_[k] * cls_left_[k];
                sq_right += cls_right_[k] * cls_right_[k];
            }
            const double score =
                (double(weight_left) - double(sq_left) / double(weight_left)) +
                (double(weight_right) -
                 double(sq_right) / double(weight_right));
            best->offer_mask(score, var, mask);
        } else {
            double sum_left = 0, sq_left = 0, sum_right = 0, sq_right = 0;
            std::int64_t weight_left = 0, weight_right = 0;
            for (std::uint64_t bits = present; bits;) {
                const int l = std::countr_zero(bits);
                bits &= bits - 1;
                if ((mask >> l) & 1u) {
                    sum_left += level_sum_[l];
                    sq_left += level_sq_[l];
                    weight_left += level_weight_[l];
                } else {
                    sum_right += level_sum_[l];
                    sq_right += level_sq_[l];
                    weight_right += level_weight_[l];
                }
            }
            if (weight_left < cfg_.min_node_size ||
                weight_right < cfg_.min_node_size)
                return;
            const double score =
                (sq_left - sum_left * sum_left / double(weight_left)) +
                (sq_right - sum_right * sum_right / double(weight_right));
            best->offer_mask(score, var, mask);
        }
    }

    const Dataset& data_;
    const ResolvedConfig& cfg_;
    const std::vector<int>& counts_;
    std::mt19937_64 rng_;
    std::vector<int> predictors_;
    std::vector<int> rows_;
    std::vector<int> candidates_;

    const double* target_num_ = nullptr;
    const int* target_cls_ = nullptr;

    // Reused scratch.
    std::vector<NumTuple> num_tuples_;
    std::vector<ClsTuple> cls_tuples_;
    std::vector<CatTuple> cat_tuples_;
    std::vector<std::pair<double, int>> leaf_scratch_;
    std::vector<std::int64_t> cls_scratch_;
    std::vector<std::int64_t> cls_left_;
    std::vector<std::int64_t> cls_right_;
    std::vector<std::int64_t> level_weight_;
    std::vector<std::int64_t> level_class_;
    std::vector<double> level_sum_;
    std::vector<double> level_sq_;
    std::vector<LevelOrder> level_order_;
};

const double* leaf_with_override(const Tree& tree, const Dataset& data,
                                 int row, int override_var, int override_row) {
    const TreeNode* nodes = tree.nodes.data();
    int index = 0;
    while (nodes[index].var >= 0) {
        const TreeNode& node = nodes[index];
        const int src = node.var == override_var ? override_row : row;
        const Column& col = data.columns[node.var];
        const bool left =
            col.type == ColumnType::Numeric
                ? col.numeric[src] <= node.threshold
                : ((node.level_mask >> col.codes[src]) & 1u) != 0;
        index = left ? node.left : node.right;
    }
    return tree.leaf_values.data() + nodes[index].payload;
}

double row_loss(const ResolvedConfig& cfg, const Dataset& data,
                const double* leaf, int row) {
    if (cfg.task == TaskKind::Regression) {
        const double diff = leaf[0] - data.columns[data.target].numeric[row];
        return diff * diff;
    }
    const int truth = data.columns[data.target].codes[row];
    if (cfg.loss == LossKind::Misclassification) {
        int arg = 0;
        for (int k = 1; k < cfg.n_classes; ++k)
            if (leaf[k] > leaf[arg]) arg = k;
        return arg == truth ? 0.0 : 1.0;
    }
    double loss = 0;  // Brier
    for (int k = 0; k < cfg.n_classes; ++k) {
        const double diff = leaf[k] - (k == truth ? 1.0 : 0.0);
        loss += diff * diff;
    }
    return loss;
}

}  // namespace

std::string to_string(TaskKind task) {
    return task == TaskKind::Classification ? "classification" : "regression";
}

std::string to_string(LossKind loss) {
    switch (loss) {
        case LossKind::SquaredError: return "squared_error";
        case LossKind::Brier: return "brier";
        case LossKind::Misclassification: return "misclassification";
    }
    return "";
}

LossKind parse_loss(const std::string& name) {
    if (name == "squared_error") return LossKind::SquaredError;
    if (name == "brier") return LossKind::Brier;
    if (name == "misclassification") return LossKind::Misclassification;
    throw ConfigError("unknown loss: " + name);
}

ResolvedConfig resolve_config(const ForestConfig& config, const Dataset& data) {
    data.validate();
    ResolvedConfig out;
    out.task = data.classification() ? TaskKind::Classification
                                     : TaskKind::Regression;
    const int p = int(data.n_predictors());

    if (config.ntree < 1) throw ConfigError("ntree must be >= 1");
    if (config.nperm < 1) throw ConfigError("nperm must be >= 1");
    out.ntree = config.ntree;
    out.nperm = config.nperm;
    out.seed = config.seed;

    if (config.mtry == 0) {
        out.mtry = out.task == TaskKind::Classification
                       ? int(std::ceil(std::sqrt(double(p))))
                       : int(std::ceil(double(p) / 3.0));
    } else if (config.mtry < 0 || config.mtry > p) {
        throw ConfigError("mtry must lie in [1, " + std::to_string(p) + "]");
    } else {
        out.mtry = config.mtry;
    }

    if (config.min_node_size == 0)
        out.min_node_size = out.task == TaskKind::Classification ? 1 : 5;
    else if (config.min_node_size < 0)
        throw ConfigError("min_node_size must be >= 1");
    else
        out.min_node_size = config.min_node_size;
    if (int(data.n_rows()) < 2 * out.min_node_size)
        throw ConfigError("need at least 2*min_node_size rows to split");

    const Column& target = data.columns[data.target];
    if (out.task == TaskKind::Classification) {
        out.n_classes = int(target.levels.size());
        if (out.n_classes < 2)
            throw DataError("degenerate target: a single class");
        out.loss = config.loss.value_or(LossKind::Brier);
        if (out.loss == LossKind::SquaredError)
            throw ConfigError("squared_error loss is for regression targets");
    } else {
        const auto [lo, hi] = std::minmax_element(target.numeric.begin(),
                                                  target.numeric.end());
        if (*lo == *hi) throw DataError("degenerate target: zero variance");
        out.loss = config.loss.value_or(LossKind::SquaredError);
        if (out.loss != LossKind::SquaredError)
            throw ConfigError(to_string(out.loss) +
                              " loss is for classification targets");
    }

    for (int var : data.predictor_indices()) {
        const Column& col = data.columns[var];
        if (col.type == ColumnType::Categorical && col.levels.size() > 64)
            throw DataError("column " + col.name +
                            " has more than 64 levels");
    }
    return out;
}

Tree fit_tree(const Dataset& data, const ResolvedConfig& config,
              std::vector<int> bootstrap_count, std::uint64_t tree_seed) {
    if (bootstrap_count.size() != data.n_rows())
        throw ConfigError("bootstrap_count length differs from row count");
    TreeGrower grower(data, config, bootstrap_count, tree_seed);
    Tree tree = grower.grow();
    tree.bootstrap_count = std::move(bootstrap_count);
    tree.seed = tree_seed;
    return tree;
}

ForestModel fit_forest(const Dataset& data, const ForestConfig& config) {
    ForestModel model;
    model.config = resolve_config(config, data);
    model.trees.resize(model.config.ntree);
    const int n = int(data.n_rows());
    detail::parallel_for(model.config.ntree, [&](int t) {
        const std::uint64_t tree_master =
            derive_seed(model.config.seed, stream::kForest, std::uint64_t(t));
        std::mt19937_64 boot_rng(derive_seed(tree_master, stream::kForest, 0));
        std::vector<int> counts(n, 0);
        std::uniform_int_distribution<int> pick(0, n - 1);
        for (int draw = 0; draw < n; ++draw) ++counts[pick(boot_rng)];
        model.trees[t] =
            fit_tree(data, model.config, std::move(counts),
                     derive_seed(tree_master, stream::kForest, 1));
        model.trees[t].seed = tree_master;
    });
    return model;
}

const double* tree_leaf(const Tree& tree, const Dataset& data,
                        std::size_t row) {
    return leaf_with_override(tree, data, int(row), -1, 0);
}

double tree_oob_loss(const ForestModel& model, int t, const Dataset& data) {
    const Tree& tree = model.trees.at(t);
    if (tree.oob.empty()) return kNaN;
    double total = 0;
    for (int row : tree.oob)
        total += row_loss(model.config, data,
                          leaf_with_override(tree, data, row, -1, 0), row);
    return total / double(tree.oob.size());
}

double oob_ensemble_loss(const ForestModel& model, const Dataset& data) {
    const int n = int(data.n_rows());
    const int width =
        model.config.task == TaskKind::Classification ? model.config.n_classes
                                                      : 1;
    std::vector<double> acc(std::size_t(n) * width, 0.0);
    std::vector<int> votes(n, 0);
    for (const Tree& tree : model.trees) {
        for (int row : tree.oob) {
            const double* leaf = leaf_with_override(tree, data, row, -1, 0);
            for (int k = 0; k < width; ++k)
                acc[std::size_t(row) * width + k] += leaf[k];
            ++votes[row];
        }
    }
    double total = 0;
    int counted = 0;
    std::vector<double> mean(width);
    for (int row = 0; row < n; ++row) {
        if (votes[row] == 0) continue;
        for (int k = 0; k < width; ++k)
            mean[k] = acc[std::size_t(row) * width + k] / votes[row];
        total += row_loss(model.config, data, mean.data(), row);
        ++counted;
    }
    if (counted == 0)
        throw NumericError("no out-of-bag rows in the whole forest");
    return total / counted;
}

double tree_vi(const ForestModel& model, int t, int j, const Dataset& data,
               int nperm, std::mt19937_64& rng) {
    if (nperm < 1) throw ConfigError("nperm must be >= 1");
    if (j < 0 || j >= int(data.columns.size()) || j == data.target)
        throw ConfigError("not a predictor column: " + std::to_string(j));
    const Tree& tree = model.trees.at(t);
    const int n_oob = int(tree.oob.size());
    if (n_oob == 0) return kNaN;

    double intact = 0;
    for (int row : tree.oob)
        intact += row_loss(model.config, data,
                           leaf_with_override(tree, data, row, -1, 0), row);
    intact /= n_oob;

    // Permuting within the OOB rows is a row redirection: the walk reads
    // column j at the shuffled row, everything else at the original row.
    std::vector<int> shuffled(tree.oob);
    double acc = 0;
    for (int rep = 0; rep < nperm; ++rep) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        double permuted = 0;
        for (int i = 0; i < n_oob; ++i) {
            const int row = tree.oob[i];
            permuted += row_loss(
                model.config, data,
                leaf_with_override(tree, data, row, j, shuffled[i]), row);
        }
        acc += permuted / n_oob - intact;
    }
    return acc / nperm;
}

VimpReport forest_vimp(const ForestModel& model, int j, const Dataset& data,
                       int nperm, std::mt19937_64& rng) {
    // Validate here: tree_vi runs on worker threads, where a throw is fatal.
    if (nperm < 1) throw ConfigError("nperm must be >= 1");
    if (j < 0 || j >= int(data.columns.size()) || j == data.target)
        throw ConfigError("not a predictor column: " + std::to_string(j));
    VimpReport report;
    report.variable = j;
    report.loss = model.config.loss;
    report.per_tree_vi.resize(model.trees.size(), kNaN);
    const std::uint64_t base = rng();
    const int count = int(model.trees.size());
    detail::parallel_for(count, [&](int t) {
        std::mt19937_64 tree_rng(
            derive_seed(base, stream::kPermute, std::uint64_t(t)));
        report.per_tree_vi[t] = tree_vi(model, t, j, data, nperm, tree_rng);
    });
    double sum = 0;
    int used = 0;
    for (double vi : report.per_tree_vi) {
        if (std::isnan(vi)) continue;
        sum += vi;
        ++used;
    }
    if (used == 0)
        throw NumericError("every tree has an empty out-of-bag set");
    report.vimp = sum / used;
    return report;
}

}  // namespace seqvimp
