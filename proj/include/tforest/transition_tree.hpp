#pragma once

#include "tforest/kernels.hpp"
#include "tforest/random.hpp"
#include "tforest/stats.hpp"
#include "tforest/training_set.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace tforest {

struct TreeNode {
    NodeId id = 0;
    bool is_leaf = true;
    SplitParams split;
    /// Indices into TransitionTree::nodes; valid for internal nodes only.
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    /// Dense leaf index; valid for leaves only.
    std::uint32_t leaf_id = 0;

    bool operator==(const TreeNode&) const = default;
};

class TransitionTree {
public:
    TransitionTree() = default;
    TransitionTree(std::vector<TreeNode> nodes, std::size_t dim);

    /// Leaf reached by x. Throws UsageError on a dimension mismatch.
    std::uint32_t route(std::span<const double> x) const;
    /// Same as route() without the dimension check, for hot loops.
    std::uint32_t route_unchecked(const double* x) const noexcept;

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t leaf_count() const noexcept { return leaf_count_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t depth() const noexcept;

    bool operator==(const TransitionTree&) const = default;

private:
    std::vector<TreeNode> nodes_;
    std::size_t dim_ = 0;
    std::size_t leaf_count_ = 0;
};

struct TreeTrainConfig {
    std::size_t max_depth = 8;
    std::size_t min_samples_split = 10;
    double transition_node_prob = 0.5;
    /// 0 selects round(sqrt(D)).
    std::size_t n_candidate_features = 0;
    std::size_t n_candidate_thresholds = 10;
    std::size_t coordinate_descent_sweeps = 10;
    std::size_t min_transition_support = 10;
    double laplace_alpha = 1.0;
    /// Temporal distance of this tree; 0 trains a plain classification tree.
    std::size_t d = 1;
    /// Recompute the level's global transition objective after every accepted
    /// coordinate-descent update and throw InvariantViolation if it increased.
    bool audit_objective = true;

    bool operator==(const TreeTrainConfig&) const = default;
};

void validate(const TreeTrainConfig& cfg);

/// Number of candidate features actually drawn for dimension `dim`.
std::size_t candidate_feature_count(const TreeTrainConfig& cfg, std::size_t dim);

/// Draws n_candidate_features distinct features (partial Fisher-Yates), then per
/// feature n_candidate_thresholds thresholds uniform in [min, max) of the
/// node's values. Output is feature-major. Throws UsageError on an empty node.
std::vector<SplitParams> sample_candidates(Rng& rng, const TrainingSet& data, std::span<const std::uint32_t> samples,
                                           const TreeTrainConfig& cfg);

/// Best candidate under the classification objective; ties go to the earliest
/// candidate. Returns nullopt when every candidate leaves a child empty.
/// Throws UsageError when the node is below min_samples_split.
std::optional<SplitParams> optimize_classification_node(std::span<const std::uint32_t> samples,
                                                        const TrainingSet& data, const TreeTrainConfig& cfg, Rng& rng);

/// Observer hooks for one level; used by tests and diagnostics.
struct LevelObserver {
    /// Called after every accepted coordinate-descent update with the global
    /// objective before and after (only when audit_objective is set).
    std::function<void(double before, double after)> on_accepted_update;
    /// Called once the classification-initialized splits are fixed, with the
    /// level's global transition objective at that point (audit only).
    std::function<void(double)> on_initialized;
};

struct TrainStats {
    std::size_t levels = 0;
    std::size_t transition_nodes = 0;
    std::size_t classification_nodes = 0;
    std::size_t sweeps = 0;
    std::size_t accepted_updates = 0;
    std::size_t audits = 0;
    /// Global transition objective of the last level after optimization.
    double last_level_objective = 0.0;
};

/// One frontier node handed to learn_level: its id and the frames that reached it.
struct FrontierNode {
    NodeId id = 0;
    std::vector<std::uint32_t> samples;
};

/// Result of learning one level: a split for each frontier node (nullopt for
/// nodes that became leaves) and the criterion each split node was given.
struct LevelResult {
    std::vector<std::optional<SplitParams>> splits;
    std::vector<bool> transition_criterion;
    double global_objective = 0.0;
};

/// Learns the splits of every frontier node of one level. `closed_buckets`
/// maps each frame not in the frontier to a fixed bucket id (a leaf that
/// stopped earlier); frames in the frontier must map to kUnassigned there.
///
/// Random stream per level: one uniform draw per splittable node (criterion),
/// candidate sets for classification nodes in id order, then for transition
/// nodes in id order (initialization), then one candidate set per transition
/// node per sweep.
LevelResult learn_level(std::span<const FrontierNode> frontier, std::span<const NodeId> closed_buckets,
                        const TrainingSet& data, std::size_t depth, const TreeTrainConfig& cfg, Rng& rng,
                        TrainStats* stats = nullptr, const LevelObserver* observer = nullptr);

/// Grows a tree level by level from the root. Throws UsageError on an empty training set.
TransitionTree grow_tree(const TrainingSet& data, const TreeTrainConfig& cfg, Rng& rng, TrainStats* stats = nullptr,
                         const LevelObserver* observer = nullptr);

struct TransitionEntry {
    std::uint32_t prev_leaf = 0;
    std::uint32_t cur_leaf = 0;
    std::uint64_t support = 0;
    /// Row-major |Y| x |Y|; row = previous label, column = current label.
    std::vector<double> matrix;

    bool operator==(const TransitionEntry&) const = default;
};

/// Per-leaf class distributions and the sparse leaf-pair transition tables.
class LeafTables {
public:
    LeafTables() = default;
    LeafTables(std::size_t num_labels, std::vector<double> class_dist, std::vector<TransitionEntry> entries);

    std::size_t num_labels() const noexcept { return num_labels_; }
    std::size_t leaf_count() const noexcept { return num_labels_ == 0 ? 0 : class_dist_.size() / num_labels_; }
    std::span<const double> class_dist(std::uint32_t leaf) const noexcept
    {
        return {class_dist_.data() + static_cast<std::size_t>(leaf) * num_labels_, num_labels_};
    }
    /// Stored entry for (prev_leaf -> cur_leaf) or nullptr.
    const TransitionEntry* find(std::uint32_t prev_leaf, std::uint32_t cur_leaf) const noexcept;
    const std::vector<TransitionEntry>& entries() const noexcept { return entries_; }
    const std::vector<double>& class_table() const noexcept { return class_dist_; }

    bool operator==(const LeafTables&) const = default;

private:
    std::size_t num_labels_ = 0;
    std::vector<double> class_dist_;
    /// Sorted by (prev_leaf, cur_leaf).
    std::vector<TransitionEntry> entries_;
};

/// Leaf statistics from the training frames. Transition entries are kept only
/// for leaf pairs with at least min_transition_support pairs; cfg.d == 0 stores none.
LeafTables finalize_leaves(const TransitionTree& tree, const TrainingSet& data, const TreeTrainConfig& cfg);

} // namespace tforest
