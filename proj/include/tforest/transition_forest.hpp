#pragma once

#include "tforest/features.hpp"
#include "tforest/skeleton_data.hpp"
#include "tforest/transition_tree.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tforest {

struct ForestConfig {
    std::size_t num_trees = 10;
    /// Temporal order k; 0 trains a plain random forest.
    std::size_t temporal_order = 2;
    /// Template for every tree; d is filled in per tree.
    TreeTrainConfig tree;
    std::uint64_t seed = 1;
    /// Resample whole sequences with replacement for each tree.
    bool bagging = true;
    FeatureSpec features;
    /// OpenMP threads for training; 0 keeps the runtime default.
    int threads = 0;
};

void validate(const ForestConfig& cfg);

struct TrainedTree {
    TransitionTree tree;
    LeafTables leaves;
    /// Temporal distance; 0 for classification-only trees.
    std::uint32_t d = 0;

    bool operator==(const TrainedTree&) const = default;
};

class TransitionForest {
public:
    TransitionForest() = default;
    TransitionForest(std::vector<TrainedTree> trees, std::vector<std::string> label_names, bool has_background,
                     std::size_t feature_dim, std::size_t temporal_order, FeatureSpec features);

    const std::vector<TrainedTree>& trees() const noexcept { return trees_; }
    const std::vector<std::string>& label_names() const noexcept { return label_names_; }
    std::size_t num_labels() const noexcept { return label_names_.size(); }
    bool has_background() const noexcept { return has_background_; }
    LabelId background_label() const noexcept { return static_cast<LabelId>(label_names_.size() - 1); }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    std::size_t temporal_order() const noexcept { return temporal_order_; }
    const FeatureSpec& features() const noexcept { return features_; }

    /// Indices of the trees trained for temporal distance d (1 <= d <= k).
    std::span<const std::uint32_t> trees_for(std::size_t d) const;

    bool operator==(const TransitionForest&) const = default;

private:
    std::vector<TrainedTree> trees_;
    std::vector<std::string> label_names_;
    bool has_background_ = false;
    std::size_t feature_dim_ = 0;
    std::size_t temporal_order_ = 0;
    FeatureSpec features_;
    std::vector<std::vector<std::uint32_t>> by_distance_;
};

/// Temporal distance of each tree: an even round-robin over 1..k, shuffled.
/// All zeros when k = 0. Throws UsageError when 1 <= k and num_trees < k.
std::vector<std::uint32_t> assign_distances(std::size_t num_trees, std::size_t k, std::uint64_t seed);

/// Trains on already extracted features. Trees train in parallel; each draws
/// from its own stream derived from (seed, tree index), so the result does not
/// depend on the thread count.
TransitionForest train_forest(std::span<const FeatureSequence> sequences, std::vector<std::string> label_names,
                              bool has_background, const ForestConfig& cfg);

/// Extracts features per cfg.features, then trains.
TransitionForest train_forest(const Dataset& dataset, const ForestConfig& cfg);

// ---------------------------------------------------------------------------
// Model files (.tfor)
//
// Little-endian binary: magic "TFOR", u32 version, u32 k, u32 tree count,
// u32 feature dim, u32 label count, u8 has_background, label names and the
// feature spec as u32-length-prefixed strings; then per tree: u32 d, u32 node
// count, nodes (u8 kind, u64 id, u32 feature, f64 threshold, u32 left,
// u32 right, u32 leaf id), u32 leaf count, leaf class rows (f64), u32 entry
// count, entries (u32 prev leaf, u32 cur leaf, u64 support, |Y|x|Y| f64);
// finally a CRC-32 of everything before it.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelVersion = 1;

std::string serialize_forest(const TransitionForest& forest);
TransitionForest deserialize_forest(std::string_view bytes);

void save_forest(const TransitionForest& forest, const std::filesystem::path& path);
/// Throws FileNotFoundError for a missing file and ModelFormatError for a bad one.
TransitionForest load_forest(const std::filesystem::path& path);

} // namespace tforest
