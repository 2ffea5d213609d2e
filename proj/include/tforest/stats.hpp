#pragma once

#include "tforest/skeleton_data.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace tforest {

/// Level-order tree node id; the children of i are 2i+1 and 2i+2.
using NodeId = std::uint64_t;

inline constexpr NodeId kUnassigned = std::numeric_limits<NodeId>::max();

/// c * log2(c), with 0 log 0 = 0. Every entropy in the library goes through this,
/// so equal counts always give bit-identical objectives.
inline double xlog2x(std::uint64_t c) noexcept
{
    return c == 0 ? 0.0 : static_cast<double>(c) * std::log2(static_cast<double>(c));
}

/// |S| * H(S) in bits, computed as n log2 n - sum c log2 c. Never negative.
double weighted_entropy(std::span<const std::uint64_t> counts) noexcept;

class LabelHistogram {
public:
    explicit LabelHistogram(std::size_t num_labels = 0) : counts_(num_labels, 0) {}

    void add(LabelId label, std::uint64_t n = 1);
    void remove(LabelId label, std::uint64_t n = 1);

    std::span<const std::uint64_t> counts() const noexcept { return counts_; }
    std::uint64_t count(LabelId label) const { return counts_.at(label); }
    std::uint64_t total() const noexcept { return total_; }
    std::size_t num_labels() const noexcept { return counts_.size(); }
    /// Number of labels with a non-zero count.
    std::size_t support() const noexcept;

    bool operator==(const LabelHistogram&) const = default;

private:
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

/// Counts of (previous label, current label) pairs, stored densely under the
/// composite key prev * |Y| + cur.
class TransitionHistogram {
public:
    explicit TransitionHistogram(std::size_t num_labels = 0) : num_labels_(num_labels), counts_(num_labels * num_labels, 0) {}

    void add(LabelId prev, LabelId cur, std::uint64_t n = 1);
    void remove(LabelId prev, LabelId cur, std::uint64_t n = 1);

    std::uint64_t count(LabelId prev, LabelId cur) const { return counts_.at(prev * num_labels_ + cur); }
    std::span<const std::uint64_t> counts() const noexcept { return counts_; }
    std::uint64_t total() const noexcept { return total_; }
    std::size_t num_labels() const noexcept { return num_labels_; }

    bool operator==(const TransitionHistogram&) const = default;

private:
    std::size_t num_labels_ = 0;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

/// Shannon entropy in bits; 0 for an empty histogram.
double shannon_entropy(const LabelHistogram& h) noexcept;
double shannon_entropy(const TransitionHistogram& h) noexcept;

/// |left| H(left) + |right| H(right).
double classification_objective(const LabelHistogram& left, const LabelHistogram& right) noexcept;

/// Frames of all sequences laid end to end. Sequence s owns the global frame
/// indices [offsets[s], offsets[s + 1]).
struct SequenceLayout {
    std::span<const LabelId> labels;
    std::span<const std::size_t> offsets;

    std::size_t frame_count() const noexcept { return labels.size(); }
    std::size_t sequence_count() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// Calls fn(earlier, later) for every in-sequence pair of frames d steps apart.
template <class Fn>
void for_each_pair(const SequenceLayout& layout, std::size_t d, Fn&& fn)
{
    for (std::size_t s = 0; s + 1 < layout.offsets.size(); ++s)
        for (std::size_t t = layout.offsets[s] + d; t < layout.offsets[s + 1]; ++t)
            fn(t - d, t);
}

/// The transition sets between the nodes of one tree level: entry (i, j) holds
/// the label pairs of every d-distant frame pair whose earlier frame sits in
/// node i and whose later frame sits in node j. Entries are never empty.
struct TransitionSetTable {
    std::size_t d = 1;
    std::size_t num_labels = 0;
    std::map<std::pair<NodeId, NodeId>, TransitionHistogram> entries;

    const TransitionHistogram* find(NodeId src, NodeId dst) const;
    std::uint64_t total_pairs() const noexcept;

    bool operator==(const TransitionSetTable&) const = default;
};

/// Builds the table from a frame -> node assignment. When `tracked` is given,
/// every frame must map into it; otherwise every frame must simply be assigned.
/// Throws DataError("unmapped frame") on violation and UsageError for d < 1.
TransitionSetTable build_transition_sets(std::span<const NodeId> assignment, const SequenceLayout& layout,
                                         std::size_t num_labels, std::size_t d,
                                         const std::set<NodeId>* tracked = nullptr);

/// Sum of |T| H(T) over the four sets between the children of `parent`.
double transition_objective_Et(const TransitionSetTable& table, NodeId parent);

/// Local objective of node j with every other split fixed: the sets between j's
/// children, from j's children to each peer's children, and from each peer's
/// children to j's children. Throws UsageError if j is listed among its peers.
double local_transition_objective(const TransitionSetTable& table, NodeId j, std::span<const NodeId> peers);

/// Same quantity with explicit bucket lists, for levels that also carry
/// single-bucket (already stopped) nodes. The lists must be disjoint.
double local_transition_objective_buckets(const TransitionSetTable& table, std::span<const NodeId> own,
                                          std::span<const NodeId> peer_buckets);

/// Sum of |T| H(T) over every entry of the table.
double global_transition_objective(const TransitionSetTable& table) noexcept;

/// A TransitionSetTable kept in sync with a frame assignment that changes one
/// frame at a time. Moving a frame touches only the (at most two) pairs it
/// belongs to.
class IncrementalTransitionSets {
public:
    IncrementalTransitionSets(const SequenceLayout& layout, std::size_t num_labels, std::size_t d,
                              std::vector<NodeId> assignment);

    void move_frame(std::size_t frame, NodeId node);

    const TransitionSetTable& table() const noexcept { return table_; }
    std::span<const NodeId> assignment() const noexcept { return assignment_; }

private:
    void adjust(std::size_t earlier, std::size_t later, bool add);

    SequenceLayout layout_;
    std::vector<std::size_t> sequence_of_;
    std::vector<NodeId> assignment_;
    TransitionSetTable table_;
};

} // namespace tforest
