#include "tforest/stats.hpp"

#include "tforest/error.hpp"

#include <algorithm>

namespace tforest {

double weighted_entropy(std::span<const std::uint64_t> counts) noexcept
{
    std::uint64_t n = 0;
    double sum = 0.0;
    for (auto c : counts) {
        n += c;
        sum += xlog2x(c);
    }
    return std::max(0.0, xlog2x(n) - sum);
}

void LabelHistogram::add(LabelId label, std::uint64_t n)
{
    counts_.at(label) += n;
    total_ += n;
}

void LabelHistogram::remove(LabelId label, std::uint64_t n)
{
    auto& c = counts_.at(label);
    if (c < n)
        throw InvariantViolation("label histogram count underflow");
    c -= n;
    total_ -= n;
}

std::size_t LabelHistogram::support() const noexcept
{
    return static_cast<std::size_t>(std::count_if(counts_.begin(), counts_.end(), [](auto c) { return c > 0; }));
}

void TransitionHistogram::add(LabelId prev, LabelId cur, std::uint64_t n)
{
    if (prev >= num_labels_ || cur >= num_labels_)
        throw DataError("label outside the transition histogram vocabulary");
    counts_[prev * num_labels_ + cur] += n;
    total_ += n;
}

void TransitionHistogram::remove(LabelId prev, LabelId cur, std::uint64_t n)
{
    auto& c = counts_.at(prev * num_labels_ + cur);
    if (c < n)
        throw InvariantViolation("transition histogram count underflow");
    c -= n;
    total_ -= n;
}

double shannon_entropy(const LabelHistogram& h) noexcept
{
    return h.total() == 0 ? 0.0 : weighted_entropy(h.counts()) / static_cast<double>(h.total());
}

double shannon_entropy(const TransitionHistogram& h) noexcept
{
    return h.total() == 0 ? 0.0 : weighted_entropy(h.counts()) / static_cast<double>(h.total());
}

double classification_objective(const LabelHistogram& left, const LabelHistogram& right) noexcept
{
    return weighted_entropy(left.counts()) + weighted_entropy(right.counts());
}

const TransitionHistogram* TransitionSetTable::find(NodeId src, NodeId dst) const
{
    const auto it = entries.find({src, dst});
    return it == entries.end() ? nullptr : &it->second;
}

std::uint64_t TransitionSetTable::total_pairs() const noexcept
{
    std::uint64_t n = 0;
    for (const auto& [key, h] : entries)
        n += h.total();
    return n;
}

TransitionSetTable build_transition_sets(std::span<const NodeId> assignment, const SequenceLayout& layout,
                                         std::size_t num_labels, std::size_t d, const std::set<NodeId>* tracked)
{
    if (d < 1)
        throw UsageError("temporal distance must be >= 1");
    if (assignment.size() != layout.frame_count())
        throw UsageError("assignment size does not match the frame count");
    for (std::size_t g = 0; g < assignment.size(); ++g) {
        const NodeId node = assignment[g];
        if (node == kUnassigned || (tracked && !tracked->contains(node)))
            throw DataError("unmapped frame " + std::to_string(g));
    }

    TransitionSetTable table;
    table.d = d;
    table.num_labels = num_labels;
    for_each_pair(layout, d, [&](std::size_t earlier, std::size_t later) {
        auto [it, inserted] = table.entries.try_emplace({assignment[earlier], assignment[later]}, num_labels);
        it->second.add(layout.labels[earlier], layout.labels[later]);
    });
    return table;
}

namespace {

std::vector<NodeId> children_of(NodeId node)
{
    return {2 * node + 1, 2 * node + 2};
}

} // namespace

double transition_objective_Et(const TransitionSetTable& table, NodeId parent)
{
    double sum = 0.0;
    for (NodeId a : children_of(parent))
        for (NodeId b : children_of(parent))
            if (const auto* h = table.find(a, b))
                sum += weighted_entropy(h->counts());
    return sum;
}

double local_transition_objective(const TransitionSetTable& table, NodeId j, std::span<const NodeId> peers)
{
    if (std::find(peers.begin(), peers.end(), j) != peers.end())
        throw UsageError("node " + std::to_string(j) + " listed among its own peers");
    std::vector<NodeId> peer_children;
    for (NodeId p : peers)
        for (NodeId c : children_of(p))
            peer_children.push_back(c);
    const auto own = children_of(j);
    return local_transition_objective_buckets(table, own, peer_children);
}

double local_transition_objective_buckets(const TransitionSetTable& table, std::span<const NodeId> own,
                                          std::span<const NodeId> peer_buckets)
{
    const std::set<NodeId> own_set(own.begin(), own.end());
    const std::set<NodeId> peer_set(peer_buckets.begin(), peer_buckets.end());
    for (NodeId n : own_set)
        if (peer_set.contains(n))
            throw UsageError("bucket " + std::to_string(n) + " is both own and peer");

    double sum = 0.0;
    for (const auto& [key, h] : table.entries) {
        const bool src_own = own_set.contains(key.first);
        const bool dst_own = own_set.contains(key.second);
        const bool counted = (src_own && dst_own) || (src_own && peer_set.contains(key.second)) ||
                             (dst_own && peer_set.contains(key.first));
        if (counted)
            sum += weighted_entropy(h.counts());
    }
    return sum;
}

double global_transition_objective(const TransitionSetTable& table) noexcept
{
    double sum = 0.0;
    for (const auto& [key, h] : table.entries)
        sum += weighted_entropy(h.counts());
    return sum;
}

IncrementalTransitionSets::IncrementalTransitionSets(const SequenceLayout& layout, std::size_t num_labels,
                                                     std::size_t d, std::vector<NodeId> assignment)
    : layout_(layout), assignment_(std::move(assignment))
{
    table_ = build_transition_sets(assignment_, layout_, num_labels, d);
    sequence_of_.resize(layout_.frame_count());
    for (std::size_t s = 0; s < layout_.sequence_count(); ++s)
        for (std::size_t g = layout_.offsets[s]; g < layout_.offsets[s + 1]; ++g)
            sequence_of_[g] = s;
}

void IncrementalTransitionSets::adjust(std::size_t earlier, std::size_t later, bool add)
{
    const std::pair key{assignment_[earlier], assignment_[later]};
    const LabelId prev = layout_.labels[earlier];
    const LabelId cur = layout_.labels[later];
    if (add) {
        auto [it, inserted] = table_.entries.try_emplace(key, table_.num_labels);
        it->second.add(prev, cur);
        return;
    }
    const auto it = table_.entries.find(key);
    if (it == table_.entries.end())
        throw InvariantViolation("incremental transition table lost a pair");
    it->second.remove(prev, cur);
    if (it->second.total() == 0)
        table_.entries.erase(it);
}

void IncrementalTransitionSets::move_frame(std::size_t frame, NodeId node)
{
    if (frame >= assignment_.size())
        throw UsageError("frame index out of range");
    if (node == kUnassigned)
        throw DataError("unmapped frame " + std::to_string(frame));
    if (assignment_[frame] == node)
        return;
    const std::size_t d = table_.d;
    const std::size_t s = sequence_of_[frame];
    const bool has_prev = frame >= layout_.offsets[s] + d;
    const bool has_next = frame + d < layout_.offsets[s + 1];

    if (has_prev)
        adjust(frame - d, frame, false);
    if (has_next)
        adjust(frame, frame + d, false);
    assignment_[frame] = node;
    if (has_prev)
        adjust(frame - d, frame, true);
    if (has_next)
        adjust(frame, frame + d, true);
}

} // namespace tforest
