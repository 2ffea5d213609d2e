#include "tforest/transition_tree.hpp"

#include "tforest/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace tforest {

// ---------------------------------------------------------------------------
// TransitionTree
// ---------------------------------------------------------------------------

TransitionTree::TransitionTree(std::vector<TreeNode> nodes, std::size_t dim) : nodes_(std::move(nodes)), dim_(dim)
{
    if (nodes_.empty())
        throw DataError("tree without nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        if (n.is_leaf) {
            if (n.leaf_id != leaf_count_)
                throw DataError("leaf ids are not dense in node order");
            ++leaf_count_;
        } else {
            if (n.left <= i || n.right <= i || n.left >= nodes_.size() || n.right >= nodes_.size())
                throw DataError("internal node with invalid children");
            if (n.split.feature >= dim_)
                throw DataError("split feature index exceeds the dimension");
        }
    }
}

std::uint32_t TransitionTree::route(std::span<const double> x) const
{
    if (x.size() != dim_)
        throw UsageError("feature dimension " + std::to_string(x.size()) + " does not match the trained " +
                         std::to_string(dim_));
    return route_unchecked(x.data());
}

std::uint32_t TransitionTree::route_unchecked(const double* x) const noexcept
{
    const TreeNode* node = &nodes_[0];
    while (!node->is_leaf)
        node = &nodes_[x[node->split.feature] <= node->split.threshold ? node->left : node->right];
    return node->leaf_id;
}

std::size_t TransitionTree::depth() const noexcept
{
    std::size_t deepest = 0;
    for (const auto& n : nodes_) {
        std::size_t level = 0;
        for (NodeId id = n.id; id > 0; id = (id - 1) / 2)
            ++level;
        deepest = std::max(deepest, level);
    }
    return deepest;
}

// ---------------------------------------------------------------------------
// Configuration and candidates
// ---------------------------------------------------------------------------

void validate(const TreeTrainConfig& cfg)
{
    if (cfg.max_depth < 1)
        throw UsageError("max_depth must be >= 1");
    if (cfg.max_depth > 60)
        throw UsageError("max_depth must be <= 60");
    if (!(cfg.transition_node_prob >= 0.0 && cfg.transition_node_prob <= 1.0))
        throw UsageError("transition_node_prob must lie in [0, 1]");
    if (cfg.n_candidate_thresholds < 1)
        throw UsageError("n_candidate_thresholds must be >= 1");
    if (!(cfg.laplace_alpha >= 0.0))
        throw UsageError("laplace_alpha must be >= 0");
}

std::size_t candidate_feature_count(const TreeTrainConfig& cfg, std::size_t dim)
{
    std::size_t n = cfg.n_candidate_features;
    if (n == 0)
        n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim))));
    return std::clamp<std::size_t>(n, 1, dim);
}

std::vector<SplitParams> sample_candidates(Rng& rng, const TrainingSet& data, std::span<const std::uint32_t> samples,
                                           const TreeTrainConfig& cfg)
{
    if (samples.empty())
        throw UsageError("cannot sample split candidates for an empty node");
    const std::size_t dim = data.dim();
    const std::size_t n_features = candidate_feature_count(cfg, dim);

    std::vector<std::uint32_t> perm(dim);
    std::iota(perm.begin(), perm.end(), 0u);
    std::vector<SplitParams> out;
    out.reserve(n_features * cfg.n_candidate_thresholds);
    for (std::size_t i = 0; i < n_features; ++i) {
        const std::size_t j = i + uniform_index(rng, dim - i);
        std::swap(perm[i], perm[j]);
        const std::uint32_t feature = perm[i];

        double lo = data.value(samples[0], feature);
        double hi = lo;
        for (auto g : samples) {
            const double v = data.value(g, feature);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (std::size_t t = 0; t < cfg.n_candidate_thresholds; ++t)
            out.push_back({feature, lo + uniform01(rng) * (hi - lo)});
    }
    return out;
}

namespace {

/// Index of the first minimum finite score.
std::optional<std::size_t> first_argmin(std::span<const double> scores)
{
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] != kernels::kInfeasible && (!best || scores[i] < scores[*best]))
            best = i;
    return best;
}

bool mixed_labels(const TrainingSet& data, std::span<const std::uint32_t> samples)
{
    for (auto g : samples)
        if (data.label(g) != data.label(samples[0]))
            return true;
    return false;
}

} // namespace

std::optional<SplitParams> optimize_classification_node(std::span<const std::uint32_t> samples,
                                                        const TrainingSet& data, const TreeTrainConfig& cfg, Rng& rng)
{
    if (samples.size() < cfg.min_samples_split || samples.empty())
        throw UsageError("node has fewer than min_samples_split samples");
    const auto candidates = sample_candidates(rng, data, samples, cfg);
    const auto scores = kernels::classification_scores(data, samples, candidates);
    const auto best = first_argmin(scores);
    if (!best)
        return std::nullopt;
    return candidates[*best];
}

// ---------------------------------------------------------------------------
// Level learning
// ---------------------------------------------------------------------------

namespace {

/// Mutable state of one level during coordinate descent.
class LevelState {
public:
    LevelState(std::span<const FrontierNode> frontier, std::span<const NodeId> closed, const TrainingSet& data,
               std::span<const std::optional<SplitParams>> splits)
        : frontier_(frontier), data_(data), child_bucket_(data.size()), child_node_(data.size()),
          position_(data.size(), kernels::kNotInNode)
    {
        // Compact bucket ids: closed leaves first (ascending node id), then the
        // frontier in id order (two ids per split node, one otherwise).
        std::map<NodeId, std::uint32_t> closed_ids;
        for (NodeId id : closed)
            if (id != kUnassigned)
                closed_ids.emplace(id, 0);
        std::uint32_t next = 0;
        for (auto& [id, compact] : closed_ids)
            compact = next++;
        for (std::size_t g = 0; g < data.size(); ++g) {
            if (closed[g] != kUnassigned) {
                child_bucket_[g] = closed_ids.at(closed[g]);
                child_node_[g] = closed[g];
            }
        }

        left_bucket_.resize(frontier.size());
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            left_bucket_[i] = next;
            next += splits[i] ? 2 : 1;
            assign(i, splits[i]);
        }
    }

    /// Reassigns the frames of frontier node i under `split` (nullopt = single bucket).
    /// Returns the frames whose child changed.
    std::vector<std::uint32_t> assign(std::size_t i, const std::optional<SplitParams>& split)
    {
        std::vector<std::uint32_t> moved;
        const NodeId id = frontier_[i].id;
        for (auto g : frontier_[i].samples) {
            std::uint32_t bucket = left_bucket_[i];
            NodeId node = id;
            if (split) {
                const bool left = split->goes_left(data_.row(g));
                bucket += left ? 0 : 1;
                node = left ? 2 * id + 1 : 2 * id + 2;
            }
            if (child_node_[g] != node)
                moved.push_back(g);
            child_bucket_[g] = bucket;
            child_node_[g] = node;
        }
        return moved;
    }

    kernels::TransitionProblem problem(std::size_t i, std::size_t d)
    {
        const auto& samples = frontier_[i].samples;
        for (std::size_t k = 0; k < samples.size(); ++k)
            position_[samples[k]] = static_cast<std::uint32_t>(k);
        kernels::TransitionProblem p;
        p.data = &data_;
        p.d = d;
        p.samples = samples;
        p.child_bucket = child_bucket_;
        p.position = position_;
        p.left_bucket = left_bucket_[i];
        p.right_bucket = left_bucket_[i] + 1;
        return p;
    }

    void release(std::size_t i)
    {
        for (auto g : frontier_[i].samples)
            position_[g] = kernels::kNotInNode;
    }

    const std::vector<NodeId>& child_nodes() const noexcept { return child_node_; }

private:
    std::span<const FrontierNode> frontier_;
    const TrainingSet& data_;
    std::vector<std::uint32_t> child_bucket_;
    std::vector<NodeId> child_node_;
    std::vector<std::uint32_t> position_;
    std::vector<std::uint32_t> left_bucket_;
};

} // namespace

LevelResult learn_level(std::span<const FrontierNode> frontier, std::span<const NodeId> closed_buckets,
                        const TrainingSet& data, std::size_t depth, const TreeTrainConfig& cfg, Rng& rng,
                        TrainStats* stats, const LevelObserver* observer)
{
    if (closed_buckets.size() != data.size())
        throw UsageError("closed bucket map does not match the frame count");
    for (std::size_t i = 1; i < frontier.size(); ++i)
        if (frontier[i].id <= frontier[i - 1].id)
            throw UsageError("frontier nodes must be in ascending id order");

    LevelResult result;
    result.splits.resize(frontier.size());
    result.transition_criterion.assign(frontier.size(), false);

    // (1) criterion assignment for every splittable node
    std::vector<bool> splittable(frontier.size(), false);
    const bool transitions_enabled = cfg.d >= 1;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
        const auto& samples = frontier[i].samples;
        splittable[i] = depth < cfg.max_depth && samples.size() >= cfg.min_samples_split && !samples.empty() &&
                        mixed_labels(data, samples);
        if (splittable[i]) {
            const double u = uniform01(rng);
            result.transition_criterion[i] = transitions_enabled && u < cfg.transition_node_prob;
        }
    }

    // (2) classification nodes, then (3) transition nodes initialized the same way
    for (const bool transition_pass : {false, true}) {
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            if (!splittable[i] || result.transition_criterion[i] != transition_pass)
                continue;
            result.splits[i] = optimize_classification_node(frontier[i].samples, data, cfg, rng);
            if (!result.splits[i])
                result.transition_criterion[i] = false;
        }
    }

    std::vector<std::size_t> transition_nodes;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
        if (result.transition_criterion[i])
            transition_nodes.push_back(i);
        if (stats && result.splits[i])
            ++(result.transition_criterion[i] ? stats->transition_nodes : stats->classification_nodes);
    }
    if (stats)
        ++stats->levels;
    if (!transitions_enabled)
        return result;

    // (4) coordinate descent over the transition nodes
    LevelState state(frontier, closed_buckets, data, result.splits);
    std::optional<IncrementalTransitionSets> audit;
    double global = 0.0;
    if (cfg.audit_objective) {
        audit.emplace(data.layout(), data.num_labels(), cfg.d, state.child_nodes());
        global = global_transition_objective(audit->table());
        if (observer && observer->on_initialized)
            observer->on_initialized(global);
    }

    for (std::size_t sweep = 0; sweep < cfg.coordinate_descent_sweeps && !transition_nodes.empty(); ++sweep) {
        bool changed = false;
        for (std::size_t i : transition_nodes) {
            const auto candidates = sample_candidates(rng, data, frontier[i].samples, cfg);
            const auto problem = state.problem(i, cfg.d);
            const auto scores = kernels::transition_scores(problem, candidates);
            const SplitParams current_split = *result.splits[i];
            const double current = kernels::transition_scores(problem, std::span(&current_split, 1))[0];
            state.release(i);

            const auto best = first_argmin(scores);
            const double margin = 1e-9 * std::max(1.0, std::abs(current));
            if (!best || !(scores[*best] < current - margin))
                continue;

            result.splits[i] = candidates[*best];
            const auto moved = state.assign(i, result.splits[i]);
            changed = true;
            if (stats)
                ++stats->accepted_updates;
            if (audit) {
                for (auto g : moved)
                    audit->move_frame(g, state.child_nodes()[g]);
                const double after = global_transition_objective(audit->table());
                if (stats)
                    ++stats->audits;
                if (observer && observer->on_accepted_update)
                    observer->on_accepted_update(global, after);
                if (after > global)
                    throw InvariantViolation("global transition objective increased from " + std::to_string(global) +
                                             " to " + std::to_string(after));
                global = after;
            }
        }
        if (stats)
            ++stats->sweeps;
        if (!changed)
            break;
    }

    result.global_objective = global;
    if (stats && audit)
        stats->last_level_objective = global;
    return result;
}

TransitionTree grow_tree(const TrainingSet& data, const TreeTrainConfig& cfg, Rng& rng, TrainStats* stats,
                         const LevelObserver* observer)
{
    validate(cfg);
    if (data.size() == 0)
        throw UsageError("cannot grow a tree on an empty training set");

    std::vector<TreeNode> nodes(1);
    std::vector<std::uint32_t> frontier_index{0};
    std::vector<FrontierNode> frontier(1);
    frontier[0].id = 0;
    frontier[0].samples.resize(data.size());
    std::iota(frontier[0].samples.begin(), frontier[0].samples.end(), 0u);
    std::vector<NodeId> closed(data.size(), kUnassigned);

    for (std::size_t depth = 0; !frontier.empty(); ++depth) {
        const LevelResult level = learn_level(frontier, closed, data, depth, cfg, rng, stats, observer);

        std::vector<FrontierNode> next;
        std::vector<std::uint32_t> next_index;
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            FrontierNode& f = frontier[i];
            const std::uint32_t idx = frontier_index[i];
            if (!level.splits[i]) {
                for (auto g : f.samples)
                    closed[g] = f.id;
                continue;
            }
            const SplitParams split = *level.splits[i];
            FrontierNode left{2 * f.id + 1, {}}, right{2 * f.id + 2, {}};
            for (auto g : f.samples)
                (split.goes_left(data.row(g)) ? left : right).samples.push_back(g);

            nodes[idx].is_leaf = false;
            nodes[idx].split = split;
            nodes[idx].left = static_cast<std::uint32_t>(nodes.size());
            nodes[idx].right = static_cast<std::uint32_t>(nodes.size() + 1);
            TreeNode child;
            child.id = left.id;
            nodes.push_back(child);
            child.id = right.id;
            nodes.push_back(child);
            next_index.push_back(nodes[idx].left);
            next_index.push_back(nodes[idx].right);
            next.push_back(std::move(left));
            next.push_back(std::move(right));
        }
        frontier = std::move(next);
        frontier_index = std::move(next_index);
    }

    std::uint32_t leaf = 0;
    for (auto& n : nodes)
        if (n.is_leaf)
            n.leaf_id = leaf++;
    return TransitionTree(std::move(nodes), data.dim());
}

// ---------------------------------------------------------------------------
// Leaves
// ---------------------------------------------------------------------------

LeafTables::LeafTables(std::size_t num_labels, std::vector<double> class_dist, std::vector<TransitionEntry> entries)
    : num_labels_(num_labels), class_dist_(std::move(class_dist)), entries_(std::move(entries))
{
    if (num_labels_ == 0 || class_dist_.size() % num_labels_ != 0)
        throw DataError("class distribution table has the wrong size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].matrix.size() != num_labels_ * num_labels_)
            throw DataError("transition matrix has the wrong size");
        if (entries_[i].prev_leaf >= leaf_count() || entries_[i].cur_leaf >= leaf_count())
            throw DataError("transition entry refers to a missing leaf");
        if (i > 0 && !(std::pair(entries_[i - 1].prev_leaf, entries_[i - 1].cur_leaf) <
                       std::pair(entries_[i].prev_leaf, entries_[i].cur_leaf)))
            throw DataError("transition entries are not sorted");
    }
}

const TransitionEntry* LeafTables::find(std::uint32_t prev_leaf, std::uint32_t cur_leaf) const noexcept
{
    const auto key = std::pair(prev_leaf, cur_leaf);
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), key, [](const TransitionEntry& e, const auto& k) {
        return std::pair(e.prev_leaf, e.cur_leaf) < k;
    });
    if (it == entries_.end() || it->prev_leaf != prev_leaf || it->cur_leaf != cur_leaf)
        return nullptr;
    return &*it;
}

namespace {

void smoothed(std::span<const std::uint64_t> counts, double alpha, std::span<double> out)
{
    std::uint64_t n = 0;
    for (auto c : counts)
        n += c;
    const double denom = static_cast<double>(n) + alpha * static_cast<double>(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        out[i] = denom > 0.0 ? (static_cast<double>(counts[i]) + alpha) / denom : 1.0 / static_cast<double>(counts.size());
}

} // namespace

LeafTables finalize_leaves(const TransitionTree& tree, const TrainingSet& data, const TreeTrainConfig& cfg)
{
    const std::size_t y = data.num_labels();
    const std::size_t leaves = tree.leaf_count();
    std::vector<std::uint32_t> leaf_of(data.size());
    for (std::size_t g = 0; g < data.size(); ++g)
        leaf_of[g] = tree.route_unchecked(data.row(g).data());

    std::vector<std::uint64_t> counts(leaves * y, 0);
    for (std::size_t g = 0; g < data.size(); ++g)
        ++counts[leaf_of[g] * y + data.label(g)];
    std::vector<double> class_dist(leaves * y);
    for (std::size_t l = 0; l < leaves; ++l)
        smoothed(std::span(counts).subspan(l * y, y), cfg.laplace_alpha, std::span(class_dist).subspan(l * y, y));

    std::vector<TransitionEntry> entries;
    if (cfg.d >= 1) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint64_t>> pairs;
        for_each_pair(data.layout(), cfg.d, [&](std::size_t earlier, std::size_t later) {
            auto& h = pairs[{leaf_of[earlier], leaf_of[later]}];
            if (h.empty())
                h.assign(y * y, 0);
            ++h[data.label(earlier) * y + data.label(later)];
        });
        for (const auto& [key, h] : pairs) {
            const std::uint64_t support = std::accumulate(h.begin(), h.end(), std::uint64_t{0});
            if (support < cfg.min_transition_support)
                continue;
            TransitionEntry e{key.first, key.second, support, std::vector<double>(y * y)};
            const auto fallback = std::span(class_dist).subspan(key.second * y, y);
            for (std::size_t prev = 0; prev < y; ++prev) {
                const auto row_counts = std::span(h).subspan(prev * y, y);
                auto row = std::span(e.matrix).subspan(prev * y, y);
                if (std::accumulate(row_counts.begin(), row_counts.end(), std::uint64_t{0}) == 0)
                    std::copy(fallback.begin(), fallback.end(), row.begin());
                else
                    smoothed(row_counts, cfg.laplace_alpha, row);
            }
            entries.push_back(std::move(e));
        }
    }
    return LeafTables(y, std::move(class_dist), std::move(entries));
}

} // namespace tforest
