#include "oracles/oracles.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace oracle {

PairCounts enumerate_transition_sets(const std::vector<std::vector<LabelId>>& labels,
                                     const std::vector<std::vector<NodeId>>& nodes, std::size_t d)
{
    PairCounts out;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const std::size_t n = labels[s].size();
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                if (b > a && b - a == d)
                    ++out[{nodes[s][a], nodes[s][b]}][{labels[s][a], labels[s][b]}];
    }
    return out;
}

PairCounts to_pair_counts(const tforest::TransitionSetTable& table)
{
    PairCounts out;
    for (const auto& [key, hist] : table.entries)
        for (std::size_t p = 0; p < table.num_labels; ++p)
            for (std::size_t c = 0; c < table.num_labels; ++c)
                if (const auto n = hist.count(static_cast<LabelId>(p), static_cast<LabelId>(c)))
                    out[key][{static_cast<LabelId>(p), static_cast<LabelId>(c)}] = n;
    return out;
}

double count_weighted_entropy(std::span<const std::uint64_t> counts)
{
    double n = 0.0;
    for (auto c : counts)
        n += static_cast<double>(c);
    if (n == 0.0)
        return 0.0;
    double h = 0.0;
    for (auto c : counts)
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log2(p);
        }
    return n * h;
}

double count_weighted_entropy(const LabelPairCounts& h)
{
    std::vector<std::uint64_t> counts;
    for (const auto& [k, c] : h)
        counts.push_back(c);
    return count_weighted_entropy(counts);
}

LocalTerms local_objective_terms(const PairCounts& sets, NodeId j, std::span<const NodeId> peers)
{
    const auto cost = [&](NodeId a, NodeId b) {
        const auto it = sets.find({a, b});
        return it == sets.end() ? 0.0 : count_weighted_entropy(it->second);
    };
    const NodeId mine[2] = {2 * j + 1, 2 * j + 2};
    LocalTerms t;
    for (auto m : mine)
        for (auto n : mine)
            t.within += cost(m, n);
    for (auto i : peers) {
        const NodeId theirs[2] = {2 * i + 1, 2 * i + 2};
        for (auto m : mine)
            for (auto n : theirs) {
                t.outgoing += cost(m, n);
                t.incoming += cost(n, m);
            }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Reference greedy forest
// ---------------------------------------------------------------------------

namespace {

struct Frame {
    const std::vector<double>* x;
    LabelId y;
};

double split_cost(const std::vector<Frame>& frames, const std::vector<std::size_t>& node, std::uint32_t f, double thr,
                  std::size_t num_labels, bool& feasible)
{
    std::vector<std::uint64_t> left(num_labels, 0), right(num_labels, 0);
    std::size_t nl = 0;
    for (auto i : node) {
        if ((*frames[i].x)[f] <= thr) {
            ++left[frames[i].y];
            ++nl;
        } else {
            ++right[frames[i].y];
        }
    }
    feasible = nl > 0 && nl < node.size();
    // n log2 n - sum c log2 c per child, the usual closed form of n * H.
    const auto part = [](const std::vector<std::uint64_t>& h) {
        const auto x = [](std::uint64_t c) { return c == 0 ? 0.0 : double(c) * std::log2(double(c)); };
        std::uint64_t n = 0;
        double s = 0.0;
        for (auto c : h) {
            n += c;
            s += x(c);
        }
        return std::max(0.0, x(n) - s);
    };
    return part(left) + part(right);
}

} // namespace

std::vector<RefTree> reference_random_forest(std::span<const tforest::FeatureSequence> sequences,
                                             std::size_t num_labels, const tforest::ForestConfig& cfg)
{
    const auto& tc = cfg.tree;
    std::vector<RefTree> forest;
    for (std::size_t m = 0; m < cfg.num_trees; ++m) {
        tforest::Rng rng(tforest::derive_seed(cfg.seed, m + 1));

        std::vector<const tforest::FeatureSequence*> picked;
        for (std::size_t i = 0; i < sequences.size(); ++i)
            picked.push_back(cfg.bagging ? &sequences[tforest::uniform_index(rng, sequences.size())]
                                         : &sequences[i]);
        std::vector<Frame> frames;
        for (const auto* s : picked)
            for (const auto& f : s->frames)
                frames.push_back({&f.vector, f.label});
        const std::size_t dim = frames.at(0).x->size();
        std::size_t n_feat = tc.n_candidate_features;
        if (n_feat == 0)
            n_feat = static_cast<std::size_t>(std::lround(std::sqrt(double(dim))));
        n_feat = std::max<std::size_t>(1, std::min(n_feat, dim));

        RefTree tree;
        struct Open {
            std::size_t index;
            std::vector<std::size_t> members;
        };
        std::vector<Open> level(1);
        tree.push_back({0, true, 0, 0.0});
        level[0].index = 0;
        level[0].members.resize(frames.size());
        std::iota(level[0].members.begin(), level[0].members.end(), 0);

        for (std::size_t depth = 0; !level.empty(); ++depth) {
            std::vector<bool> can_split;
            for (const auto& o : level) {
                bool mixed = false;
                for (auto i : o.members)
                    mixed = mixed || frames[i].y != frames[o.members[0]].y;
                const bool ok = depth < tc.max_depth && o.members.size() >= tc.min_samples_split && mixed;
                can_split.push_back(ok);
                if (ok)
                    (void)tforest::uniform01(rng); // criterion coin, always "classification" here
            }

            std::vector<Open> next;
            for (std::size_t k = 0; k < level.size(); ++k) {
                if (!can_split[k])
                    continue;
                const auto& o = level[k];
                std::vector<std::uint32_t> pool(dim);
                std::iota(pool.begin(), pool.end(), 0u);
                bool have = false;
                double best = 0.0;
                std::uint32_t best_f = 0;
                double best_t = 0.0;
                for (std::size_t a = 0; a < n_feat; ++a) {
                    std::swap(pool[a], pool[a + tforest::uniform_index(rng, dim - a)]);
                    const std::uint32_t f = pool[a];
                    double lo = (*frames[o.members[0]].x)[f], hi = lo;
                    for (auto i : o.members) {
                        lo = std::min(lo, (*frames[i].x)[f]);
                        hi = std::max(hi, (*frames[i].x)[f]);
                    }
                    for (std::size_t b = 0; b < tc.n_candidate_thresholds; ++b) {
                        const double thr = lo + tforest::uniform01(rng) * (hi - lo);
                        bool feasible = false;
                        const double c = split_cost(frames, o.members, f, thr, num_labels, feasible);
                        if (feasible && (!have || c < best)) {
                            have = true;
                            best = c;
                            best_f = f;
                            best_t = thr;
                        }
                    }
                }
                if (!have)
                    continue;
                RefNode& node = tree[o.index];
                node.leaf = false;
                node.feature = best_f;
                node.threshold = best_t;
                const NodeId id = node.id;
                Open l{tree.size(), {}}, r{tree.size() + 1, {}};
                tree.push_back({2 * id + 1, true, 0, 0.0});
                tree.push_back({2 * id + 2, true, 0, 0.0});
                for (auto i : o.members)
                    ((*frames[i].x)[best_f] <= best_t ? l : r).members.push_back(i);
                next.push_back(std::move(l));
                next.push_back(std::move(r));
            }
            level = std::move(next);
        }
        forest.push_back(std::move(tree));
    }
    return forest;
}

std::uint32_t reference_route(const tforest::TransitionTree& tree, std::span<const double> x)
{
    std::map<NodeId, const tforest::TreeNode*> by_id;
    for (const auto& n : tree.nodes())
        by_id[n.id] = &n;
    const std::function<const tforest::TreeNode*(NodeId)> descend = [&](NodeId id) {
        const auto* n = by_id.at(id);
        if (n->is_leaf)
            return n;
        return descend(x[n->split.feature] - n->split.threshold <= 0 ? 2 * id + 1 : 2 * id + 2);
    };
    const auto* leaf = descend(0);
    std::uint32_t rank = 0;
    for (const auto& n : tree.nodes()) {
        if (&n == leaf)
            return rank;
        rank += n.is_leaf;
    }
    throw std::logic_error("leaf not found");
}

} // namespace oracle
