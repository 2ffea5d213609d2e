#include "tforest/kernels.hpp"

#include "tforest/detail/parallel.hpp"
#include "tforest/error.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

namespace tforest::kernels {

namespace {

double child_objective(std::span<const std::uint64_t> left, std::span<const std::uint64_t> right)
{
    return weighted_entropy(left) + weighted_entropy(right);
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

std::vector<double> classification_serial(const TrainingSet& data, std::span<const std::uint32_t> samples,
                                          std::span<const SplitParams> candidates)
{
    const std::size_t y = data.num_labels();
    std::vector<double> scores(candidates.size());
    std::vector<std::uint64_t> left(y), right(y);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        std::fill(left.begin(), left.end(), 0);
        std::fill(right.begin(), right.end(), 0);
        std::size_t n_left = 0;
        for (auto g : samples) {
            if (candidates[c].goes_left(data.row(g))) {
                ++left[data.label(g)];
                ++n_left;
            } else {
                ++right[data.label(g)];
            }
        }
        scores[c] = (n_left == 0 || n_left == samples.size()) ? kInfeasible : child_objective(left, right);
    }
    return scores;
}

std::vector<double> classification_parallel(const TrainingSet& data, std::span<const std::uint32_t> samples,
                                            std::span<const SplitParams> candidates)
{
    const std::size_t y = data.num_labels();
    std::vector<double> scores(candidates.size(), kInfeasible);

    // Candidates grouped by feature; one sort of the node's values per feature.
    std::map<std::uint32_t, std::vector<std::uint32_t>> by_feature;
    for (std::size_t c = 0; c < candidates.size(); ++c)
        by_feature[candidates[c].feature].push_back(static_cast<std::uint32_t>(c));
    std::vector<std::pair<std::uint32_t, std::vector<std::uint32_t>>> groups(by_feature.begin(), by_feature.end());

    std::vector<std::uint64_t> totals(y, 0);
    for (auto g : samples)
        ++totals[data.label(g)];

    detail::parallel_for(groups.size(), [&](std::size_t gi) {
        const std::uint32_t feature = groups[gi].first;
        auto order = groups[gi].second;
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return candidates[a].threshold < candidates[b].threshold;
        });

        std::vector<std::pair<double, LabelId>> column;
        column.reserve(samples.size());
        for (auto g : samples)
            column.emplace_back(data.value(g, feature), data.label(g));
        std::sort(column.begin(), column.end());

        std::vector<std::uint64_t> left(y, 0), right(y, 0);
        std::size_t k = 0;
        for (auto c : order) {
            const double threshold = candidates[c].threshold;
            while (k < column.size() && column[k].first <= threshold)
                ++left[column[k++].second];
            if (k == 0 || k == column.size())
                continue;
            for (std::size_t l = 0; l < y; ++l)
                right[l] = totals[l] - left[l];
            scores[c] = child_objective(left, right);
        }
    });
    return scores;
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

void check(const TransitionProblem& p)
{
    if (!p.data || p.d < 1)
        throw UsageError("transition problem lacks data or has d < 1");
    if (p.child_bucket.size() != p.data->size() || p.position.size() != p.data->size())
        throw UsageError("transition problem arrays do not match the frame count");
    if (p.left_bucket == p.right_bucket)
        throw UsageError("left and right child buckets must differ");
}

/// Straightforward evaluation: rebuild every affected transition set in an
/// ordered map for each candidate.
std::vector<double> transition_serial(const TransitionProblem& p, std::span<const SplitParams> candidates)
{
    const TrainingSet& data = *p.data;
    const std::size_t y = data.num_labels();
    std::vector<double> scores(candidates.size());

    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& split = candidates[c];
        std::size_t n_left = 0;
        for (auto g : p.samples)
            n_left += split.goes_left(data.row(g)) ? 1 : 0;
        if (n_left == 0 || n_left == p.samples.size()) {
            scores[c] = kInfeasible;
            continue;
        }

        const auto bucket = [&](std::size_t g) -> std::uint32_t {
            if (p.position[g] == kNotInNode)
                return p.child_bucket[g];
            return split.goes_left(data.row(g)) ? p.left_bucket : p.right_bucket;
        };

        std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint64_t>> sets;
        const auto count = [&](std::size_t earlier, std::size_t later) {
            auto& h = sets[{bucket(earlier), bucket(later)}];
            if (h.empty())
                h.assign(y * y, 0);
            ++h[data.label(earlier) * y + data.label(later)];
        };
        for (auto g : p.samples) {
            if (data.has_predecessor(g, p.d))
                count(g - p.d, g);
            if (data.has_successor(g, p.d) && p.position[g + p.d] == kNotInNode)
                count(g, g + p.d);
        }

        double sum = 0.0;
        for (const auto& [key, h] : sets)
            sum += weighted_entropy(h);
        scores[c] = sum;
    }
    return scores;
}

/// Every affected pair resolved once into the histogram cells it can land in.
/// An external pair has one endpoint outside the node: its cell depends on the
/// side of its inside endpoint only. An internal pair has four possible cells.
struct PairCells {
    std::uint32_t pos_a;      // position of the earlier endpoint if inside, else of the later one
    std::uint32_t pos_b;      // position of the later endpoint for internal pairs, kNotInNode otherwise
    std::uint32_t cells[4];
};

struct CellLayout {
    std::vector<PairCells> pairs;
    std::vector<std::uint32_t> cell_group;
    std::size_t group_count = 0;
};

CellLayout build_cells(const TransitionProblem& p)
{
    const TrainingSet& data = *p.data;
    const std::uint64_t y = data.num_labels();
    CellLayout layout;

    // Groups are transition sets (src bucket, dst bucket); side 0 = left child.
    std::unordered_map<std::uint64_t, std::uint32_t> groups;
    std::unordered_map<std::uint64_t, std::uint32_t> cells;
    const auto group_id = [&](std::uint64_t src, std::uint64_t dst) {
        const std::uint64_t key = (src << 32) | dst;
        auto [it, inserted] = groups.try_emplace(key, static_cast<std::uint32_t>(groups.size()));
        return it->second;
    };
    const auto cell_id = [&](std::uint32_t group, std::uint64_t label_key) {
        const std::uint64_t key = static_cast<std::uint64_t>(group) * y * y + label_key;
        auto [it, inserted] = cells.try_emplace(key, static_cast<std::uint32_t>(cells.size()));
        if (inserted)
            layout.cell_group.push_back(group);
        return it->second;
    };
    const std::uint64_t side_bucket[2] = {p.left_bucket, p.right_bucket};

    for (std::size_t i = 0; i < p.samples.size(); ++i) {
        const std::size_t g = p.samples[i];
        if (data.has_predecessor(g, p.d)) {
            const std::size_t prev = g - p.d;
            const std::uint64_t lk = data.label(prev) * y + data.label(g);
            PairCells pc{};
            if (p.position[prev] != kNotInNode) {
                pc.pos_a = p.position[prev];
                pc.pos_b = static_cast<std::uint32_t>(i);
                for (int sa = 0; sa < 2; ++sa)
                    for (int sb = 0; sb < 2; ++sb)
                        pc.cells[sa * 2 + sb] = cell_id(group_id(side_bucket[sa], side_bucket[sb]), lk);
            } else {
                pc.pos_a = static_cast<std::uint32_t>(i);
                pc.pos_b = kNotInNode;
                for (int s = 0; s < 2; ++s)
                    pc.cells[s] = cell_id(group_id(p.child_bucket[prev], side_bucket[s]), lk);
            }
            layout.pairs.push_back(pc);
        }
        if (data.has_successor(g, p.d) && p.position[g + p.d] == kNotInNode) {
            const std::size_t next = g + p.d;
            const std::uint64_t lk = data.label(g) * y + data.label(next);
            PairCells pc{};
            pc.pos_a = static_cast<std::uint32_t>(i);
            pc.pos_b = kNotInNode;
            for (int s = 0; s < 2; ++s)
                pc.cells[s] = cell_id(group_id(side_bucket[s], p.child_bucket[next]), lk);
            layout.pairs.push_back(pc);
        }
    }
    layout.group_count = groups.size();
    return layout;
}

std::vector<double> transition_parallel(const TransitionProblem& p, std::span<const SplitParams> candidates)
{
    const TrainingSet& data = *p.data;
    const CellLayout layout = build_cells(p);
    std::vector<double> scores(candidates.size());

    struct Scratch {
        std::vector<std::uint8_t> side;
        std::vector<std::uint32_t> cell_count;
        std::vector<std::uint32_t> group_count;
        std::vector<std::uint32_t> touched_cells;
        std::vector<std::uint32_t> touched_groups;
    };

    detail::parallel_for(candidates.size(), [&](std::size_t c) {
        thread_local Scratch s;
        s.side.resize(p.samples.size());
        s.cell_count.assign(layout.cell_group.size(), 0);
        s.group_count.assign(layout.group_count, 0);
        s.touched_cells.clear();
        s.touched_groups.clear();

        const auto& split = candidates[c];
        std::size_t n_left = 0;
        for (std::size_t i = 0; i < p.samples.size(); ++i) {
            const bool left = split.goes_left(data.row(p.samples[i]));
            s.side[i] = left ? 0 : 1;
            n_left += left ? 1 : 0;
        }
        if (n_left == 0 || n_left == p.samples.size()) {
            scores[c] = kInfeasible;
            return;
        }

        for (const auto& pc : layout.pairs) {
            const std::uint32_t cell = pc.pos_b == kNotInNode ? pc.cells[s.side[pc.pos_a]]
                                                              : pc.cells[s.side[pc.pos_a] * 2 + s.side[pc.pos_b]];
            if (s.cell_count[cell]++ == 0)
                s.touched_cells.push_back(cell);
            const std::uint32_t group = layout.cell_group[cell];
            if (s.group_count[group]++ == 0)
                s.touched_groups.push_back(group);
        }

        double sum = 0.0;
        for (auto g : s.touched_groups)
            sum += xlog2x(s.group_count[g]);
        for (auto cell : s.touched_cells)
            sum -= xlog2x(s.cell_count[cell]);
        scores[c] = std::max(0.0, sum);
    });
    return scores;
}

} // namespace

std::vector<double> classification_scores(const TrainingSet& data, std::span<const std::uint32_t> samples,
                                          std::span<const SplitParams> candidates, Backend backend)
{
    for (const auto& c : candidates)
        if (c.feature >= data.dim())
            throw UsageError("candidate feature index out of range");
    return backend == Backend::serial ? classification_serial(data, samples, candidates)
                                      : classification_parallel(data, samples, candidates);
}

std::vector<double> transition_scores(const TransitionProblem& problem, std::span<const SplitParams> candidates,
                                      Backend backend)
{
    check(problem);
    for (const auto& c : candidates)
        if (c.feature >= problem.data->dim())
            throw UsageError("candidate feature index out of range");
    return backend == Backend::serial ? transition_serial(problem, candidates)
                                      : transition_parallel(problem, candidates);
}

} // namespace tforest::kernels
