#include "oracles/oracles.hpp"
#include "test_support.hpp"

#include "tforest/error.hpp"
#include "tforest/stats.hpp"

#include <doctest.h>

#include <numeric>

using namespace tforest;

namespace {

LabelHistogram histogram(std::vector<std::uint64_t> counts)
{
    LabelHistogram h(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        h.add(static_cast<LabelId>(i), counts[i]);
    return h;
}

struct Layout {
    std::vector<LabelId> labels;
    std::vector<std::size_t> offsets{0};

    void add(const std::vector<LabelId>& seq)
    {
        labels.insert(labels.end(), seq.begin(), seq.end());
        offsets.push_back(labels.size());
    }
    SequenceLayout view() const { return {labels, offsets}; }

    std::vector<std::vector<LabelId>> split_labels() const { return split(labels); }

    template <class T>
    std::vector<std::vector<T>> split(const std::vector<T>& flat) const
    {
        std::vector<std::vector<T>> out;
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
            out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(offsets[s]),
                             flat.begin() + static_cast<std::ptrdiff_t>(offsets[s + 1]));
        return out;
    }
};

Layout random_layout(Rng& rng, std::size_t sequences, std::size_t max_len, std::size_t num_labels)
{
    Layout l;
    for (std::size_t s = 0; s < sequences; ++s) {
        std::vector<LabelId> seq(1 + uniform_index(rng, max_len));
        for (auto& y : seq)
            y = static_cast<LabelId>(uniform_index(rng, num_labels));
        l.add(seq);
    }
    return l;
}

std::vector<NodeId> random_assignment(Rng& rng, std::size_t n, const std::vector<NodeId>& nodes)
{
    std::vector<NodeId> a(n);
    for (auto& x : a)
        x = nodes[uniform_index(rng, nodes.size())];
    return a;
}

// Two sequences over children 1 and 2 of the root (labels: 0 = duck, 1 = kick):
// one transition inside each child, two mixed ones from node 2 to node 1.
struct FigureOne {
    Layout layout;
    std::vector<NodeId> nodes;

    FigureOne()
    {
        layout.add({1, 1, 0, 0});
        layout.add({1, 1});
        nodes = {2, 2, 1, 1, 2, 1};
    }
};

} // namespace

TEST_CASE("shannon entropy")
{
    CHECK(shannon_entropy(histogram({1, 1})) == 1.0);
    CHECK(shannon_entropy(histogram({4, 0})) == 0.0);
    CHECK(shannon_entropy(histogram({1, 1, 2})) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(shannon_entropy(LabelHistogram(3)) == 0.0);

    TransitionHistogram t(2);
    t.add(0, 1);
    t.add(1, 0);
    CHECK(shannon_entropy(t) == 1.0);
}

TEST_CASE("weighted entropy matches the direct formula")
{
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<std::uint64_t> counts(1 + uniform_index(rng, 6));
        for (auto& c : counts)
            c = uniform_index(rng, 50);
        const double w = weighted_entropy(counts);
        CHECK(w >= 0.0);
        CHECK(w == doctest::Approx(oracle::count_weighted_entropy(counts)).epsilon(1e-12));
    }
}

TEST_CASE("histogram bookkeeping")
{
    LabelHistogram h(3);
    h.add(2, 5);
    h.add(0);
    CHECK(h.total() == 6);
    CHECK(h.support() == 2);
    h.remove(2, 5);
    CHECK(h.total() == 1);
    CHECK_THROWS_AS(h.remove(1), InvariantViolation);

    TransitionHistogram t(2);
    CHECK_THROWS_AS(t.add(2, 0), DataError);
    t.add(1, 0, 3);
    CHECK(t.count(1, 0) == 3);
    CHECK(t.counts()[2] == 3);
}

TEST_CASE("classification objective")
{
    CHECK(classification_objective(histogram({2, 0}), histogram({0, 2})) == 0.0);
    CHECK(classification_objective(histogram({1, 1}), histogram({1, 1})) == 4.0);
    const auto right = histogram({1, 1, 2});
    CHECK(classification_objective(LabelHistogram(3), right) == 4 * 1.5);
}

TEST_CASE("transition sets of the two-node example")
{
    const FigureOne fig;
    const auto table = build_transition_sets(fig.nodes, fig.layout.view(), 2, 1);
    REQUIRE(table.find(1, 1));
    REQUIRE(table.find(2, 2));
    REQUIRE(table.find(2, 1));
    CHECK(table.find(1, 1)->total() == 1);
    CHECK(table.find(2, 2)->total() == 1);
    CHECK(table.find(2, 1)->total() == 2);
    CHECK(table.find(2, 1)->count(1, 0) == 1);
    CHECK(table.find(2, 1)->count(1, 1) == 1);
    CHECK(table.find(1, 2) == nullptr);
    CHECK(transition_objective_Et(table, 0) == 2.0);
    CHECK(transition_objective_Et(TransitionSetTable{}, 0) == 0.0);
}

TEST_CASE("pure transition sets have zero objective")
{
    Layout l;
    l.add({0, 0, 0, 1, 1});
    const std::vector<NodeId> nodes{1, 1, 1, 2, 2};
    const auto table = build_transition_sets(nodes, l.view(), 2, 1);
    CHECK(transition_objective_Et(table, 0) == 0.0);
    CHECK(local_transition_objective(table, 0, {}) == 0.0);
}

TEST_CASE("a single node collects L - d pairs")
{
    Layout l;
    l.add({0, 1, 2, 0, 1, 2, 0});
    const std::vector<NodeId> nodes(7, 0);
    for (std::size_t d = 1; d <= 8; ++d) {
        const auto table = build_transition_sets(nodes, l.view(), 3, d);
        CHECK(table.total_pairs() == (d < 7 ? 7 - d : 0));
        if (d < 7)
            CHECK(table.find(0, 0)->total() == 7 - d);
    }
}

TEST_CASE("build_transition_sets equals brute-force enumeration")
{
    Rng rng(6);
    const std::vector<NodeId> nodes{3, 4, 5, 6};
    for (int rep = 0; rep < 100; ++rep) {
        const auto l = random_layout(rng, 1 + uniform_index(rng, 4), 40, 3);
        const auto assign = random_assignment(rng, l.labels.size(), nodes);
        const std::size_t d = 1 + uniform_index(rng, 4);
        const auto table = build_transition_sets(assign, l.view(), 3, d);
        CHECK(oracle::to_pair_counts(table) == oracle::enumerate_transition_sets(l.split_labels(), l.split(assign), d));

        std::uint64_t expected = 0;
        for (std::size_t s = 0; s + 1 < l.offsets.size(); ++s)
            expected += l.offsets[s + 1] - l.offsets[s] > d ? l.offsets[s + 1] - l.offsets[s] - d : 0;
        CHECK(table.total_pairs() == expected);
    }

    Rng one(7);
    const auto l = random_layout(one, 1, 100, 3);
    const auto assign = random_assignment(one, l.labels.size(), nodes);
    CHECK(oracle::to_pair_counts(build_transition_sets(assign, l.view(), 3, 1)) ==
          oracle::enumerate_transition_sets(l.split_labels(), l.split(assign), 1));
}

TEST_CASE("build_transition_sets rejects bad input")
{
    Layout l;
    l.add({0, 1, 0});
    std::vector<NodeId> nodes{1, 2, 1};
    CHECK_THROWS_AS(build_transition_sets(nodes, l.view(), 2, 0), UsageError);
    const std::set<NodeId> tracked{1};
    CHECK_THROWS_AS(build_transition_sets(nodes, l.view(), 2, 1, &tracked), DataError);
    nodes[1] = kUnassigned;
    CHECK_THROWS_AS(build_transition_sets(nodes, l.view(), 2, 1), DataError);
}

TEST_CASE("incremental updates match a fresh build")
{
    Rng rng(8);
    const std::vector<NodeId> nodes{1, 2, 3, 4, 5};
    for (int rep = 0; rep < 100; ++rep) {
        const auto l = random_layout(rng, 1 + uniform_index(rng, 5), 30, 4);
        const std::size_t d = 1 + uniform_index(rng, 3);
        IncrementalTransitionSets inc(l.view(), 4, d, random_assignment(rng, l.labels.size(), nodes));
        for (int move = 0; move < 50; ++move) {
            inc.move_frame(uniform_index(rng, l.labels.size()), nodes[uniform_index(rng, nodes.size())]);
            const std::vector<NodeId> now(inc.assignment().begin(), inc.assignment().end());
            REQUIRE(inc.table() == build_transition_sets(now, l.view(), 4, d));
        }
    }
}

TEST_CASE("local objective equals an explicit sum of its terms")
{
    Rng rng(9);
    // Level with parents 0..3 below the root's grandchildren: children of j are 2j+1, 2j+2.
    const std::vector<NodeId> parents{3, 4, 5, 6};
    std::vector<NodeId> children;
    for (auto p : parents) {
        children.push_back(2 * p + 1);
        children.push_back(2 * p + 2);
    }
    for (int rep = 0; rep < 50; ++rep) {
        const auto l = random_layout(rng, 3, 40, 3);
        const auto assign = random_assignment(rng, l.labels.size(), children);
        const auto table = build_transition_sets(assign, l.view(), 3, 1);
        const auto pairs = oracle::to_pair_counts(table);
        for (std::size_t k = 0; k < parents.size(); ++k) {
            std::vector<NodeId> peers;
            for (std::size_t i = 0; i < parents.size(); ++i)
                if (i != k)
                    peers.push_back(parents[i]);
            const double got = local_transition_objective(table, parents[k], peers);
            CHECK(got == doctest::Approx(oracle::local_objective_terms(pairs, parents[k], peers).total()).epsilon(1e-12));
            CHECK(local_transition_objective(table, parents[k], {}) == transition_objective_Et(table, parents[k]));
        }
    }
}

TEST_CASE("local objective of two nodes with a hand-built table")
{
    // Node 1 has children 3, 4 and node 2 has children 5, 6.
    TransitionSetTable table;
    table.num_labels = 2;
    const auto put = [&](NodeId a, NodeId b, std::vector<std::uint64_t> counts) {
        TransitionHistogram h(2);
        for (std::size_t i = 0; i < 4; ++i)
            h.add(static_cast<LabelId>(i / 2), static_cast<LabelId>(i % 2), counts[i]);
        table.entries.emplace(std::pair{a, b}, h);
    };
    put(3, 3, {1, 1, 0, 0}); // 2 bits
    put(3, 4, {2, 0, 0, 0}); // 0
    put(4, 5, {1, 1, 1, 1}); // 8
    put(6, 3, {2, 2, 0, 0}); // 4
    put(5, 6, {1, 1, 0, 0}); // peer-only, not counted
    const NodeId peers[] = {2};
    CHECK(local_transition_objective(table, 1, peers) == 14.0);
    const NodeId bad[] = {1};
    CHECK_THROWS_AS(local_transition_objective(table, 1, bad), UsageError);
    CHECK(global_transition_objective(table) == 16.0);
}
