#pragma once

#include "tforest/training_set.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

/// Split-scoring kernels. Each kernel has an OpenMP implementation used in
/// training and a plain serial implementation kept as the reference it is
/// tested and benchmarked against. Infeasible candidates (an empty child)
/// score +infinity.
namespace tforest::kernels {

enum class Backend { serial, parallel };

inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();
inline constexpr std::uint32_t kNotInNode = std::numeric_limits<std::uint32_t>::max();

/// Count-weighted child entropy |L| H(L) + |R| H(R) of every candidate over the
/// node's samples. Both backends return bit-identical values.
std::vector<double> classification_scores(const TrainingSet& data, std::span<const std::uint32_t> samples,
                                          std::span<const SplitParams> candidates, Backend backend = Backend::parallel);

/// Local transition objective of one node with all other splits of its level fixed.
struct TransitionProblem {
    const TrainingSet* data = nullptr;
    std::size_t d = 1;
    /// Frames that reached the node being optimized.
    std::span<const std::uint32_t> samples;
    /// Child-level bucket of every frame. Entries of the node's own frames are ignored.
    std::span<const std::uint32_t> child_bucket;
    /// For every frame: its index in `samples`, or kNotInNode.
    std::span<const std::uint32_t> position;
    /// Bucket ids the node's left and right children will take.
    std::uint32_t left_bucket = 0;
    std::uint32_t right_bucket = 1;
};

/// Sum of |T| H(T) over every transition set with an endpoint among the node's
/// children, for each candidate split. Backends agree to within 1e-9 relative.
std::vector<double> transition_scores(const TransitionProblem& problem, std::span<const SplitParams> candidates,
                                      Backend backend = Backend::parallel);

} // namespace tforest::kernels
