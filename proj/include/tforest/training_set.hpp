#pragma once

#include "tforest/features.hpp"
#include "tforest/random.hpp"
#include "tforest/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tforest {

/// Axis-aligned split: a frame goes left iff x[feature] - threshold <= 0.
struct SplitParams {
    std::uint32_t feature = 0;
    double threshold = 0.0;

    bool goes_left(std::span<const double> x) const noexcept { return x[feature] <= threshold; }

    bool operator==(const SplitParams&) const = default;
};

/// Feature sequences packed into one row-major matrix, with the sequence
/// boundaries kept so that d-distant pairs never cross sequences.
class TrainingSet {
public:
    TrainingSet() = default;
    TrainingSet(std::span<const FeatureSequence> sequences, std::size_t num_labels);
    TrainingSet(std::span<const FeatureSequence* const> sequences, std::size_t num_labels);

    /// Resamples whole sequences with replacement (count = number of sequences).
    static TrainingSet bootstrap(std::span<const FeatureSequence> sequences, std::size_t num_labels, Rng& rng);

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_labels() const noexcept { return num_labels_; }
    std::size_t sequence_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }

    std::span<const double> row(std::size_t frame) const noexcept { return {values_.data() + frame * dim_, dim_}; }
    double value(std::size_t frame, std::size_t feature) const noexcept { return values_[frame * dim_ + feature]; }
    LabelId label(std::size_t frame) const noexcept { return labels_[frame]; }
    std::span<const LabelId> labels() const noexcept { return labels_; }
    std::span<const std::size_t> offsets() const noexcept { return offsets_; }
    std::size_t sequence_of(std::size_t frame) const noexcept { return sequence_of_[frame]; }

    SequenceLayout layout() const noexcept { return {labels_, offsets_}; }

    /// True when frame - d lies in the same sequence.
    bool has_predecessor(std::size_t frame, std::size_t d) const noexcept
    {
        return frame >= offsets_[sequence_of_[frame]] + d;
    }
    /// True when frame + d lies in the same sequence.
    bool has_successor(std::size_t frame, std::size_t d) const noexcept
    {
        return frame + d < offsets_[sequence_of_[frame] + 1];
    }

private:
    std::size_t dim_ = 0;
    std::size_t num_labels_ = 0;
    std::vector<double> values_;
    std::vector<LabelId> labels_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> sequence_of_;
};

} // namespace tforest
