#include "tforest/training_set.hpp"

#include "tforest/error.hpp"

namespace tforest {

TrainingSet::TrainingSet(std::span<const FeatureSequence> sequences, std::size_t num_labels)
{
    std::vector<const FeatureSequence*> ptrs;
    ptrs.reserve(sequences.size());
    for (const auto& s : sequences)
        ptrs.push_back(&s);
    *this = TrainingSet(std::span<const FeatureSequence* const>(ptrs), num_labels);
}

TrainingSet::TrainingSet(std::span<const FeatureSequence* const> sequences, std::size_t num_labels)
    : num_labels_(num_labels)
{
    if (num_labels == 0)
        throw UsageError("training set needs at least one label");
    std::size_t total = 0;
    for (const auto* s : sequences) {
        if (s->frames.empty())
            continue;
        if (dim_ == 0)
            dim_ = s->dim();
        total += s->frames.size();
    }
    values_.reserve(total * dim_);
    labels_.reserve(total);
    sequence_of_.reserve(total);
    offsets_.push_back(0);
    for (const auto* s : sequences) {
        if (s->frames.empty())
            continue;
        for (const auto& f : s->frames) {
            if (f.vector.size() != dim_ || dim_ == 0)
                throw DataError("feature dimension mismatch", s->id, f.time_index + 1);
            if (f.label >= num_labels)
                throw DataError("unknown label id " + std::to_string(f.label), s->id, f.time_index + 1);
            values_.insert(values_.end(), f.vector.begin(), f.vector.end());
            labels_.push_back(f.label);
            sequence_of_.push_back(static_cast<std::uint32_t>(offsets_.size() - 1));
        }
        offsets_.push_back(labels_.size());
    }
}

TrainingSet TrainingSet::bootstrap(std::span<const FeatureSequence> sequences, std::size_t num_labels, Rng& rng)
{
    std::vector<const FeatureSequence*> picks;
    picks.reserve(sequences.size());
    for (std::size_t i = 0; i < sequences.size(); ++i)
        picks.push_back(&sequences[uniform_index(rng, sequences.size())]);
    return TrainingSet(std::span<const FeatureSequence* const>(picks), num_labels);
}

} // namespace tforest
