#pragma once

#include "tforest/features.hpp"
#include "tforest/transition_forest.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace tforest {

struct FramePosterior {
    std::vector<double> probs;
    LabelId argmax_label = 0;
    std::size_t time_index = 0;
};

struct InferenceOptions {
    /// Condition transitions on the full stored posterior of frame t-d
    /// (marginalizing over its labels) instead of its argmax label.
    bool soft_previous = false;
};

/// History of the last k frames of one stream: the leaf each tree sent the
/// frame to, its argmax label and its posterior. Oldest records are evicted first.
class PredictionContext {
public:
    struct Record {
        std::vector<std::uint32_t> leaves;
        LabelId argmax_label = 0;
        std::vector<double> probs;
    };

    explicit PredictionContext(std::size_t capacity = 0) : capacity_(capacity) {}
    explicit PredictionContext(const TransitionForest& forest) : capacity_(forest.temporal_order()) {}

    /// Record of frame t-d, if still held.
    const Record* back(std::size_t d) const noexcept;
    void push(Record record);
    void reset() noexcept
    {
        records_.clear();
        frames_seen_ = 0;
    }

    std::size_t size() const noexcept { return records_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t frames_seen() const noexcept { return frames_seen_; }

private:
    std::size_t capacity_;
    std::deque<Record> records_;
    std::size_t frames_seen_ = 0;
};

/// Leaf reached in every tree.
std::vector<std::uint32_t> route_all(const TransitionForest& forest, std::span<const double> x);

/// Mean over the trees handling distance d of the stored transition row
/// (prev_leaf -> cur_leaf, previous label); a tree without a stored entry
/// contributes its current leaf's class distribution. Throws UsageError for d outside 1..k.
std::vector<double> transition_probability(const TransitionForest& forest, std::size_t d,
                                           std::span<const std::uint32_t> cur_leaves,
                                           std::span<const std::uint32_t> prev_leaves, LabelId prev_label);

/// Soft variant: sum over labels l of prev_probs[l] * transition_probability(..., l).
std::vector<double> transition_probability_soft(const TransitionForest& forest, std::size_t d,
                                                std::span<const std::uint32_t> cur_leaves,
                                                std::span<const std::uint32_t> prev_leaves,
                                                std::span<const double> prev_probs);

/// Mean class distribution of the reached leaves over all trees.
std::vector<double> classification_probability(const TransitionForest& forest,
                                               std::span<const std::uint32_t> leaves);

/// Posterior of one frame: the classification factor times the mean transition
/// factor over the distances whose earlier frame is in the context,
/// renormalized. Updates the context. Throws UsageError on a dimension mismatch.
FramePosterior predict_frame(const TransitionForest& forest, std::span<const double> x, PredictionContext& ctx,
                             const InferenceOptions& options = {});

struct SequencePrediction {
    LabelId label = 0;
    std::vector<FramePosterior> frames;
};

/// Per-frame posteriors with a fresh context, and the argmax of their mean.
/// Throws UsageError for an empty sequence.
SequencePrediction classify_sequence(const TransitionForest& forest, const FeatureSequence& seq,
                                     const InferenceOptions& options = {});

/// Lowest label id among the maxima.
LabelId argmax(std::span<const double> probs) noexcept;

// ---------------------------------------------------------------------------
// Online detection
// ---------------------------------------------------------------------------

struct DetectorParams {
    double beta_start = 0.79;
    double beta_end = 0.16;
    std::size_t min_event_len = 1;
};

void validate(const DetectorParams& params);

struct DetectionEvent {
    LabelId label = 0;
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;
    /// Mean posterior of the event label over [start_frame, end_frame].
    double mean_score = 0.0;

    bool operator==(const DetectionEvent&) const = default;
};

/// Start/end state machine over a stream of posteriors.
///
/// Idle: the first frame whose best non-background posterior exceeds
/// beta_start opens an event for that label. Active: the label is locked and
/// the running mean of its posterior since the start is maintained; when that
/// mean falls below beta_end the event closes at the previous frame. The frame
/// that closed an event may open the next one.
class OnlineDetector {
public:
    OnlineDetector(DetectorParams params, std::size_t num_labels, std::optional<LabelId> background);

    /// Feeds the posterior of frame t (frames must arrive in order).
    std::optional<DetectionEvent> push(std::span<const double> probs);
    /// Closes an event still open at the end of the stream.
    std::optional<DetectionEvent> finish();

    bool active() const noexcept { return active_; }
    std::size_t frames_seen() const noexcept { return t_; }

private:
    std::optional<DetectionEvent> close(std::size_t end);

    DetectorParams params_;
    std::size_t num_labels_;
    std::optional<LabelId> background_;
    std::size_t t_ = 0;
    bool active_ = false;
    LabelId label_ = 0;
    std::size_t start_ = 0;
    double sum_ = 0.0;       // posterior sum over [start, t)
};

struct DetectionResult {
    std::vector<DetectionEvent> events;
    std::vector<FramePosterior> frames;
};

/// Runs predict_frame and the detector over a stream.
DetectionResult detect_online(const TransitionForest& forest, const FeatureSequence& stream,
                              const DetectorParams& params = {}, const InferenceOptions& options = {});

/// Runs only the detector over precomputed posteriors.
std::vector<DetectionEvent> detect_events(std::span<const std::vector<double>> posteriors, std::size_t num_labels,
                                          std::optional<LabelId> background, const DetectorParams& params = {});

} // namespace tforest
