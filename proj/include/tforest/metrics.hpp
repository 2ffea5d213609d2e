#pragma once

#include "tforest/inference.hpp"
#include "tforest/skeleton_data.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace tforest {

struct RecognitionReport {
    double overall_accuracy = 0.0;
    /// Correct / total per true class; 0 for classes absent from the ground truth.
    std::vector<double> per_class_accuracy;
    /// confusion[true][predicted].
    std::vector<std::vector<std::uint64_t>> confusion;
    std::uint64_t total = 0;
};

/// Throws UsageError on a length mismatch or an out-of-range label.
RecognitionReport recognition_metrics(std::span<const LabelId> predictions, std::span<const LabelId> ground_truth,
                                      std::size_t num_labels);

struct DetectionReport {
    /// Frame-level F1 per label (the background entry, if any, is left at 0).
    std::vector<double> per_class_f1;
    /// Mean F1 over the non-background labels that occur in the ground truth.
    double overall_f1 = 0.0;
    /// Fraction of ground-truth events whose matched start (end) lies within
    /// tol_ratio x event length of the true one.
    double sl = 0.0;
    double el = 0.0;
    double inference_time_s = 0.0;
    std::size_t matched_events = 0;
    std::size_t gt_events = 0;
};

/// Maximal runs of one non-background label in a per-frame labelling.
std::vector<DetectionEvent> events_from_labels(std::span<const LabelId> labels, std::optional<LabelId> background);

/// Event matching: same-label pairs sorted by overlap (ties: earlier ground
/// truth, then earlier prediction) and accepted greedily while both are free.
/// Returns, per ground-truth event, the index of its predicted event.
std::vector<std::optional<std::size_t>> match_events(std::span<const DetectionEvent> predicted,
                                                     std::span<const DetectionEvent> ground_truth);

/// Throws UsageError when the frame streams differ in length or a label is out of range.
DetectionReport detection_metrics(std::span<const LabelId> predictions, std::span<const LabelId> ground_truth,
                                  std::size_t num_labels, std::optional<LabelId> background,
                                  std::span<const DetectionEvent> events, std::span<const DetectionEvent> gt_events,
                                  double tol_ratio = 0.25);

} // namespace tforest
