#include "tforest/metrics.hpp"

#include "tforest/error.hpp"

#include <algorithm>
#include <string>
#include <tuple>

namespace tforest {

namespace {

void check_labels(std::span<const LabelId> labels, std::size_t num_labels, const char* what)
{
    for (auto l : labels)
        if (l >= num_labels)
            throw UsageError(std::string(what) + " label " + std::to_string(l) + " out of range");
}

std::size_t overlap(const DetectionEvent& a, const DetectionEvent& b)
{
    const std::size_t lo = std::max(a.start_frame, b.start_frame);
    const std::size_t hi = std::min(a.end_frame, b.end_frame);
    return hi < lo ? 0 : hi - lo + 1;
}

double distance(std::size_t a, std::size_t b)
{
    return static_cast<double>(a > b ? a - b : b - a);
}

} // namespace

RecognitionReport recognition_metrics(std::span<const LabelId> predictions, std::span<const LabelId> ground_truth,
                                      std::size_t num_labels)
{
    if (predictions.size() != ground_truth.size())
        throw UsageError("predictions and ground truth differ in length");
    check_labels(predictions, num_labels, "predicted");
    check_labels(ground_truth, num_labels, "ground-truth");

    RecognitionReport r;
    r.confusion.assign(num_labels, std::vector<std::uint64_t>(num_labels, 0));
    for (std::size_t i = 0; i < predictions.size(); ++i)
        ++r.confusion[ground_truth[i]][predictions[i]];
    r.total = predictions.size();

    std::uint64_t correct = 0;
    r.per_class_accuracy.assign(num_labels, 0.0);
    for (std::size_t c = 0; c < num_labels; ++c) {
        std::uint64_t row = 0;
        for (auto v : r.confusion[c])
            row += v;
        correct += r.confusion[c][c];
        if (row > 0)
            r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(row);
    }
    r.overall_accuracy = r.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.total);
    return r;
}

std::vector<DetectionEvent> events_from_labels(std::span<const LabelId> labels, std::optional<LabelId> background)
{
    std::vector<DetectionEvent> out;
    std::size_t t = 0;
    while (t < labels.size()) {
        std::size_t end = t;
        while (end + 1 < labels.size() && labels[end + 1] == labels[t])
            ++end;
        if (!background || labels[t] != *background)
            out.push_back({labels[t], t, end, 1.0});
        t = end + 1;
    }
    return out;
}

std::vector<std::optional<std::size_t>> match_events(std::span<const DetectionEvent> predicted,
                                                     std::span<const DetectionEvent> ground_truth)
{
    // (overlap, gt, pred), best first
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> pairs;
    for (std::size_t g = 0; g < ground_truth.size(); ++g)
        for (std::size_t p = 0; p < predicted.size(); ++p)
            if (predicted[p].label == ground_truth[g].label)
                if (const auto o = overlap(predicted[p], ground_truth[g]); o > 0)
                    pairs.emplace_back(o, g, p);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b))
            return std::get<0>(a) > std::get<0>(b);
        return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
    });

    std::vector<std::optional<std::size_t>> match(ground_truth.size());
    std::vector<bool> used(predicted.size(), false);
    for (const auto& [o, g, p] : pairs) {
        if (match[g] || used[p])
            continue;
        match[g] = p;
        used[p] = true;
    }
    return match;
}

DetectionReport detection_metrics(std::span<const LabelId> predictions, std::span<const LabelId> ground_truth,
                                  std::size_t num_labels, std::optional<LabelId> background,
                                  std::span<const DetectionEvent> events, std::span<const DetectionEvent> gt_events,
                                  double tol_ratio)
{
    if (predictions.size() != ground_truth.size())
        throw UsageError("predictions and ground truth differ in length");
    if (!(tol_ratio >= 0.0))
        throw UsageError("tol_ratio must be non-negative");
    check_labels(predictions, num_labels, "predicted");
    check_labels(ground_truth, num_labels, "ground-truth");

    std::vector<std::uint64_t> tp(num_labels, 0), npred(num_labels, 0), ngt(num_labels, 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        ++npred[predictions[i]];
        ++ngt[ground_truth[i]];
        if (predictions[i] == ground_truth[i])
            ++tp[predictions[i]];
    }

    DetectionReport r;
    r.per_class_f1.assign(num_labels, 0.0);
    double f1_sum = 0.0;
    std::size_t f1_classes = 0;
    for (std::size_t c = 0; c < num_labels; ++c) {
        if (background && c == *background)
            continue;
        // 2PR / (P + R) simplifies to 2tp / (|pred| + |gt|).
        const auto denom = npred[c] + ngt[c];
        if (denom > 0)
            r.per_class_f1[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
        if (ngt[c] > 0) {
            f1_sum += r.per_class_f1[c];
            ++f1_classes;
        }
    }
    r.overall_f1 = f1_classes == 0 ? 0.0 : f1_sum / static_cast<double>(f1_classes);

    const auto match = match_events(events, gt_events);
    std::size_t start_ok = 0, end_ok = 0;
    for (std::size_t g = 0; g < gt_events.size(); ++g) {
        if (!match[g])
            continue;
        ++r.matched_events;
        const auto& gt = gt_events[g];
        const auto& p = events[*match[g]];
        const double tol = tol_ratio * static_cast<double>(gt.end_frame - gt.start_frame + 1);
        start_ok += distance(p.start_frame, gt.start_frame) <= tol;
        end_ok += distance(p.end_frame, gt.end_frame) <= tol;
    }
    r.gt_events = gt_events.size();
    if (!gt_events.empty()) {
        r.sl = static_cast<double>(start_ok) / static_cast<double>(gt_events.size());
        r.el = static_cast<double>(end_ok) / static_cast<double>(gt_events.size());
    }
    return r;
}

} // namespace tforest
