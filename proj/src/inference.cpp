#include "tforest/inference.hpp"

#include "tforest/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tforest {

const PredictionContext::Record* PredictionContext::back(std::size_t d) const noexcept
{
    if (d == 0 || d > records_.size())
        return nullptr;
    return &records_[records_.size() - d];
}

void PredictionContext::push(Record record)
{
    ++frames_seen_;
    if (capacity_ == 0)
        return;
    if (records_.size() == capacity_)
        records_.pop_front();
    records_.push_back(std::move(record));
}

LabelId argmax(std::span<const double> probs) noexcept
{
    LabelId best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best])
            best = static_cast<LabelId>(i);
    return best;
}

std::vector<std::uint32_t> route_all(const TransitionForest& forest, std::span<const double> x)
{
    if (x.size() != forest.feature_dim())
        throw UsageError("feature dimension " + std::to_string(x.size()) + " does not match the trained " +
                         std::to_string(forest.feature_dim()));
    std::vector<std::uint32_t> leaves(forest.trees().size());
    for (std::size_t m = 0; m < leaves.size(); ++m)
        leaves[m] = forest.trees()[m].tree.route_unchecked(x.data());
    return leaves;
}

std::vector<double> classification_probability(const TransitionForest& forest, std::span<const std::uint32_t> leaves)
{
    const std::size_t y = forest.num_labels();
    std::vector<double> out(y, 0.0);
    for (std::size_t m = 0; m < forest.trees().size(); ++m) {
        const auto dist = forest.trees()[m].leaves.class_dist(leaves[m]);
        for (std::size_t l = 0; l < y; ++l)
            out[l] += dist[l];
    }
    const double n = static_cast<double>(forest.trees().size());
    for (auto& p : out)
        p /= n;
    return out;
}

namespace {

void accumulate_row(const TrainedTree& t, std::uint32_t prev_leaf, std::uint32_t cur_leaf, LabelId prev_label,
                    double weight, std::vector<double>& out)
{
    const std::size_t y = out.size();
    std::span<const double> row;
    if (const auto* e = t.leaves.find(prev_leaf, cur_leaf))
        row = std::span(e->matrix).subspan(prev_label * y, y);
    else
        row = t.leaves.class_dist(cur_leaf);
    for (std::size_t l = 0; l < y; ++l)
        out[l] += weight * row[l];
}

void check_leaves(const TransitionForest& forest, std::span<const std::uint32_t> cur,
                  std::span<const std::uint32_t> prev)
{
    if (cur.size() != forest.trees().size() || prev.size() != forest.trees().size())
        throw UsageError("one leaf id per tree is required");
}

} // namespace

std::vector<double> transition_probability(const TransitionForest& forest, std::size_t d,
                                           std::span<const std::uint32_t> cur_leaves,
                                           std::span<const std::uint32_t> prev_leaves, LabelId prev_label)
{
    const auto members = forest.trees_for(d);
    check_leaves(forest, cur_leaves, prev_leaves);
    if (prev_label >= forest.num_labels())
        throw UsageError("previous label out of range");
    std::vector<double> out(forest.num_labels(), 0.0);
    const double w = 1.0 / static_cast<double>(members.size());
    for (auto m : members)
        accumulate_row(forest.trees()[m], prev_leaves[m], cur_leaves[m], prev_label, w, out);
    return out;
}

std::vector<double> transition_probability_soft(const TransitionForest& forest, std::size_t d,
                                                std::span<const std::uint32_t> cur_leaves,
                                                std::span<const std::uint32_t> prev_leaves,
                                                std::span<const double> prev_probs)
{
    const auto members = forest.trees_for(d);
    check_leaves(forest, cur_leaves, prev_leaves);
    if (prev_probs.size() != forest.num_labels())
        throw UsageError("previous posterior has the wrong size");
    std::vector<double> out(forest.num_labels(), 0.0);
    const double w = 1.0 / static_cast<double>(members.size());
    for (auto m : members)
        for (std::size_t l = 0; l < prev_probs.size(); ++l)
            if (prev_probs[l] > 0.0)
                accumulate_row(forest.trees()[m], prev_leaves[m], cur_leaves[m], static_cast<LabelId>(l),
                               w * prev_probs[l], out);
    return out;
}

FramePosterior predict_frame(const TransitionForest& forest, std::span<const double> x, PredictionContext& ctx,
                             const InferenceOptions& options)
{
    auto leaves = route_all(forest, x);
    std::vector<double> probs = classification_probability(forest, leaves);
    const std::size_t y = probs.size();

    std::vector<double> transition(y, 0.0);
    std::size_t available = 0;
    for (std::size_t d = 1; d <= forest.temporal_order(); ++d) {
        const auto* rec = ctx.back(d);
        if (!rec)
            break;
        const auto p = options.soft_previous
                           ? transition_probability_soft(forest, d, leaves, rec->leaves, rec->probs)
                           : transition_probability(forest, d, leaves, rec->leaves, rec->argmax_label);
        for (std::size_t l = 0; l < y; ++l)
            transition[l] += p[l];
        ++available;
    }

    if (available > 0) {
        std::vector<double> product(y);
        double sum = 0.0;
        for (std::size_t l = 0; l < y; ++l) {
            product[l] = probs[l] * transition[l];
            sum += product[l];
        }
        // An all-zero product (possible only without smoothing) keeps the classification factor.
        if (sum > 0.0 && std::isfinite(sum)) {
            for (auto& p : product)
                p /= sum;
            probs = std::move(product);
        }
    }

    FramePosterior out;
    out.argmax_label = argmax(probs);
    out.time_index = ctx.frames_seen();
    out.probs = probs;
    ctx.push({std::move(leaves), out.argmax_label, std::move(probs)});
    return out;
}

SequencePrediction classify_sequence(const TransitionForest& forest, const FeatureSequence& seq,
                                     const InferenceOptions& options)
{
    if (seq.frames.empty())
        throw UsageError("cannot classify an empty sequence");
    PredictionContext ctx(forest);
    SequencePrediction out;
    out.frames.reserve(seq.frames.size());
    std::vector<double> mean(forest.num_labels(), 0.0);
    for (const auto& f : seq.frames) {
        out.frames.push_back(predict_frame(forest, f.vector, ctx, options));
        for (std::size_t l = 0; l < mean.size(); ++l)
            mean[l] += out.frames.back().probs[l];
    }
    for (auto& p : mean)
        p /= static_cast<double>(seq.frames.size());
    out.label = argmax(mean);
    return out;
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

void validate(const DetectorParams& params)
{
    if (!(0.0 <= params.beta_end && params.beta_end <= params.beta_start && params.beta_start <= 1.0))
        throw UsageError("detector thresholds must satisfy 0 <= beta_end <= beta_start <= 1");
}

OnlineDetector::OnlineDetector(DetectorParams params, std::size_t num_labels, std::optional<LabelId> background)
    : params_(params), num_labels_(num_labels), background_(background)
{
    validate(params_);
    if (num_labels_ == 0)
        throw UsageError("detector needs at least one label");
}

std::optional<DetectionEvent> OnlineDetector::close(std::size_t end)
{
    active_ = false;
    const std::size_t length = end + 1 - start_;
    if (length < params_.min_event_len)
        return std::nullopt;
    return DetectionEvent{label_, start_, end, sum_ / static_cast<double>(length)};
}

std::optional<DetectionEvent> OnlineDetector::push(std::span<const double> probs)
{
    if (probs.size() != num_labels_)
        throw UsageError("posterior has the wrong number of labels");
    std::optional<DetectionEvent> event;
    if (active_) {
        const double sum = sum_ + probs[label_];
        const double mean = sum / static_cast<double>(t_ - start_ + 1);
        if (mean < params_.beta_end)
            event = close(t_ - 1);
        else
            sum_ = sum;
    }
    if (!active_) {
        std::optional<LabelId> best;
        for (std::size_t l = 0; l < num_labels_; ++l) {
            if (background_ && l == *background_)
                continue;
            if (!best || probs[l] > probs[*best])
                best = static_cast<LabelId>(l);
        }
        if (best && probs[*best] > params_.beta_start) {
            active_ = true;
            label_ = *best;
            start_ = t_;
            sum_ = probs[*best];
        }
    }
    ++t_;
    return event;
}

std::optional<DetectionEvent> OnlineDetector::finish()
{
    if (!active_ || t_ == 0)
        return std::nullopt;
    return close(t_ - 1);
}

std::vector<DetectionEvent> detect_events(std::span<const std::vector<double>> posteriors, std::size_t num_labels,
                                          std::optional<LabelId> background, const DetectorParams& params)
{
    OnlineDetector detector(params, num_labels, background);
    std::vector<DetectionEvent> events;
    for (const auto& p : posteriors)
        if (auto e = detector.push(p))
            events.push_back(*e);
    if (auto e = detector.finish())
        events.push_back(*e);
    return events;
}

DetectionResult detect_online(const TransitionForest& forest, const FeatureSequence& stream,
                              const DetectorParams& params, const InferenceOptions& options)
{
    const std::optional<LabelId> background =
        forest.has_background() ? std::optional(forest.background_label()) : std::nullopt;
    OnlineDetector detector(params, forest.num_labels(), background);
    PredictionContext ctx(forest);
    DetectionResult out;
    out.frames.reserve(stream.frames.size());
    for (const auto& f : stream.frames) {
        out.frames.push_back(predict_frame(forest, f.vector, ctx, options));
        if (auto e = detector.push(out.frames.back().probs))
            out.events.push_back(*e);
    }
    if (auto e = detector.finish())
        out.events.push_back(*e);
    return out;
}

} // namespace tforest
