#pragma once

#include "tforest/skeleton_data.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tforest {

struct FeatureFrame {
    std::vector<double> vector;
    LabelId label = 0;
    std::size_t time_index = 0;

    bool operator==(const FeatureFrame&) const = default;
};

struct FeatureSequence {
    std::string id;
    std::vector<FeatureFrame> frames;

    std::size_t dim() const noexcept { return frames.empty() ? 0 : frames.front().vector.size(); }
    std::size_t size() const noexcept { return frames.size(); }

    bool operator==(const FeatureSequence&) const = default;
};

enum class Representation { jp, rjp, mp, mp_rjp };

std::string to_string(Representation r);
/// Accepts jp, rjp, mp, mp-rjp. Throws UsageError otherwise.
Representation parse_representation(const std::string& name);

/// Everything needed to turn a raw Sequence into the feature vectors a forest was
/// trained on. Stored inside model files.
struct FeatureSpec {
    Representation representation = Representation::jp;
    std::size_t window = 1;
    double mp_alpha = 0.75;
    double mp_beta = 0.6;
    bool normalize = false;
    SkeletonSpec skeleton;

    /// Feature dimension for a skeleton with `joints` joints.
    std::size_t dimension(std::size_t joints) const;

    std::string serialize() const;
    static FeatureSpec deserialize(const std::string& text);

    bool operator==(const FeatureSpec&) const = default;
};

/// Flattened joint coordinates, D = 3J.
FeatureSequence extract_jp(const Sequence& seq);

/// Distances between all joint pairs (i, j), i < j, lexicographic. D = J(J-1)/2.
FeatureSequence extract_rjp(const Sequence& seq);

/// Moving-pose block [p_t, alpha (p_{t+1} - p_{t-1}), beta (p_{t+2} + p_{t-2} - 2 p_t)]
/// over an already extracted base representation; indices clamped to the sequence.
FeatureSequence extract_mp(const FeatureSequence& base, double alpha = 0.75, double beta = 0.6);
FeatureSequence extract_mp(const Sequence& seq, Representation base, double alpha = 0.75, double beta = 0.6);

/// Concatenates the vectors of frames t-w+1 .. t (clamped at the start). Throws UsageError for w < 1.
FeatureSequence extract_window(const FeatureSequence& fs, std::size_t w);

/// Full pipeline: optional normalization, representation, window.
FeatureSequence extract_features(const Sequence& seq, const FeatureSpec& spec);
std::vector<FeatureSequence> extract_features(const Dataset& dataset, const FeatureSpec& spec);

} // namespace tforest
