#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tforest {

using LabelId = std::uint32_t;

struct Joint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Joint&) const = default;
};

struct SkeletonFrame {
    std::vector<Joint> joints;
    LabelId label = 0;
    std::size_t time_index = 0;

    bool operator==(const SkeletonFrame&) const = default;
};

struct Sequence {
    std::string id;
    std::vector<SkeletonFrame> frames;
    std::optional<LabelId> sequence_label;

    bool operator==(const Sequence&) const = default;
};

struct Dataset {
    std::vector<Sequence> sequences;
    std::vector<std::string> label_names;
    std::size_t joint_count = 0;
    bool has_background = false;

    std::size_t num_labels() const noexcept { return label_names.size(); }
    /// Id of the background class; only meaningful when has_background is set.
    LabelId background_label() const noexcept { return static_cast<LabelId>(label_names.size() - 1); }
    std::size_t frame_count() const noexcept;

    bool operator==(const Dataset&) const = default;
};

/// Checks every Dataset invariant and throws DataError on the first violation.
void validate(const Dataset& dataset);

// ---------------------------------------------------------------------------
// On-disk format
//
//   manifest      one line per sequence: <relative_path>,<sequence_label_or_->
//   labels.txt    label vocabulary next to the manifest, line number = label id;
//                 a final label named "background" marks detection data
//   sequence file header line J=<joint_count>, then one frame per line:
//                 <frame_label_id>,<j0x>,<j0y>,<j0z>,...
//
// Blank lines and lines starting with '#' are ignored in the manifest.
// ---------------------------------------------------------------------------

inline constexpr const char* kLabelFileName = "labels.txt";
inline constexpr const char* kBackgroundName = "background";

Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest, labels.txt and one <id>.csv per sequence into the manifest's directory.
void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Joint roles needed by normalize_skeleton. The vertical axis is y.
struct SkeletonSpec {
    std::size_t root = 0;
    std::size_t left_hip = 1;
    std::size_t right_hip = 2;

    /// Kinect v1 20-joint layout (hip center, hip left, hip right).
    static SkeletonSpec kinect20() { return {0, 12, 16}; }

    bool operator==(const SkeletonSpec&) const = default;
};

/// Root to origin, hip axis rotated onto +x in the ground plane, scaled so that
/// the root-to-joint distances sum to one. Throws DataError("degenerate skeleton").
SkeletonFrame normalize_skeleton(const SkeletonFrame& frame, const SkeletonSpec& spec);

/// Normalizes every frame; frames that cannot be normalized are dropped and
/// time indices renumbered. Returns the number of dropped frames through `dropped`.
Sequence normalize_sequence(const Sequence& seq, const SkeletonSpec& spec, std::size_t* dropped = nullptr);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t num_labels = 2;
    std::size_t num_joints = 10;
    std::size_t sequences_per_label = 50;
    std::size_t frames_per_sequence = 40;
    std::size_t pose_centers_per_label = 5;
    /// One row-stochastic pose_centers x pose_centers matrix per label, row-major.
    std::vector<std::vector<double>> transition_kernels;
    double noise_sigma = 0.05;
    /// All labels draw from the same prototype poses, so only dynamics differ.
    bool shared_pose_pool = false;
};

/// Throws UsageError when a kernel is malformed or not row-stochastic within 1e-9.
void validate(const SynthConfig& config);

/// Cyclic kernel: stay with probability `stay`, otherwise step +direction (mod n).
std::vector<double> cyclic_kernel(std::size_t n, double stay, int direction);

/// Each sequence walks a prototype path drawn from its label's kernel (uniform
/// start) and emits prototype poses with isotropic Gaussian noise.
Dataset generate_synthetic(const SynthConfig& config, std::uint64_t seed);

/// A streaming detection set: actions from `actions` (generated as in
/// generate_synthetic with shared_pose_pool ignored) separated by background
/// segments. The background label is appended as the last label id.
struct SynthStreamConfig {
    SynthConfig actions;
    std::size_t num_streams = 4;
    std::size_t actions_per_stream = 5;
    std::size_t action_length = 30;
    std::size_t background_length = 60;
    /// Lengths are jittered uniformly by up to this many frames either way.
    std::size_t length_jitter = 5;
};

Dataset generate_detection_streams(const SynthStreamConfig& config, std::uint64_t seed);

} // namespace tforest
