#pragma once

#include "tforest/inference.hpp"
#include "tforest/metrics.hpp"
#include "tforest/transition_forest.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tforest {

enum class Protocol { recognition, detection, synthetic_benchmark };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

/// Declarative experiment description, read from a `key = value` text file.
/// See README.md for the key list.
struct ExperimentConfig {
    Protocol protocol = Protocol::recognition;
    /// Manifest path, or "synthetic" to generate data per seed.
    std::string dataset = "synthetic";
    std::vector<std::uint64_t> seeds{1};
    /// Fraction of sequences held out for testing in each seed's split.
    double test_fraction = 0.3;
    std::filesystem::path output_dir = "results";

    ForestConfig forest;
    InferenceOptions inference;
    DetectorParams detector;
    double tol_ratio = 0.25;

    /// Temporal orders swept by the synthetic benchmark.
    std::vector<std::size_t> k_values{0, 1, 2, 3};

    SynthConfig synth;
    /// Stay probability of the generated cyclic kernels.
    double synth_stay = 0.2;
    SynthStreamConfig stream;
};

/// Throws UsageError ("source:line: message") on unknown keys or bad values.
ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// One kernel per label: cyclic over `prototypes` poses with step +1, -1, +2, -2, ...
std::vector<std::vector<double>> synthetic_kernels(std::size_t num_labels, std::size_t prototypes, double stay);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Shuffled split of n items; at least one item lands on each side when n >= 2.
Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

struct MeanStd {
    double mean = 0.0;
    /// Sample standard deviation; 0 for fewer than two values.
    double stdev = 0.0;
};

MeanStd mean_std(std::span<const double> values);

/// Fraction of frames whose online posterior argmax equals the frame label.
double frame_accuracy(const TransitionForest& forest, std::span<const FeatureSequence> sequences,
                      const InferenceOptions& options = {});

struct ExperimentResult {
    std::vector<std::filesystem::path> files;
    /// Human-readable summary.
    std::string summary;
};

/// Runs the protocol for every seed and writes CSV reports and plot data into
/// output_dir. Report files depend only on the config, never on timing.
ExperimentResult run_experiment(const ExperimentConfig& config);

} // namespace tforest
