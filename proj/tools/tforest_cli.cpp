// tforest: train, apply and evaluate transition forests on skeleton sequences.

#include "tforest/error.hpp"
#include "tforest/experiment.hpp"
#include "tforest/inference.hpp"
#include "tforest/metrics.hpp"
#include "tforest/transition_forest.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <omp.h>

namespace {

using namespace tforest;

struct Globals {
    std::uint64_t seed = 1;
    int threads = 0;
    bool verbose = false;
};

void log(const Globals& g, const std::string& msg)
{
    if (g.verbose)
        std::cerr << "[tforest] " << msg << "\n";
}

std::string shortest(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path);
    return out;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data, model, features = "jp";
    std::size_t window = 1;
    bool normalize = false, no_bagging = false, no_audit = false;
    ForestConfig forest;
};

void add_feature_flags(CLI::App* cmd, TrainArgs& a)
{
    cmd->add_option("--features", a.features, "Frame representation: jp, rjp, mp or mp-rjp")
        ->check(CLI::IsMember({"jp", "rjp", "mp", "mp-rjp"}));
    cmd->add_option("--window", a.window, "Concatenate the last w frames")->check(CLI::PositiveNumber);
    cmd->add_flag("--normalize", a.normalize, "Root-centre, hip-align and scale skeletons first");
}

void run_train(const Globals& g, TrainArgs& a)
{
    const Dataset ds = load_dataset(a.data);
    a.forest.features.representation = parse_representation(a.features);
    a.forest.features.window = a.window;
    a.forest.features.normalize = a.normalize;
    a.forest.bagging = !a.no_bagging;
    a.forest.tree.audit_objective = !a.no_audit;
    a.forest.seed = g.seed;
    a.forest.threads = g.threads;
    log(g, "training on " + std::to_string(ds.sequences.size()) + " sequences, " +
               std::to_string(ds.frame_count()) + " frames");
    const auto t0 = std::chrono::steady_clock::now();
    const auto forest = train_forest(ds, a.forest);
    log(g, "trained in " + shortest(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) +
               " s");
    save_forest(forest, a.model);
    std::cout << "wrote " << a.model << " (" << forest.trees().size() << " trees, k = " << forest.temporal_order()
              << ", D = " << forest.feature_dim() << ")\n";
}

// ---------------------------------------------------------------------------

struct ApplyArgs {
    std::string model, data, frames_out, events_out;
    bool soft = false;
    DetectorParams detector;
};

void write_frame_header(std::ostream& out, const TransitionForest& forest)
{
    out << "sequence_id,t";
    for (const auto& n : forest.label_names())
        out << "," << n;
    out << "\n";
}

void write_frames(std::ostream& out, const std::string& id, std::span<const FramePosterior> frames)
{
    for (const auto& f : frames) {
        out << id << "," << f.time_index;
        for (auto p : f.probs)
            out << "," << shortest(p);
        out << "\n";
    }
}

std::vector<FeatureSequence> features_for(const TransitionForest& forest, const Dataset& ds)
{
    if (ds.num_labels() != forest.num_labels())
        throw DataError("dataset has " + std::to_string(ds.num_labels()) + " labels, the model " +
                            std::to_string(forest.num_labels()),
                        "");
    return extract_features(ds, forest.features());
}

void run_recognize(const Globals& g, const ApplyArgs& a)
{
    const auto forest = load_forest(a.model);
    const Dataset ds = load_dataset(a.data);
    const auto feats = features_for(forest, ds);
    std::ofstream frames;
    if (!a.frames_out.empty()) {
        frames = open_out(a.frames_out);
        write_frame_header(frames, forest);
    }
    std::vector<LabelId> pred, truth;
    std::cout << "sequence_id,predicted,true\n";
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (feats[i].frames.empty())
            continue;
        const auto p = classify_sequence(forest, feats[i], {a.soft});
        const auto& seq = ds.sequences[i];
        std::cout << seq.id << "," << forest.label_names()[p.label] << ","
                  << (seq.sequence_label ? forest.label_names()[*seq.sequence_label] : "-") << "\n";
        if (seq.sequence_label) {
            pred.push_back(p.label);
            truth.push_back(*seq.sequence_label);
        }
        if (frames.is_open())
            write_frames(frames, seq.id, p.frames);
    }
    if (!truth.empty()) {
        const auto r = recognition_metrics(pred, truth, forest.num_labels());
        std::cerr << "accuracy " << shortest(r.overall_accuracy) << " (" << truth.size() << " labelled sequences)\n";
    }
    log(g, "recognized " + std::to_string(feats.size()) + " sequences");
}

void run_detect(const Globals& g, const ApplyArgs& a)
{
    validate(a.detector);
    const auto forest = load_forest(a.model);
    const Dataset ds = load_dataset(a.data);
    const auto feats = features_for(forest, ds);
    std::ofstream frames;
    if (!a.frames_out.empty()) {
        frames = open_out(a.frames_out);
        write_frame_header(frames, forest);
    }
    std::ofstream events_file;
    if (!a.events_out.empty())
        events_file = open_out(a.events_out);
    std::ostream& events = a.events_out.empty() ? std::cout : events_file;
    events << "sequence_id,label_name,start,end,mean_score\n";

    double seconds = 0.0;
    std::size_t n_frames = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto res = detect_online(forest, feats[i], a.detector, {a.soft});
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        n_frames += feats[i].size();
        for (const auto& e : res.events)
            events << ds.sequences[i].id << "," << forest.label_names()[e.label] << "," << e.start_frame << ","
                   << e.end_frame << "," << shortest(e.mean_score) << "\n";
        if (frames.is_open())
            write_frames(frames, ds.sequences[i].id, res.frames);
    }
    log(g, "processed " + std::to_string(n_frames) + " frames in " + shortest(seconds) + " s");
}

// ---------------------------------------------------------------------------

void run_eval(const Globals& g, const std::string& config_path, const std::string& output_dir)
{
    auto cfg = load_experiment_config(config_path);
    cfg.forest.threads = g.threads;
    if (!output_dir.empty())
        cfg.output_dir = output_dir;
    log(g, "protocol " + to_string(cfg.protocol) + ", " + std::to_string(cfg.seeds.size()) + " seed(s)");
    const auto result = run_experiment(cfg);
    std::cout << result.summary << "\n";
    for (const auto& f : result.files)
        std::cout << "wrote " << f.string() << "\n";
}

struct SynthArgs {
    std::string out, kind = "recognition";
    std::size_t labels = 2, joints = 10, sequences = 50, frames = 40, prototypes = 5;
    std::size_t streams = 4, actions = 5, action_length = 20, background_length = 150, jitter = 5;
    double noise = 0.05, stay = 0.2;
    bool shared = false;
};

void run_synth(const Globals& g, const SynthArgs& a)
{
    SynthConfig sc;
    sc.num_labels = a.labels;
    sc.num_joints = a.joints;
    sc.sequences_per_label = a.sequences;
    sc.frames_per_sequence = a.frames;
    sc.pose_centers_per_label = a.prototypes;
    sc.noise_sigma = a.noise;
    sc.shared_pose_pool = a.shared;
    sc.transition_kernels = synthetic_kernels(a.labels, a.prototypes, a.stay);
    Dataset ds;
    if (a.kind == "detection") {
        SynthStreamConfig stc;
        stc.actions = sc;
        stc.num_streams = a.streams;
        stc.actions_per_stream = a.actions;
        stc.action_length = a.action_length;
        stc.background_length = a.background_length;
        stc.length_jitter = a.jitter;
        ds = generate_detection_streams(stc, g.seed);
    } else {
        ds = generate_synthetic(sc, g.seed);
    }
    save_dataset(ds, a.out);
    std::cout << "wrote " << a.out << " (" << ds.sequences.size() << " sequences, " << ds.frame_count()
              << " frames)\n";
}

struct BenchArgs {
    std::size_t trees = 50, depth = 8, joints = 20, k = 4, frames = 20000;
};

void run_bench(const Globals& g, const BenchArgs& a)
{
    SynthConfig sc;
    sc.num_labels = 4;
    sc.num_joints = a.joints;
    sc.sequences_per_label = 25;
    sc.frames_per_sequence = 60;
    sc.noise_sigma = 0.3;
    sc.transition_kernels = synthetic_kernels(sc.num_labels, sc.pose_centers_per_label, 0.3);
    const auto ds = generate_synthetic(sc, g.seed);
    ForestConfig fc;
    fc.num_trees = a.trees;
    fc.temporal_order = a.k;
    fc.tree.max_depth = a.depth;
    fc.tree.min_samples_split = 2;
    fc.seed = g.seed;
    fc.threads = g.threads;

    auto t0 = std::chrono::steady_clock::now();
    const auto forest = train_forest(ds, fc);
    const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto feats = extract_features(ds, fc.features);
    PredictionContext ctx(forest);
    double checksum = 0.0;
    std::size_t n = 0;
    t0 = std::chrono::steady_clock::now();
    while (n < a.frames)
        for (const auto& s : feats)
            for (const auto& f : s.frames) {
                if (n++ >= a.frames)
                    break;
                checksum += predict_frame(forest, f.vector, ctx).probs[0];
            }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "trees " << a.trees << ", depth " << a.depth << ", D " << forest.feature_dim() << ", k " << a.k
              << "\ntraining " << shortest(train_s) << " s\npredict_frame " << static_cast<long long>(a.frames / s)
              << " frames/s (single stream)\n";
    log(g, "checksum " + shortest(checksum));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Transition forests for skeleton-based action recognition and online detection"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");

    TrainArgs train;
    auto* cmd_train = app.add_subcommand("train", "Train a forest and write a .tfor model");
    cmd_train->add_option("--manifest,--data", train.data, "Dataset manifest")->required();
    cmd_train->add_option("-o,--out,--model", train.model, "Output model file (.tfor)")->required();
    add_feature_flags(cmd_train, train);
    auto& fc = train.forest;
    cmd_train->add_option("--trees", fc.num_trees, "Number of trees")->capture_default_str();
    cmd_train->add_option("--k,--temporal-order", fc.temporal_order, "Temporal order k (0 = plain forest)")
        ->capture_default_str();
    cmd_train->add_option("--depth,--max-depth", fc.tree.max_depth)->capture_default_str();
    cmd_train->add_option("--min-samples-split", fc.tree.min_samples_split)->capture_default_str();
    cmd_train->add_option("--transition-prob", fc.tree.transition_node_prob,
                          "Probability that a node uses the transition criterion")
        ->capture_default_str();
    cmd_train->add_option("--candidate-features", fc.tree.n_candidate_features, "0 = round(sqrt(D))")
        ->capture_default_str();
    cmd_train->add_option("--candidate-thresholds", fc.tree.n_candidate_thresholds)->capture_default_str();
    cmd_train->add_option("--sweeps", fc.tree.coordinate_descent_sweeps)->capture_default_str();
    cmd_train->add_option("--min-transition-support", fc.tree.min_transition_support)->capture_default_str();
    cmd_train->add_option("--laplace-alpha", fc.tree.laplace_alpha)->capture_default_str();
    cmd_train->add_flag("--no-bagging", train.no_bagging, "Train every tree on all sequences");
    cmd_train->add_flag("--no-audit", train.no_audit, "Skip the objective audit after each update");

    ApplyArgs rec;
    auto* cmd_rec = app.add_subcommand("recognize", "Classify pre-segmented sequences");
    cmd_rec->add_option("-m,--model", rec.model)->required();
    cmd_rec->add_option("--manifest,--data", rec.data, "Dataset manifest")->required();
    cmd_rec->add_option("--per-frame,--frames-out", rec.frames_out, "Per-frame posterior CSV");
    cmd_rec->add_flag("--soft-previous", rec.soft, "Condition on the full previous posterior");

    ApplyArgs det;
    auto* cmd_det = app.add_subcommand("detect", "Online event detection over streams");
    cmd_det->add_option("-m,--model", det.model)->required();
    cmd_det->add_option("--manifest,--data", det.data, "Dataset manifest of streams")->required();
    cmd_det->add_option("--events,--events-out", det.events_out, "Event CSV (default stdout)");
    cmd_det->add_option("--per-frame,--frames-out", det.frames_out, "Per-frame posterior CSV");
    cmd_det->add_option("--beta-start", det.detector.beta_start)->capture_default_str();
    cmd_det->add_option("--beta-end", det.detector.beta_end)->capture_default_str();
    cmd_det->add_option("--min-event-len", det.detector.min_event_len)->capture_default_str();
    cmd_det->add_flag("--soft-previous", det.soft, "Condition on the full previous posterior");

    std::string config_path, eval_out;
    auto* cmd_eval = app.add_subcommand("eval", "Run an experiment described by a config file");
    cmd_eval->add_option("config", config_path, "key = value experiment file")->required();
    cmd_eval->add_option("-o,--output-dir", eval_out, "Override output_dir");

    SynthArgs synth;
    auto* cmd_synth = app.add_subcommand("synth", "Write a synthetic dataset");
    cmd_synth->add_option("-o,--out", synth.out, "Manifest path")->required();
    cmd_synth->add_option("--kind", synth.kind)->check(CLI::IsMember({"recognition", "detection"}))
        ->capture_default_str();
    cmd_synth->add_option("--labels", synth.labels)->capture_default_str();
    cmd_synth->add_option("--joints", synth.joints)->capture_default_str();
    cmd_synth->add_option("--sequences-per-label", synth.sequences)->capture_default_str();
    cmd_synth->add_option("--frames", synth.frames)->capture_default_str();
    cmd_synth->add_option("--prototypes", synth.prototypes)->capture_default_str();
    cmd_synth->add_option("--noise", synth.noise)->capture_default_str();
    cmd_synth->add_option("--stay", synth.stay)->capture_default_str();
    cmd_synth->add_flag("--shared-poses", synth.shared, "All labels share one prototype pool");
    cmd_synth->add_option("--streams", synth.streams)->capture_default_str();
    cmd_synth->add_option("--actions-per-stream", synth.actions)->capture_default_str();
    cmd_synth->add_option("--action-length", synth.action_length)->capture_default_str();
    cmd_synth->add_option("--background-length", synth.background_length)->capture_default_str();
    cmd_synth->add_option("--jitter", synth.jitter)->capture_default_str();

    BenchArgs bench;
    auto* cmd_bench = app.add_subcommand("bench", "Measure training time and predict_frame throughput");
    cmd_bench->add_option("--trees", bench.trees)->capture_default_str();
    cmd_bench->add_option("--depth,--max-depth", bench.depth)->capture_default_str();
    cmd_bench->add_option("--joints", bench.joints, "D = 3 x joints")->capture_default_str();
    cmd_bench->add_option("--k,--temporal-order", bench.k)->capture_default_str();
    cmd_bench->add_option("--frames", bench.frames)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (g.threads > 0)
            omp_set_num_threads(g.threads);
        if (*cmd_train)
            run_train(g, train);
        else if (*cmd_rec)
            run_recognize(g, rec);
        else if (*cmd_det)
            run_detect(g, det);
        else if (*cmd_eval)
            run_eval(g, config_path, eval_out);
        else if (*cmd_synth)
            run_synth(g, synth);
        else if (*cmd_bench)
            run_bench(g, bench);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const InvariantViolation& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
