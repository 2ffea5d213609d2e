#include "tforest/skeleton_data.hpp"

#include "tforest/error.hpp"
#include "tforest/random.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string_view>

namespace tforest {

namespace fs = std::filesystem;

std::size_t Dataset::frame_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& s : sequences)
        n += s.frames.size();
    return n;
}

void validate(const Dataset& dataset)
{
    if (dataset.label_names.empty())
        throw DataError("empty label vocabulary");
    for (const auto& seq : dataset.sequences) {
        if (seq.frames.empty())
            throw DataError("empty sequence", seq.id);
        if (seq.sequence_label && *seq.sequence_label >= dataset.num_labels())
            throw DataError("unknown label id " + std::to_string(*seq.sequence_label), seq.id);
        for (std::size_t t = 0; t < seq.frames.size(); ++t) {
            const auto& frame = seq.frames[t];
            if (frame.joints.size() != dataset.joint_count)
                throw DataError("inconsistent joint count", seq.id, t + 1);
            if (frame.label >= dataset.num_labels())
                throw DataError("unknown label id " + std::to_string(frame.label), seq.id, t + 1);
            if (seq.sequence_label && frame.label != *seq.sequence_label)
                throw DataError("frame label differs from sequence label", seq.id, t + 1);
            if (frame.time_index != t)
                throw DataError("time index not contiguous", seq.id, t + 1);
            for (const auto& j : frame.joints)
                if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z))
                    throw DataError("non-finite coordinate", seq.id, t + 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Text I/O
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

template <class T>
bool parse_number(std::string_view text, T& out)
{
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && first != last;
}

void append_double(std::string& out, double v)
{
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.append(buf.data(), ptr);
}

std::ifstream open_input(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FileNotFoundError("cannot open " + path.string());
    return in;
}

std::vector<std::string> read_labels(const fs::path& path)
{
    auto in = open_input(path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line))
        names.emplace_back(trim(line));
    while (!names.empty() && names.back().empty())
        names.pop_back();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i].empty())
            throw DataError("empty label name", path.string(), i + 1);
    if (names.empty())
        throw DataError("empty label vocabulary", path.string());
    return names;
}

Sequence read_sequence(const fs::path& path, std::size_t num_labels, std::size_t& joint_count)
{
    auto in = open_input(path);
    const std::string file = path.string();
    std::string line;
    std::size_t line_no = 0;

    std::size_t declared = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty())
            continue;
        if (t.substr(0, 2) != "J=" || !parse_number(t.substr(2), declared) || declared == 0)
            throw DataError("expected header J=<joint_count>", file, line_no);
        break;
    }
    if (declared == 0)
        throw DataError("missing header", file, line_no);
    if (joint_count == 0)
        joint_count = declared;
    else if (joint_count != declared)
        throw DataError("inconsistent joint count", file, line_no);

    Sequence seq;
    seq.id = path.stem().string();
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty())
            continue;
        const auto fields = split_commas(t);
        if (fields.size() != 1 + 3 * declared)
            throw DataError("inconsistent joint count", file, line_no);
        SkeletonFrame frame;
        if (!parse_number(fields[0], frame.label))
            throw DataError("bad label id '" + std::string(fields[0]) + "'", file, line_no);
        if (frame.label >= num_labels)
            throw DataError("unknown label id " + std::to_string(frame.label), file, line_no);
        frame.time_index = seq.frames.size();
        frame.joints.resize(declared);
        for (std::size_t j = 0; j < declared; ++j) {
            double* xyz[3] = {&frame.joints[j].x, &frame.joints[j].y, &frame.joints[j].z};
            for (int c = 0; c < 3; ++c) {
                const auto& f = fields[1 + 3 * j + c];
                if (!parse_number(f, *xyz[c]))
                    throw DataError("bad coordinate '" + std::string(f) + "'", file, line_no);
                if (!std::isfinite(*xyz[c]))
                    throw DataError("non-finite coordinate", file, line_no);
            }
        }
        seq.frames.push_back(std::move(frame));
    }
    if (seq.frames.empty())
        throw DataError("sequence has no frames", file);
    return seq;
}

bool is_background_name(const std::string& name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower == kBackgroundName;
}

} // namespace

Dataset load_dataset(const fs::path& manifest_path)
{
    if (manifest_path.empty())
        throw FileNotFoundError("empty manifest path");
    auto in = open_input(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    const std::string file = manifest_path.string();

    Dataset ds;
    ds.label_names = read_labels(dir / kLabelFileName);
    ds.has_background = is_background_name(ds.label_names.back());

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto fields = split_commas(t);
        if (fields.size() != 2 || fields[0].empty())
            throw DataError("expected <relative_path>,<sequence_label_or_->", file, line_no);
        Sequence seq = read_sequence(dir / fs::path(std::string(fields[0])), ds.num_labels(), ds.joint_count);
        if (fields[1] != "-") {
            LabelId label = 0;
            if (!parse_number(fields[1], label))
                throw DataError("bad sequence label '" + std::string(fields[1]) + "'", file, line_no);
            if (label >= ds.num_labels())
                throw DataError("unknown label id " + std::to_string(label), file, line_no);
            for (const auto& f : seq.frames)
                if (f.label != label)
                    throw DataError("frame label differs from sequence label", file, line_no);
            seq.sequence_label = label;
        }
        ds.sequences.push_back(std::move(seq));
    }
    if (ds.sequences.empty())
        throw DataError("manifest lists no sequences", file);
    return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& manifest_path)
{
    validate(dataset);
    const fs::path dir = manifest_path.parent_path();
    if (!dir.empty())
        fs::create_directories(dir);

    {
        std::ofstream labels(dir / kLabelFileName, std::ios::binary);
        for (const auto& name : dataset.label_names)
            labels << name << '\n';
        if (!labels)
            throw Error("cannot write " + (dir / kLabelFileName).string());
    }

    std::ofstream manifest(manifest_path, std::ios::binary);
    if (!manifest)
        throw Error("cannot write " + manifest_path.string());
    std::string buf;
    for (const auto& seq : dataset.sequences) {
        const std::string rel = seq.id + ".csv";
        manifest << rel << ',';
        if (seq.sequence_label)
            manifest << *seq.sequence_label;
        else
            manifest << '-';
        manifest << '\n';

        buf.clear();
        buf += "J=" + std::to_string(dataset.joint_count) + "\n";
        for (const auto& frame : seq.frames) {
            buf += std::to_string(frame.label);
            for (const auto& j : frame.joints) {
                for (double v : {j.x, j.y, j.z}) {
                    buf += ',';
                    append_double(buf, v);
                }
            }
            buf += '\n';
        }
        std::ofstream out(dir / rel, std::ios::binary);
        out << buf;
        if (!out)
            throw Error("cannot write " + (dir / rel).string());
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

SkeletonFrame normalize_skeleton(const SkeletonFrame& frame, const SkeletonSpec& spec)
{
    const std::size_t n = frame.joints.size();
    if (spec.root >= n || spec.left_hip >= n || spec.right_hip >= n)
        throw DataError("skeleton spec refers to a missing joint");

    const Joint root = frame.joints[spec.root];
    const double hx = frame.joints[spec.right_hip].x - frame.joints[spec.left_hip].x;
    const double hz = frame.joints[spec.right_hip].z - frame.joints[spec.left_hip].z;
    const double hip_norm = std::hypot(hx, hz);

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == spec.root)
            continue;
        const auto& j = frame.joints[i];
        scale += std::sqrt((j.x - root.x) * (j.x - root.x) + (j.y - root.y) * (j.y - root.y) +
                           (j.z - root.z) * (j.z - root.z));
    }
    if (!(hip_norm > 0.0) || !(scale > 0.0) || !std::isfinite(scale))
        throw DataError("degenerate skeleton");

    // Rotation about y taking (hx, hz) onto (+|h|, 0).
    const double c = hx / hip_norm;
    const double s = hz / hip_norm;

    SkeletonFrame out;
    out.label = frame.label;
    out.time_index = frame.time_index;
    out.joints.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = frame.joints[i].x - root.x;
        const double y = frame.joints[i].y - root.y;
        const double z = frame.joints[i].z - root.z;
        out.joints[i] = {(c * x + s * z) / scale, y / scale, (c * z - s * x) / scale};
    }
    out.joints[spec.root] = {0.0, 0.0, 0.0};
    return out;
}

Sequence normalize_sequence(const Sequence& seq, const SkeletonSpec& spec, std::size_t* dropped)
{
    Sequence out;
    out.id = seq.id;
    out.sequence_label = seq.sequence_label;
    std::size_t skipped = 0;
    for (const auto& frame : seq.frames) {
        try {
            out.frames.push_back(normalize_skeleton(frame, spec));
            out.frames.back().time_index = out.frames.size() - 1;
        } catch (const DataError&) {
            ++skipped;
        }
    }
    if (skipped > 0)
        std::cerr << "warning: " << seq.id << ": dropped " << skipped << " degenerate frame(s)\n";
    if (dropped)
        *dropped = skipped;
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

void validate(const SynthConfig& config)
{
    const std::size_t p = config.pose_centers_per_label;
    if (config.num_labels == 0 || config.num_joints == 0 || p == 0 || config.frames_per_sequence == 0)
        throw UsageError("synthetic config: counts must be positive");
    if (!(config.noise_sigma >= 0.0))
        throw UsageError("synthetic config: noise_sigma must be >= 0");
    if (config.transition_kernels.size() != config.num_labels)
        throw UsageError("synthetic config: need one transition kernel per label");
    for (std::size_t l = 0; l < config.num_labels; ++l) {
        const auto& k = config.transition_kernels[l];
        if (k.size() != p * p)
            throw UsageError("synthetic config: kernel " + std::to_string(l) + " has wrong size");
        for (std::size_t r = 0; r < p; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < p; ++c) {
                if (!(k[r * p + c] >= 0.0))
                    throw UsageError("synthetic config: negative kernel entry");
                sum += k[r * p + c];
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw UsageError("synthetic config: kernel " + std::to_string(l) + " row " + std::to_string(r) +
                                 " is not stochastic");
        }
    }
}

std::vector<double> cyclic_kernel(std::size_t n, double stay, int direction)
{
    std::vector<double> k(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto len = static_cast<long long>(n);
        const auto next = static_cast<std::size_t>(((static_cast<long long>(i) + direction) % len + len) % len);
        k[i * n + i] += stay;
        k[i * n + next] += 1.0 - stay;
    }
    return k;
}

namespace {

using Pose = std::vector<Joint>;

std::vector<Pose> random_poses(std::size_t count, std::size_t joints, Rng& rng)
{
    std::vector<Pose> poses(count, Pose(joints));
    for (auto& pose : poses)
        for (auto& j : pose)
            j = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0};
    return poses;
}

std::size_t sample_row(const std::vector<double>& kernel, std::size_t n, std::size_t row, Rng& rng)
{
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        acc += kernel[row * n + c];
        if (u < acc)
            return c;
    }
    // Rounding left u above the cumulative sum; take the last non-zero entry.
    for (std::size_t c = n; c-- > 0;)
        if (kernel[row * n + c] > 0.0)
            return c;
    return n - 1;
}

void emit_walk(std::vector<SkeletonFrame>& frames, const std::vector<Pose>& protos, const std::vector<double>& kernel,
               std::size_t length, LabelId label, double sigma, Rng& rng)
{
    const std::size_t p = protos.size();
    std::size_t state = uniform_index(rng, p);
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0)
            state = sample_row(kernel, p, state, rng);
        SkeletonFrame frame;
        frame.label = label;
        frame.time_index = frames.size();
        frame.joints = protos[state];
        for (auto& j : frame.joints) {
            j.x += sigma * standard_normal(rng);
            j.y += sigma * standard_normal(rng);
            j.z += sigma * standard_normal(rng);
        }
        frames.push_back(std::move(frame));
    }
}

std::vector<std::string> synth_label_names(std::size_t n)
{
    std::vector<std::string> names;
    for (std::size_t l = 0; l < n; ++l)
        names.push_back("action" + std::to_string(l));
    return names;
}

} // namespace

Dataset generate_synthetic(const SynthConfig& config, std::uint64_t seed)
{
    validate(config);
    Rng rng(derive_seed(seed, 0x5157));

    std::vector<std::vector<Pose>> pools;
    if (config.shared_pose_pool) {
        pools.assign(config.num_labels, random_poses(config.pose_centers_per_label, config.num_joints, rng));
    } else {
        for (std::size_t l = 0; l < config.num_labels; ++l)
            pools.push_back(random_poses(config.pose_centers_per_label, config.num_joints, rng));
    }

    Dataset ds;
    ds.label_names = synth_label_names(config.num_labels);
    ds.joint_count = config.num_joints;
    for (std::size_t l = 0; l < config.num_labels; ++l) {
        for (std::size_t i = 0; i < config.sequences_per_label; ++i) {
            Sequence seq;
            seq.id = "synth_" + std::to_string(l) + "_" + std::to_string(i);
            seq.sequence_label = static_cast<LabelId>(l);
            emit_walk(seq.frames, pools[l], config.transition_kernels[l], config.frames_per_sequence,
                      static_cast<LabelId>(l), config.noise_sigma, rng);
            ds.sequences.push_back(std::move(seq));
        }
    }
    return ds;
}

Dataset generate_detection_streams(const SynthStreamConfig& config, std::uint64_t seed)
{
    const SynthConfig& ac = config.actions;
    validate(ac);
    if (config.action_length <= config.length_jitter || config.background_length <= config.length_jitter)
        throw UsageError("synthetic stream: segment lengths must exceed the jitter");
    Rng rng(derive_seed(seed, 0xde7ec7));

    const std::size_t p = ac.pose_centers_per_label;
    std::vector<std::vector<Pose>> pools;
    for (std::size_t l = 0; l < ac.num_labels; ++l)
        pools.push_back(random_poses(p, ac.num_joints, rng));
    const std::vector<Pose> background_pool = random_poses(p, ac.num_joints, rng);
    const std::vector<double> background_kernel(p * p, 1.0 / static_cast<double>(p));

    const auto jittered = [&](std::size_t base) {
        const std::size_t span = 2 * config.length_jitter + 1;
        return base - config.length_jitter + uniform_index(rng, span);
    };

    Dataset ds;
    ds.label_names = synth_label_names(ac.num_labels);
    ds.label_names.emplace_back(kBackgroundName);
    ds.has_background = true;
    ds.joint_count = ac.num_joints;
    const auto background = static_cast<LabelId>(ac.num_labels);

    for (std::size_t s = 0; s < config.num_streams; ++s) {
        Sequence seq;
        seq.id = "stream_" + std::to_string(s);
        for (std::size_t a = 0; a < config.actions_per_stream; ++a) {
            emit_walk(seq.frames, background_pool, background_kernel, jittered(config.background_length), background,
                      ac.noise_sigma, rng);
            const auto label = static_cast<LabelId>(uniform_index(rng, ac.num_labels));
            emit_walk(seq.frames, pools[label], ac.transition_kernels[label], jittered(config.action_length), label,
                      ac.noise_sigma, rng);
        }
        emit_walk(seq.frames, background_pool, background_kernel, jittered(config.background_length), background,
                  ac.noise_sigma, rng);
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

} // namespace tforest
