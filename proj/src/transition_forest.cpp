#include "tforest/transition_forest.hpp"

#include "tforest/error.hpp"

#include <omp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>

namespace tforest {

void validate(const ForestConfig& cfg)
{
    validate(cfg.tree);
    if (cfg.num_trees < 1)
        throw UsageError("a forest needs at least one tree");
    if (cfg.temporal_order >= 1 && cfg.num_trees < cfg.temporal_order)
        throw UsageError("num_trees (" + std::to_string(cfg.num_trees) + ") must be >= temporal order k (" +
                         std::to_string(cfg.temporal_order) + ")");
    if (cfg.features.window < 1)
        throw UsageError("window length must be >= 1");
}

TransitionForest::TransitionForest(std::vector<TrainedTree> trees, std::vector<std::string> label_names,
                                   bool has_background, std::size_t feature_dim, std::size_t temporal_order,
                                   FeatureSpec features)
    : trees_(std::move(trees)), label_names_(std::move(label_names)), has_background_(has_background),
      feature_dim_(feature_dim), temporal_order_(temporal_order), features_(features),
      by_distance_(temporal_order + 1)
{
    if (label_names_.empty())
        throw DataError("forest without labels");
    if (trees_.empty())
        throw DataError("forest without trees");
    for (std::size_t i = 0; i < trees_.size(); ++i) {
        const auto& t = trees_[i];
        if (t.d > temporal_order_ || (temporal_order_ >= 1 && t.d == 0))
            throw DataError("tree " + std::to_string(i) + " has temporal distance outside 1..k");
        if (t.tree.dim() != feature_dim_)
            throw DataError("tree " + std::to_string(i) + " has the wrong feature dimension");
        if (t.leaves.num_labels() != label_names_.size() || t.leaves.leaf_count() != t.tree.leaf_count())
            throw DataError("tree " + std::to_string(i) + " has inconsistent leaf tables");
        by_distance_[t.d].push_back(static_cast<std::uint32_t>(i));
    }
    for (std::size_t d = 1; d <= temporal_order_; ++d)
        if (by_distance_[d].empty())
            throw DataError("no tree handles temporal distance " + std::to_string(d));
}

std::span<const std::uint32_t> TransitionForest::trees_for(std::size_t d) const
{
    if (d < 1 || d > temporal_order_)
        throw UsageError("temporal distance " + std::to_string(d) + " outside 1.." + std::to_string(temporal_order_));
    return by_distance_[d];
}

std::vector<std::uint32_t> assign_distances(std::size_t num_trees, std::size_t k, std::uint64_t seed)
{
    std::vector<std::uint32_t> d(num_trees, 0);
    if (k == 0)
        return d;
    if (num_trees < k)
        throw UsageError("num_trees must be >= temporal order k");
    for (std::size_t i = 0; i < num_trees; ++i)
        d[i] = static_cast<std::uint32_t>(i % k + 1);
    Rng rng(derive_seed(seed, 0));
    for (std::size_t i = num_trees; i > 1; --i)
        std::swap(d[i - 1], d[uniform_index(rng, i)]);
    return d;
}

TransitionForest train_forest(std::span<const FeatureSequence> sequences, std::vector<std::string> label_names,
                              bool has_background, const ForestConfig& cfg)
{
    validate(cfg);
    if (sequences.empty())
        throw UsageError("cannot train on an empty dataset");
    const std::size_t num_labels = label_names.size();
    const TrainingSet full(sequences, num_labels);
    if (full.size() == 0)
        throw UsageError("cannot train on an empty dataset");

    const auto distances = assign_distances(cfg.num_trees, cfg.temporal_order, cfg.seed);
    std::vector<TrainedTree> trees(cfg.num_trees);

    std::exception_ptr error;
    std::mutex error_mutex;
    const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
    const auto count = static_cast<long long>(cfg.num_trees);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < count; ++i) {
        try {
            const auto index = static_cast<std::size_t>(i);
            Rng rng(derive_seed(cfg.seed, index + 1));
            TreeTrainConfig tree_cfg = cfg.tree;
            tree_cfg.d = distances[index];
            const TrainingSet bag = cfg.bagging ? TrainingSet::bootstrap(sequences, num_labels, rng) : full;
            TrainedTree t;
            t.d = distances[index];
            t.tree = grow_tree(bag, tree_cfg, rng);
            t.leaves = finalize_leaves(t.tree, bag, tree_cfg);
            trees[index] = std::move(t);
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error)
                error = std::current_exception();
        }
    }
    if (error)
        std::rethrow_exception(error);

    return TransitionForest(std::move(trees), std::move(label_names), has_background, full.dim(),
                            cfg.temporal_order, cfg.features);
}

TransitionForest train_forest(const Dataset& dataset, const ForestConfig& cfg)
{
    validate(dataset);
    const auto sequences = extract_features(dataset, cfg.features);
    return train_forest(sequences, dataset.label_names, dataset.has_background, cfg);
}

// ---------------------------------------------------------------------------
// Binary model files
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'F', 'O', 'R'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }

    std::string& bytes() noexcept { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    std::uint8_t u8()
    {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str()
    {
        const std::uint32_t n = u32();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    /// Guards counts read from the file before allocating for them.
    std::size_t count(std::size_t element_bytes)
    {
        const std::uint32_t n = u32();
        if (element_bytes > 0 && n > (in_.size() - pos_) / element_bytes)
            throw ModelFormatError(ModelFormatError::Kind::truncated, "model file truncated");
        return n;
    }
    bool done() const noexcept { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw ModelFormatError(ModelFormatError::Kind::truncated, "model file truncated");
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes)
{
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), n);
        pos += n;
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace

std::string serialize_forest(const TransitionForest& forest)
{
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(forest.temporal_order()));
    w.u32(static_cast<std::uint32_t>(forest.trees().size()));
    w.u32(static_cast<std::uint32_t>(forest.feature_dim()));
    w.u32(static_cast<std::uint32_t>(forest.num_labels()));
    w.u8(forest.has_background() ? 1 : 0);
    for (const auto& name : forest.label_names())
        w.str(name);
    w.str(forest.features().serialize());

    const std::size_t y = forest.num_labels();
    for (const auto& t : forest.trees()) {
        w.u32(t.d);
        w.u32(static_cast<std::uint32_t>(t.tree.nodes().size()));
        for (const auto& n : t.tree.nodes()) {
            w.u8(n.is_leaf ? 1 : 0);
            w.u64(n.id);
            w.u32(n.split.feature);
            w.f64(n.split.threshold);
            w.u32(n.left);
            w.u32(n.right);
            w.u32(n.leaf_id);
        }
        w.u32(static_cast<std::uint32_t>(t.leaves.leaf_count()));
        for (double p : t.leaves.class_table())
            w.f64(p);
        w.u32(static_cast<std::uint32_t>(t.leaves.entries().size()));
        for (const auto& e : t.leaves.entries()) {
            w.u32(e.prev_leaf);
            w.u32(e.cur_leaf);
            w.u64(e.support);
            for (std::size_t i = 0; i < y * y; ++i)
                w.f64(e.matrix[i]);
        }
    }
    const std::uint32_t crc = crc_of(w.bytes());
    w.u32(crc);
    return std::move(w.bytes());
}

TransitionForest deserialize_forest(std::string_view bytes)
{
    if (bytes.size() < 8)
        throw ModelFormatError(ModelFormatError::Kind::truncated, "model file truncated");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ModelFormatError(ModelFormatError::Kind::bad_magic, "not a transition forest model file");
    Reader header(bytes.substr(4, 4));
    const std::uint32_t version = header.u32();
    if (version != kModelVersion)
        throw ModelFormatError(ModelFormatError::Kind::version_mismatch,
                               "model file version " + std::to_string(version) + ", expected " +
                                   std::to_string(kModelVersion));
    if (bytes.size() < 12)
        throw ModelFormatError(ModelFormatError::Kind::truncated, "model file truncated");
    const std::string_view body = bytes.substr(0, bytes.size() - 4);
    Reader crc_reader(bytes.substr(bytes.size() - 4));
    if (crc_reader.u32() != crc_of(body))
        throw ModelFormatError(ModelFormatError::Kind::checksum, "model file checksum mismatch");

    try {
        Reader r(body.substr(8));
        const std::uint32_t k = r.u32();
        const std::uint32_t n_trees = r.u32();
        const std::uint32_t dim = r.u32();
        const std::uint32_t n_labels = r.u32();
        const bool has_background = r.u8() != 0;
        std::vector<std::string> names;
        for (std::uint32_t i = 0; i < n_labels; ++i)
            names.push_back(r.str());
        const FeatureSpec features = FeatureSpec::deserialize(r.str());

        const std::size_t y = n_labels;
        std::vector<TrainedTree> trees;
        for (std::uint32_t ti = 0; ti < n_trees; ++ti) {
            TrainedTree t;
            t.d = r.u32();
            std::vector<TreeNode> nodes(r.count(33));
            for (auto& n : nodes) {
                n.is_leaf = r.u8() != 0;
                n.id = r.u64();
                n.split.feature = r.u32();
                n.split.threshold = r.f64();
                n.left = r.u32();
                n.right = r.u32();
                n.leaf_id = r.u32();
            }
            t.tree = TransitionTree(std::move(nodes), dim);
            const std::size_t leaves = r.count(8 * y);
            std::vector<double> class_dist(leaves * y);
            for (auto& p : class_dist)
                p = r.f64();
            std::vector<TransitionEntry> entries(r.count(16 + 8 * y * y));
            for (auto& e : entries) {
                e.prev_leaf = r.u32();
                e.cur_leaf = r.u32();
                e.support = r.u64();
                e.matrix.resize(y * y);
                for (auto& p : e.matrix)
                    p = r.f64();
            }
            t.leaves = LeafTables(y, std::move(class_dist), std::move(entries));
            trees.push_back(std::move(t));
        }
        if (!r.done())
            throw ModelFormatError(ModelFormatError::Kind::truncated, "trailing bytes in model file");
        return TransitionForest(std::move(trees), std::move(names), has_background, dim, k, features);
    } catch (const DataError& e) {
        // Structurally invalid content that still passed the checksum.
        throw ModelFormatError(ModelFormatError::Kind::truncated, std::string("invalid model file: ") + e.what());
    }
}

void save_forest(const TransitionForest& forest, const std::filesystem::path& path)
{
    if (path.empty())
        throw UsageError("empty model path");
    const std::string bytes = serialize_forest(forest);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("cannot write " + path.string());
}

TransitionForest load_forest(const std::filesystem::path& path)
{
    if (path.empty())
        throw FileNotFoundError("empty model path");
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileNotFoundError("cannot open model file " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_forest(bytes);
}

} // namespace tforest
