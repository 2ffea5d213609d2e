#include "tforest/features.hpp"

#include "tforest/detail/parallel.hpp"
#include "tforest/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>

namespace tforest {

std::string to_string(Representation r)
{
    switch (r) {
    case Representation::jp:
        return "jp";
    case Representation::rjp:
        return "rjp";
    case Representation::mp:
        return "mp";
    case Representation::mp_rjp:
        return "mp-rjp";
    }
    return "?";
}

Representation parse_representation(const std::string& name)
{
    if (name == "jp")
        return Representation::jp;
    if (name == "rjp")
        return Representation::rjp;
    if (name == "mp")
        return Representation::mp;
    if (name == "mp-rjp")
        return Representation::mp_rjp;
    throw UsageError("unknown feature representation '" + name + "' (expected jp, rjp, mp or mp-rjp)");
}

std::size_t FeatureSpec::dimension(std::size_t joints) const
{
    std::size_t base = 0;
    switch (representation) {
    case Representation::jp:
        base = 3 * joints;
        break;
    case Representation::rjp:
        base = joints * (joints - 1) / 2;
        break;
    case Representation::mp:
        base = 9 * joints;
        break;
    case Representation::mp_rjp:
        base = 3 * (joints * (joints - 1) / 2);
        break;
    }
    return base * window;
}

namespace {

std::string format_double(double v)
{
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

} // namespace

std::string FeatureSpec::serialize() const
{
    std::string s;
    s += "features=" + to_string(representation);
    s += ";window=" + std::to_string(window);
    s += ";alpha=" + format_double(mp_alpha);
    s += ";beta=" + format_double(mp_beta);
    s += ";normalize=" + std::string(normalize ? "1" : "0");
    s += ";root=" + std::to_string(skeleton.root);
    s += ";lhip=" + std::to_string(skeleton.left_hip);
    s += ";rhip=" + std::to_string(skeleton.right_hip);
    return s;
}

FeatureSpec FeatureSpec::deserialize(const std::string& text)
{
    std::map<std::string, std::string> kv;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(';', start), text.size());
        const std::string item = text.substr(start, end - start);
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw DataError("malformed feature spec '" + text + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
        start = end + 1;
    }
    const auto get = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end())
            throw DataError(std::string("feature spec lacks '") + key + "'");
        return it->second;
    };
    const auto to_size = [](const std::string& v) {
        std::size_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size())
            throw DataError("bad integer '" + v + "' in feature spec");
        return out;
    };
    const auto to_double = [](const std::string& v) {
        double out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size())
            throw DataError("bad number '" + v + "' in feature spec");
        return out;
    };

    FeatureSpec spec;
    spec.representation = parse_representation(get("features"));
    spec.window = to_size(get("window"));
    spec.mp_alpha = to_double(get("alpha"));
    spec.mp_beta = to_double(get("beta"));
    spec.normalize = get("normalize") == "1";
    spec.skeleton = {to_size(get("root")), to_size(get("lhip")), to_size(get("rhip"))};
    return spec;
}

namespace {

FeatureSequence with_frames_of(const Sequence& seq)
{
    FeatureSequence fs;
    fs.id = seq.id;
    fs.frames.resize(seq.frames.size());
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        fs.frames[t].label = seq.frames[t].label;
        fs.frames[t].time_index = t;
    }
    return fs;
}

} // namespace

FeatureSequence extract_jp(const Sequence& seq)
{
    FeatureSequence fs = with_frames_of(seq);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        auto& v = fs.frames[t].vector;
        v.reserve(3 * seq.frames[t].joints.size());
        for (const auto& j : seq.frames[t].joints) {
            v.push_back(j.x);
            v.push_back(j.y);
            v.push_back(j.z);
        }
    }
    return fs;
}

FeatureSequence extract_rjp(const Sequence& seq)
{
    FeatureSequence fs = with_frames_of(seq);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const auto& joints = seq.frames[t].joints;
        auto& v = fs.frames[t].vector;
        v.reserve(joints.size() * (joints.size() - 1) / 2);
        for (std::size_t i = 0; i < joints.size(); ++i)
            for (std::size_t j = i + 1; j < joints.size(); ++j) {
                const double dx = joints[i].x - joints[j].x;
                const double dy = joints[i].y - joints[j].y;
                const double dz = joints[i].z - joints[j].z;
                v.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
            }
    }
    return fs;
}

FeatureSequence extract_mp(const FeatureSequence& base, double alpha, double beta)
{
    FeatureSequence fs;
    fs.id = base.id;
    const std::size_t n = base.frames.size();
    if (n == 0)
        return fs;
    const std::size_t dim = base.dim();
    const auto at = [&](long long t) -> const std::vector<double>& {
        const long long clamped = std::clamp<long long>(t, 0, static_cast<long long>(n) - 1);
        return base.frames[static_cast<std::size_t>(clamped)].vector;
    };

    fs.frames.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto ti = static_cast<long long>(t);
        const auto& p = at(ti);
        const auto& next = at(ti + 1);
        const auto& prev = at(ti - 1);
        const auto& next2 = at(ti + 2);
        const auto& prev2 = at(ti - 2);
        auto& v = fs.frames[t].vector;
        v.resize(3 * dim);
        for (std::size_t i = 0; i < dim; ++i) {
            v[i] = p[i];
            v[dim + i] = alpha * (next[i] - prev[i]);
            v[2 * dim + i] = beta * (next2[i] + prev2[i] - 2.0 * p[i]);
        }
        fs.frames[t].label = base.frames[t].label;
        fs.frames[t].time_index = base.frames[t].time_index;
    }
    return fs;
}

FeatureSequence extract_mp(const Sequence& seq, Representation base, double alpha, double beta)
{
    switch (base) {
    case Representation::jp:
        return extract_mp(extract_jp(seq), alpha, beta);
    case Representation::rjp:
        return extract_mp(extract_rjp(seq), alpha, beta);
    default:
        throw UsageError("moving pose base must be jp or rjp");
    }
}

FeatureSequence extract_window(const FeatureSequence& fs, std::size_t w)
{
    if (w < 1)
        throw UsageError("window length must be >= 1");
    if (w == 1)
        return fs;
    FeatureSequence out;
    out.id = fs.id;
    out.frames.resize(fs.frames.size());
    const std::size_t dim = fs.dim();
    for (std::size_t t = 0; t < fs.frames.size(); ++t) {
        auto& v = out.frames[t].vector;
        v.reserve(w * dim);
        for (std::size_t back = w; back-- > 0;) {
            const std::size_t src = t >= back ? t - back : 0;
            const auto& piece = fs.frames[src].vector;
            v.insert(v.end(), piece.begin(), piece.end());
        }
        out.frames[t].label = fs.frames[t].label;
        out.frames[t].time_index = fs.frames[t].time_index;
    }
    return out;
}

FeatureSequence extract_features(const Sequence& seq, const FeatureSpec& spec)
{
    const Sequence* source = &seq;
    Sequence normalized;
    if (spec.normalize) {
        normalized = normalize_sequence(seq, spec.skeleton);
        if (normalized.frames.empty())
            throw DataError("every frame is degenerate", seq.id);
        source = &normalized;
    }

    FeatureSequence fs;
    switch (spec.representation) {
    case Representation::jp:
        fs = extract_jp(*source);
        break;
    case Representation::rjp:
        fs = extract_rjp(*source);
        break;
    case Representation::mp:
        fs = extract_mp(*source, Representation::jp, spec.mp_alpha, spec.mp_beta);
        break;
    case Representation::mp_rjp:
        fs = extract_mp(*source, Representation::rjp, spec.mp_alpha, spec.mp_beta);
        break;
    }
    return extract_window(fs, spec.window);
}

std::vector<FeatureSequence> extract_features(const Dataset& dataset, const FeatureSpec& spec)
{
    std::vector<FeatureSequence> out(dataset.sequences.size());
    detail::parallel_for(
        out.size(), [&](std::size_t i) { out[i] = extract_features(dataset.sequences[i], spec); }, true);
    return out;
}

} // namespace tforest
