#include "test_support.hpp"

#include "tforest/error.hpp"
#include "tforest/features.hpp"

#include <doctest.h>

#include <cmath>

using namespace tforest;

namespace {

Sequence random_sequence(Rng& rng, std::size_t frames, std::size_t joints)
{
    Sequence s;
    s.id = "rand";
    for (std::size_t t = 0; t < frames; ++t) {
        SkeletonFrame f;
        f.time_index = t;
        f.label = static_cast<LabelId>(t % 3);
        for (std::size_t j = 0; j < joints; ++j)
            f.joints.push_back({standard_normal(rng), standard_normal(rng), standard_normal(rng)});
        s.frames.push_back(f);
    }
    return s;
}

Sequence from_points(std::vector<std::vector<Joint>> frames)
{
    Sequence s;
    s.id = "pts";
    for (std::size_t t = 0; t < frames.size(); ++t)
        s.frames.push_back({frames[t], 0, t});
    return s;
}

FeatureSequence scalar_sequence(std::vector<double> values)
{
    FeatureSequence fs;
    fs.id = "v";
    for (std::size_t t = 0; t < values.size(); ++t)
        fs.frames.push_back({{values[t]}, static_cast<LabelId>(t), t});
    return fs;
}

} // namespace

TEST_CASE("jp flattens joints")
{
    const auto fs = extract_jp(from_points({{{0, 0, 0}, {1, 0, 0}}}));
    CHECK(fs.frames[0].vector == std::vector<double>{0, 0, 0, 1, 0, 0});
    CHECK(FeatureSpec{}.dimension(20) == 60);
}

TEST_CASE("jp reproduces input coordinates on random frames")
{
    Rng rng(1);
    const auto seq = random_sequence(rng, 10, 7);
    const auto fs = extract_jp(seq);
    REQUIRE(fs.size() == seq.frames.size());
    for (std::size_t t = 0; t < fs.size(); ++t) {
        CHECK(fs.frames[t].label == seq.frames[t].label);
        for (std::size_t j = 0; j < 7; ++j) {
            CHECK(fs.frames[t].vector[3 * j] == seq.frames[t].joints[j].x);
            CHECK(fs.frames[t].vector[3 * j + 1] == seq.frames[t].joints[j].y);
            CHECK(fs.frames[t].vector[3 * j + 2] == seq.frames[t].joints[j].z);
        }
    }
}

TEST_CASE("rjp distances in lexicographic pair order")
{
    const auto fs = extract_rjp(from_points({{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}}));
    CHECK(fs.frames[0].vector == std::vector<double>{1, 2, 1});
    FeatureSpec spec;
    spec.representation = Representation::rjp;
    CHECK(spec.dimension(20) == 190);
}

TEST_CASE("rjp is non-negative and invariant under rigid transforms")
{
    Rng rng(2);
    const auto seq = random_sequence(rng, 5, 6);
    // Random rotation from a normalized quaternion, plus a translation.
    double q[4] = {standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng)};
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& v : q)
        v /= n;
    const auto [w, x, y, z] = std::tuple{q[0], q[1], q[2], q[3]};
    const double r[3][3] = {{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
                            {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
                            {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
    Sequence moved = seq;
    for (auto& f : moved.frames)
        for (auto& j : f.joints)
            j = {r[0][0] * j.x + r[0][1] * j.y + r[0][2] * j.z + 3.0, r[1][0] * j.x + r[1][1] * j.y + r[1][2] * j.z - 1.0,
                 r[2][0] * j.x + r[2][1] * j.y + r[2][2] * j.z + 0.5};

    const auto a = extract_rjp(seq);
    const auto b = extract_rjp(moved);
    for (std::size_t t = 0; t < a.size(); ++t)
        for (std::size_t i = 0; i < a.frames[t].vector.size(); ++i) {
            CHECK(a.frames[t].vector[i] >= 0.0);
            CHECK(std::abs(a.frames[t].vector[i] - b.frames[t].vector[i]) <= 1e-12);
        }
}

TEST_CASE("mp of a constant sequence has zero motion blocks")
{
    const auto fs = extract_mp(scalar_sequence({2, 2, 2, 2}));
    for (const auto& f : fs.frames)
        CHECK(f.vector == std::vector<double>{2, 0, 0});
}

TEST_CASE("mp of linear motion: velocity 2 alpha v, zero acceleration in the interior")
{
    const double v = 0.5;
    std::vector<double> values;
    for (int t = 0; t < 7; ++t)
        values.push_back(v * t);
    const auto fs = extract_mp(scalar_sequence(values), 0.75, 0.6);
    for (std::size_t t = 2; t + 2 < 7; ++t) {
        CHECK(fs.frames[t].vector[0] == values[t]);
        CHECK(fs.frames[t].vector[1] == doctest::Approx(0.75 * 2 * v));
        CHECK(fs.frames[t].vector[2] == doctest::Approx(0.0));
    }
    // Clamped at the first frame: p1 - p0 and p2 + p0 - 2 p0.
    CHECK(fs.frames[0].vector[1] == doctest::Approx(0.75 * v));
    CHECK(fs.frames[0].vector[2] == doctest::Approx(0.6 * 2 * v));
}

TEST_CASE("mp on a single frame and on both bases")
{
    const auto one = extract_mp(scalar_sequence({3}));
    CHECK(one.frames[0].vector == std::vector<double>{3, 0, 0});

    Rng rng(3);
    const auto seq = random_sequence(rng, 4, 3);
    CHECK(extract_mp(seq, Representation::jp).dim() == 27);
    CHECK(extract_mp(seq, Representation::rjp).dim() == 9);
    CHECK_THROWS_AS(extract_mp(seq, Representation::mp), UsageError);
}

TEST_CASE("window stacking with clamped start")
{
    const auto base = scalar_sequence({1, 2, 3});
    CHECK(extract_window(base, 1) == base);

    const auto w2 = extract_window(base, 2);
    CHECK(w2.frames[0].vector == std::vector<double>{1, 1});
    CHECK(w2.frames[1].vector == std::vector<double>{1, 2});
    CHECK(w2.frames[2].vector == std::vector<double>{2, 3});
    CHECK(w2.frames[2].label == 2);

    CHECK(extract_window(base, 3).frames[0].vector == std::vector<double>{1, 1, 1});
    CHECK_THROWS_AS(extract_window(base, 0), UsageError);
}

TEST_CASE("extractors preserve length and labels")
{
    Rng rng(4);
    const auto seq = random_sequence(rng, 9, 4);
    for (auto rep : {Representation::jp, Representation::rjp, Representation::mp, Representation::mp_rjp})
        for (std::size_t w : {1, 3}) {
            FeatureSpec spec;
            spec.representation = rep;
            spec.window = w;
            const auto fs = extract_features(seq, spec);
            REQUIRE(fs.size() == seq.frames.size());
            CHECK(fs.dim() == spec.dimension(4));
            for (std::size_t t = 0; t < fs.size(); ++t) {
                CHECK(fs.frames[t].label == seq.frames[t].label);
                CHECK(fs.frames[t].time_index == t);
            }
        }
}

TEST_CASE("dataset extraction matches per-sequence extraction")
{
    SynthConfig cfg;
    cfg.sequences_per_label = 5;
    cfg.transition_kernels = {cyclic_kernel(5, 0.5, 1), cyclic_kernel(5, 0.5, -1)};
    const auto ds = generate_synthetic(cfg, 1);
    FeatureSpec spec;
    spec.representation = Representation::mp;
    const auto all = extract_features(ds, spec);
    REQUIRE(all.size() == ds.sequences.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        CHECK(all[i] == extract_features(ds.sequences[i], spec));
}

TEST_CASE("representation names and feature spec round trip")
{
    for (auto rep : {Representation::jp, Representation::rjp, Representation::mp, Representation::mp_rjp})
        CHECK(parse_representation(to_string(rep)) == rep);
    CHECK_THROWS_AS(parse_representation("xyz"), UsageError);

    FeatureSpec spec;
    spec.representation = Representation::mp_rjp;
    spec.window = 4;
    spec.mp_alpha = 0.1;
    spec.mp_beta = 1.0 / 3.0;
    spec.normalize = true;
    spec.skeleton = SkeletonSpec::kinect20();
    CHECK(FeatureSpec::deserialize(spec.serialize()) == spec);
    CHECK_THROWS_AS(FeatureSpec::deserialize("features=jp"), DataError);
}
