#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avfuse/fusion.hpp"

using namespace avfuse;

namespace {

FeatureSequence make_seq(Modality m, std::size_t T, std::size_t D, Rng& rng,
                         double lo = -2.0, double hi = 2.0) {
    FeatureSequence f{m, Matrix(T, D)};
    for (double& v : f.values.values()) v = rng.uniform(lo, hi);
    return f;
}

EncoderParams identity_encoder(std::size_t d) {
    EncoderParams enc;
    enc.layer1.weights = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) enc.layer1.weights.at(i, i) = 1.0;
    enc.layer1.bias.assign(d, 0.0);
    return enc;
}

}  // namespace

TEST_CASE("encode: identity, bias-only and dense oracle") {
    Rng rng(42);
    auto raw = make_seq(Modality::video, 4, 3, rng);

    auto out = encode(raw, identity_encoder(3));
    CHECK(out.values == raw.values);

    EncoderParams biased;
    biased.layer1.weights = Matrix(3, 3);
    biased.layer1.bias = {1.0, -2.0, 0.5};
    auto b = encode(raw, biased);
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(b.values.at(t, 0) == 1.0);
        CHECK(b.values.at(t, 1) == -2.0);
        CHECK(b.values.at(t, 2) == 0.5);
    }

    // random affine vs an independent row-by-row multiply
    EncoderParams dense;
    dense.layer1.weights = Matrix(2, 3);
    for (double& v : dense.layer1.weights.values()) v = rng.uniform(-1, 1);
    dense.layer1.bias = {0.3, -0.7};
    auto z = encode(raw, dense);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t i = 0; i < 2; ++i) {
            double expect = dense.layer1.bias[i];
            for (std::size_t j = 0; j < 3; ++j) {
                expect += dense.layer1.weights.at(i, j) * raw.values.at(t, j);
            }
            CHECK(z.values.at(t, i) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(encode(make_seq(Modality::video, 2, 5, rng), dense),
                    std::invalid_argument);
}

TEST_CASE("encode with rectified hidden layer") {
    // hand-checkable 1x1 case: y = w2 * relu(w1 x + b1) + b2
    EncoderParams enc;
    enc.layer1.weights = Matrix(1, 1, {2.0});
    enc.layer1.bias = {-1.0};
    enc.layer2 = AffineMap{Matrix(1, 1, {3.0}), {0.5}};
    FeatureSequence raw{Modality::audio, Matrix(3, 1, {1.0, 0.25, -1.0})};
    auto z = encode(raw, enc);
    CHECK(z.values.at(0, 0) == doctest::Approx(3.0 * 1.0 + 0.5));   // pre=1 -> relu 1
    CHECK(z.values.at(1, 0) == doctest::Approx(0.5));               // pre=-0.5 -> 0
    CHECK(z.values.at(2, 0) == doctest::Approx(0.5));               // pre=-3 -> 0
}

TEST_CASE("correlation_scores basics and oracle") {
    Rng rng(7);
    auto zv = make_seq(Modality::video, 6, 4, rng);
    FeatureSequence za{Modality::audio, Matrix(6, 4)};
    CHECK(correlation_scores(zv, za) == std::vector<double>(6, 0.0));

    FeatureSequence e1v{Modality::video, Matrix(1, 4, {1, 0, 0, 0})};
    FeatureSequence e1a{Modality::audio, Matrix(1, 4, {1, 0, 0, 0})};
    CHECK(correlation_scores(e1v, e1a)[0] == 1.0);

    auto zb = make_seq(Modality::audio, 6, 4, rng);
    auto s = correlation_scores(zv, zb);
    for (std::size_t t = 0; t < 6; ++t) {
        double expect = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            expect += zv.values.at(t, j) * zb.values.at(t, j);
        }
        CHECK(s[t] == doctest::Approx(expect).epsilon(1e-12));
    }

    FeatureSequence bad{Modality::audio, Matrix(5, 4)};
    CHECK_THROWS_AS(correlation_scores(zv, bad), std::invalid_argument);
}

TEST_CASE("fuse_continuous constants, T=1 and column-mean oracle") {
    FeatureSequence zv{Modality::video, Matrix(3, 2, {4, 5, 4, 5, 4, 5})};
    FeatureSequence za{Modality::audio, Matrix(3, 2, {-1, 2, -1, 2, -1, 2})};
    CHECK(fuse_continuous(zv, za) == std::vector<double>{4, 5, -1, 2});

    FeatureSequence v1{Modality::video, Matrix(1, 2, {7, 8})};
    FeatureSequence a1{Modality::audio, Matrix(1, 2, {9, 10})};
    CHECK(fuse_continuous(v1, a1) == std::vector<double>{7, 8, 9, 10});

    Rng rng(3);
    auto rv = make_seq(Modality::video, 5, 3, rng);
    auto ra = make_seq(Modality::audio, 5, 3, rng);
    auto fused = fuse_continuous(rv, ra);
    for (std::size_t j = 0; j < 3; ++j) {
        double mv = 0.0, ma = 0.0;
        for (std::size_t t = 0; t < 5; ++t) {
            mv += rv.values.at(t, j);
            ma += ra.values.at(t, j);
        }
        CHECK(fused[j] == doctest::Approx(mv / 5).epsilon(1e-12));
        CHECK(fused[3 + j] == doctest::Approx(ma / 5).epsilon(1e-12));
    }
}

TEST_CASE("fuse_instant selects the planted step") {
    // planted step carries sqrt(5)*e1 in both modalities, other rows are
    // orthogonal unit vectors, so the only nonzero score is the planted one
    const double r5 = std::sqrt(5.0);
    FeatureSequence zv{Modality::video, Matrix(3, 3)};
    FeatureSequence za{Modality::audio, Matrix(3, 3)};
    zv.values.at(0, 1) = 1.0;
    za.values.at(0, 2) = 1.0;
    zv.values.at(1, 0) = r5;
    za.values.at(1, 0) = r5;
    zv.values.at(2, 2) = 1.0;
    za.values.at(2, 1) = 1.0;
    auto s = correlation_scores(zv, za);
    CHECK(s[1] == doctest::Approx(5.0));
    auto fused = fuse_instant(zv, za, 1);
    CHECK(fused == std::vector<double>{r5, 0, 0, r5, 0, 0});
}

TEST_CASE("fuse_instant degeneracy and ties") {
    Rng rng(9);
    auto zv = make_seq(Modality::video, 7, 3, rng);
    auto za = make_seq(Modality::audio, 7, 3, rng);
    auto cont = fuse_continuous(zv, za);
    auto inst = fuse_instant(zv, za, 7);
    for (std::size_t j = 0; j < cont.size(); ++j) {
        CHECK(std::abs(cont[j] - inst[j]) <= 1e-12);
    }

    // equal scores: top-2 of 4 takes steps {0, 1}
    FeatureSequence ev{Modality::video, Matrix(4, 1, {1, 2, 3, 4})};
    FeatureSequence ea{Modality::audio, Matrix(4, 1, {0, 0, 0, 0})};
    auto fused = fuse_instant(ev, ea, 2);
    CHECK(fused[0] == doctest::Approx(1.5));
    CHECK(fused[1] == doctest::Approx(0.0));

    CHECK_THROWS_AS(fuse_instant(ev, ea, 0), std::invalid_argument);
    CHECK_THROWS_AS(fuse_instant(ev, ea, 5), std::invalid_argument);
}

TEST_CASE("fuse_onset subsets, fallback and errors") {
    Rng rng(21);
    auto zv = make_seq(Modality::video, 4, 2, rng);
    auto za = make_seq(Modality::audio, 4, 2, rng);

    OnsetSet all = {0, 1, 2, 3};
    auto cont = fuse_continuous(zv, za);
    auto full = fuse_onset(zv, za, all);
    for (std::size_t j = 0; j < cont.size(); ++j) {
        CHECK(std::abs(cont[j] - full[j]) <= 1e-12);
    }

    auto single = fuse_onset(zv, za, {2});
    CHECK(single == std::vector<double>{zv.values.at(2, 0), zv.values.at(2, 1),
                                        za.values.at(2, 0), za.values.at(2, 1)});

    auto two = fuse_onset(zv, za, {1, 3});
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(two[j] == doctest::Approx(
                            (zv.values.at(1, j) + zv.values.at(3, j)) / 2.0));
        CHECK(two[2 + j] == doctest::Approx(
                                (za.values.at(1, j) + za.values.at(3, j)) / 2.0));
    }

    CHECK(fuse_onset(zv, za, {}) == cont);  // documented fallback
    CHECK_THROWS_AS(fuse_onset(zv, za, {9}), std::invalid_argument);
}

TEST_CASE("fuse_unimodal zero halves and equivalences") {
    FeatureSequence v{Modality::video, Matrix(3, 2, {1, 2, 1, 2, 1, 2})};
    CHECK(fuse_unimodal(v, Modality::video) == std::vector<double>{1, 2, 0, 0});

    FeatureSequence a{Modality::audio, Matrix(3, 2, {5, 6, 5, 6, 5, 6})};
    CHECK(fuse_unimodal(a, Modality::audio) == std::vector<double>{0, 0, 5, 6});

    // definitional equivalence with a zero partner sequence
    Rng rng(17);
    auto rv = make_seq(Modality::video, 6, 3, rng);
    FeatureSequence zero{Modality::audio, Matrix(6, 3)};
    CHECK(fuse_unimodal(rv, Modality::video) == fuse_continuous(rv, zero));

    CHECK_THROWS_AS(fuse_unimodal(v, Modality::audio), std::invalid_argument);
}

TEST_CASE("forward composes encoders, fusions and heads") {
    Rng rng(33);
    ModelDims dims{3, 3, 2, 3};
    ModelParams params = init_params(dims, 4, 0, rng);
    auto vraw = make_seq(Modality::video, 8, 3, rng);
    auto araw = make_seq(Modality::audio, 8, 3, rng);
    OnsetSet onsets = {1, 5};

    // zero heads -> zero logits
    ModelParams zeroed = params;
    for (auto& h : zeroed.heads) {
        std::fill(h.weights.values().begin(), h.weights.values().end(), 0.0);
        std::fill(h.bias.begin(), h.bias.end(), 0.0);
    }
    auto zlog = forward(vraw, araw, zeroed, onsets);
    for (double v : zlog.logits.values()) CHECK(v == 0.0);

    // compositional oracle: every row equals head(fusion(encoded))
    auto out = forward(vraw, araw, params, onsets);
    CHECK_FALSE(out.onset_fallback);
    auto zv = encode(vraw, params.video_encoder);
    auto za = encode(araw, params.audio_encoder);
    std::array<std::vector<double>, kLayerCount> fused = {
        fuse_continuous(zv, za), fuse_instant(zv, za, 4), fuse_onset(zv, za, onsets),
        fuse_unimodal(zv, Modality::video), fuse_unimodal(za, Modality::audio)};
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        auto expect = params.heads[i].apply(fused[i]);
        for (std::size_t c = 0; c < dims.classes; ++c) {
            CHECK(out.logits.at(i, c) == doctest::Approx(expect[c]).epsilon(1e-12));
        }
    }

    // head weights that route one fused coordinate straight through
    ModelParams router = zeroed;
    router.heads[0].weights.at(1, 2) = 1.0;  // logit[0][1] = fused_cont[2]
    auto rlog = forward(vraw, araw, router, onsets);
    CHECK(rlog.logits.at(0, 1) ==
          doctest::Approx(fuse_continuous(zv, za)[2]).epsilon(1e-12));

    CHECK(forward(vraw, araw, params, {}).onset_fallback);
}

TEST_CASE("permuting time steps leaves order-free fusions unchanged") {
    Rng rng(55);
    auto zv = make_seq(Modality::video, 6, 3, rng);
    auto za = make_seq(Modality::audio, 6, 3, rng);
    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    FeatureSequence pv{Modality::video, Matrix(6, 3)}, pa{Modality::audio, Matrix(6, 3)};
    for (std::size_t t = 0; t < 6; ++t) {
        for (std::size_t j = 0; j < 3; ++j) {
            pv.values.at(t, j) = zv.values.at(perm[t], j);
            pa.values.at(t, j) = za.values.at(perm[t], j);
        }
    }
    auto a = fuse_continuous(zv, za);
    auto b = fuse_continuous(pv, pa);
    for (std::size_t j = 0; j < a.size(); ++j) {
        CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-9));
    }
    // instant pooling is permutation-invariant too: the same rows win
    auto ia = fuse_instant(zv, za, 2);
    auto ib = fuse_instant(pv, pa, 2);
    for (std::size_t j = 0; j < ia.size(); ++j) {
        CHECK(ia[j] == doctest::Approx(ib[j]).epsilon(1e-9));
    }
}

TEST_CASE("correlation is bilinear and top-k scale-invariant") {
    Rng rng(77);
    auto zv = make_seq(Modality::video, 9, 4, rng);
    auto za = make_seq(Modality::audio, 9, 4, rng);
    auto s = correlation_scores(zv, za);

    FeatureSequence scaled = za;
    for (double& v : scaled.values.values()) v *= 3.5;
    auto s2 = correlation_scores(zv, scaled);
    for (std::size_t t = 0; t < 9; ++t) {
        CHECK(s2[t] == doctest::Approx(3.5 * s[t]).epsilon(1e-12));
    }
    CHECK(top_k_steps(s, 4) == top_k_steps(s2, 4));
}

TEST_CASE("unimodal fusion ignores the other modality entirely") {
    Rng rng(88);
    auto zv = make_seq(Modality::video, 5, 3, rng);
    auto fused = fuse_unimodal(zv, Modality::video);
    auto again = fuse_unimodal(zv, Modality::video);
    CHECK(fused == again);  // no hidden dependence on any audio stream
    // and the audio half is exactly zero
    for (std::size_t j = 3; j < 6; ++j) CHECK(fused[j] == 0.0);
}

TEST_CASE("fused halves stay inside the convex hull of encoded rows") {
    Rng rng(99);
    auto zv = make_seq(Modality::video, 6, 2, rng);
    auto za = make_seq(Modality::audio, 6, 2, rng);
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{6}}) {
        auto fused = fuse_instant(zv, za, k);
        for (std::size_t j = 0; j < 2; ++j) {
            double lo = 1e18, hi = -1e18;
            for (std::size_t t = 0; t < 6; ++t) {
                lo = std::min(lo, zv.values.at(t, j));
                hi = std::max(hi, zv.values.at(t, j));
            }
            CHECK(fused[j] >= lo - 1e-12);
            CHECK(fused[j] <= hi + 1e-12);
        }
    }
}
