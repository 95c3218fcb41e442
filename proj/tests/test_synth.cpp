#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "avfuse/fusion.hpp"
#include "avfuse/synth.hpp"

using namespace avfuse;

namespace {

SynthConfig small_cfg() {
    SynthConfig cfg;
    cfg.T = 20;
    cfg.d_in_video = 8;
    cfg.d_in_audio = 8;
    cfg.classes = 4;
    cfg.planted_instants = 4;
    cfg.onset_period = 5;
    cfg.seed = 99;
    return cfg;
}

}  // namespace

TEST_CASE("prototypes are orthonormal rows") {
    auto cfg = small_cfg();
    auto protos = make_prototypes(cfg);
    for (const Matrix* m : {&protos.video, &protos.audio}) {
        REQUIRE(m->rows() == cfg.classes);
        for (std::size_t i = 0; i < cfg.classes; ++i) {
            for (std::size_t j = 0; j < cfg.classes; ++j) {
                double d = dot(m->row(i), m->row(j));
                CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
            }
        }
    }
    SynthConfig too_many = cfg;
    too_many.classes = 9;  // exceeds feature width
    CHECK_THROWS_AS(make_prototypes(too_many), std::invalid_argument);
}

TEST_CASE("noise-free instant sample: planted step is the only nonzero score") {
    auto cfg = small_cfg();
    cfg.noise_std = 0.0;
    cfg.planted_instants = 1;
    auto protos = make_prototypes(cfg);
    auto gen = gen_event_pair({LayerKind::instant, 2, {}}, cfg, protos, 7);
    REQUIRE(gen.spec.planted_steps.size() == 1);
    const std::size_t planted = gen.spec.planted_steps[0];
    auto scores = correlation_scores(gen.sample.video_raw, gen.sample.audio_raw);
    for (std::size_t t = 0; t < cfg.T; ++t) {
        if (t == planted) {
            CHECK(scores[t] > 0.0);
        } else {
            CHECK(scores[t] == 0.0);
        }
    }
    CHECK(argmax(scores) == planted);
}

TEST_CASE("noise-free visual sample recovers the prototype exactly") {
    auto cfg = small_cfg();
    cfg.noise_std = 0.0;
    auto protos = make_prototypes(cfg);
    auto gen = gen_event_pair({LayerKind::visual, 1, {}}, cfg, protos, 3);
    for (double v : gen.sample.audio_raw.values.values()) CHECK(v == 0.0);
    auto fused = fuse_unimodal(gen.sample.video_raw, Modality::video);
    for (std::size_t j = 0; j < cfg.d_in_video; ++j) {
        CHECK(fused[j] == doctest::Approx(protos.video.at(1, j)).epsilon(1e-9));
        CHECK(fused[cfg.d_in_video + j] == 0.0);
    }
}

TEST_CASE("generators are pure functions of spec, config and seed") {
    auto cfg = small_cfg();
    auto protos = make_prototypes(cfg);
    auto a = gen_event_pair({LayerKind::onset, 3, {}}, cfg, protos, 42);
    auto b = gen_event_pair({LayerKind::onset, 3, {}}, cfg, protos, 42);
    CHECK(a.sample.video_raw.values == b.sample.video_raw.values);
    CHECK(a.sample.audio_raw.values == b.sample.audio_raw.values);
    CHECK(a.sample.onsets == b.sample.onsets);
    auto c = gen_event_pair({LayerKind::onset, 3, {}}, cfg, protos, 43);
    CHECK(a.sample.video_raw.values != c.sample.video_raw.values);
}

TEST_CASE("onset-kind samples record the periodic planted steps") {
    auto cfg = small_cfg();
    auto protos = make_prototypes(cfg);
    auto gen = gen_event_pair({LayerKind::onset, 0, {}}, cfg, protos, 5);
    CHECK(gen.spec.planted_steps == std::vector<std::size_t>{0, 5, 10, 15});
    CHECK(gen.sample.onsets == OnsetSet{0, 5, 10, 15});
    CHECK(gen.sample.event_kind == "onset");
}

TEST_CASE("instant planted steps dominate the correlation scores under low noise") {
    auto cfg = small_cfg();
    cfg.T = 100;
    cfg.planted_instants = 8;
    for (double noise : {0.0, 0.1, 0.3}) {
        cfg.noise_std = noise;
        auto protos = make_prototypes(cfg);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto gen = gen_event_pair({LayerKind::instant, 1, {}}, cfg, protos, seed);
            auto scores =
                correlation_scores(gen.sample.video_raw, gen.sample.audio_raw);
            auto top = top_k_steps(scores, cfg.planted_instants);
            std::set<std::size_t> expect(gen.spec.planted_steps.begin(),
                                         gen.spec.planted_steps.end());
            CHECK(std::set<std::size_t>(top.begin(), top.end()) == expect);
        }
    }
}

TEST_CASE("wrong-modality nearest-centroid classifier is at chance on unimodal data") {
    auto cfg = small_cfg();
    cfg.T = 50;
    auto protos = make_prototypes(cfg);
    // audio-kind samples: classify from the video stream alone via the
    // video prototypes; accuracy must sit at chance (+-10 points)
    std::size_t hits = 0, total = 0;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        for (std::uint64_t i = 0; i < 25; ++i) {
            auto gen = gen_event_pair({LayerKind::audio, c, {}}, cfg, protos,
                                      Rng::derive(77, c * 100 + i));
            auto fused = fuse_unimodal(gen.sample.video_raw, Modality::video);
            std::vector<double> sims(cfg.classes);
            for (std::size_t k = 0; k < cfg.classes; ++k) {
                sims[k] = dot(std::span<const double>(fused).subspan(0, cfg.d_in_video),
                              protos.video.row(k));
            }
            hits += (argmax(sims) == c);
            ++total;
        }
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(total);
    CHECK(acc <= 1.0 / cfg.classes + 0.10);
}

TEST_CASE("multi-event pair semantics") {
    auto cfg = small_cfg();
    auto protos = make_prototypes(cfg);
    auto gen = gen_multi_event_pair({LayerKind::visual, 0, {}},
                                    {LayerKind::audio, 2, {}}, cfg, protos, 9);
    CHECK(gen.sample.multi_labels == std::vector<std::size_t>{0, 2});
    CHECK(gen.sample.label == 0);

    // both modalities now carry class signal: pooled means align with both
    auto vf = fuse_unimodal(gen.sample.video_raw, Modality::video);
    auto af = fuse_unimodal(gen.sample.audio_raw, Modality::audio);
    double v_sim = dot(std::span<const double>(vf).subspan(0, 8), protos.video.row(0));
    double a_sim = dot(std::span<const double>(af).subspan(8, 8), protos.audio.row(2));
    CHECK(v_sim > 0.6);
    CHECK(a_sim > 0.6);

    CHECK_THROWS_AS(gen_multi_event_pair({LayerKind::visual, 1, {}},
                                         {LayerKind::audio, 1, {}}, cfg, protos, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(gen_multi_event_pair({LayerKind::instant, 0, {1, 2}},
                                         {LayerKind::instant, 1, {2, 3}}, cfg,
                                         protos, 1),
                    std::invalid_argument);
}

TEST_CASE("disjoint instant events put maxima at both planted sets") {
    auto cfg = small_cfg();
    cfg.T = 40;
    cfg.noise_std = 0.05;
    cfg.planted_instants = 3;
    auto protos = make_prototypes(cfg);
    auto gen = gen_multi_event_pair({LayerKind::instant, 0, {2, 10, 20}},
                                    {LayerKind::instant, 1, {5, 15, 30}}, cfg,
                                    protos, 4);
    auto scores = correlation_scores(gen.sample.video_raw, gen.sample.audio_raw);
    auto top = top_k_steps(scores, 6);
    CHECK(std::set<std::size_t>(top.begin(), top.end()) ==
          std::set<std::size_t>{2, 5, 10, 15, 20, 30});
}

TEST_CASE("click pcm construction") {
    SynthConfig cfg;
    auto single = gen_click_pcm({0}, cfg);
    CHECK(single.samples[8] > 0.8);  // click peak near its center
    double tail = 0.0;
    for (std::size_t i = 2000; i < single.samples.size(); ++i) {
        tail += std::abs(single.samples[i]);
    }
    CHECK(tail == 0.0);

    auto empty = gen_click_pcm({}, cfg);
    for (double v : empty.samples) CHECK(v == 0.0);
    CHECK(detect_onsets(empty, cfg.T).empty());

    CHECK_THROWS_AS(gen_click_pcm({500}, cfg), std::invalid_argument);
}

TEST_CASE("gen_dataset balance, splits and determinism") {
    auto cfg = small_cfg();
    cfg.classes = 4;
    cfg.samples_per_class = 20;
    auto ds = gen_dataset(cfg, {1, 1, 1, 0, 1}, {8, 1, 1});
    CHECK(ds.train.size() == 4 * 16);
    CHECK(ds.val.size() == 4 * 2);
    CHECK(ds.test.size() == 4 * 2);
    CHECK(ds.kind_of_class.size() == 4);
    CHECK(ds.kind_of_class[0] == LayerKind::continuous);
    CHECK(ds.kind_of_class[3] == LayerKind::audio);

    // per-class balance in each split
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
        std::map<std::size_t, int> counts;
        for (const auto& s : *split) ++counts[s.label];
        for (const auto& [label, count] : counts) {
            CHECK(count == static_cast<int>(split->size() / 4));
        }
    }

    auto again = gen_dataset(cfg, {1, 1, 1, 0, 1}, {8, 1, 1});
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(ds.train[i].video_raw.values == again.train[i].video_raw.values);
    }

    CHECK_THROWS_AS(gen_dataset(cfg, {1, 1, 1, 1, 1}, {8, 1, 1}),
                    std::invalid_argument);  // allocation sums to 5, not 4
    CHECK_THROWS_AS(gen_dataset(cfg, {1, 1, 1, 0, 1}, {7, 1, 1}),
                    std::invalid_argument);  // 20 not divisible by 9
}

TEST_CASE("generator rejects inconsistent specs") {
    auto cfg = small_cfg();
    auto protos = make_prototypes(cfg);
    CHECK_THROWS_AS(gen_event_pair({LayerKind::instant, 99, {}}, cfg, protos, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(gen_event_pair({LayerKind::instant, 0, {999}}, cfg, protos, 1),
                    std::invalid_argument);
    SynthConfig widths = cfg;
    widths.d_in_audio = 6;
    CHECK_THROWS_AS(make_prototypes(widths), std::invalid_argument);
}
