#include "avfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

namespace avfuse {

namespace {

// Planted-row composition: rows are s*r_t + q*u_c where r_t is a per-step
// unit carrier shared by both modalities and u_c the class prototype. The
// carrier dominates the correlation score while the class term carries the
// label; s^2 is correlation_strength.
constexpr double kClassAmp = 3.0;
// Scale (relative to noise_std) of the constant per-sample background in the
// signal-free modality of unimodal samples. Survives temporal pooling, which
// is what separates the unimodal layers from the mixed ones.
constexpr double kAbsentAmbientScale = 10.0 / 3.0;

// Continuous-kind amplitude; both halves of the fused vector carry signal,
// so 1/sqrt(2) keeps the fused norm in line with the unimodal layers.
const double kContAmp = 1.0 / std::sqrt(2.0);
// Scale (relative to noise_std) of the constant per-sample background in the
// signal-free modality of unimodal samples. Survives temporal pooling, which
// is what separates the unimodal layers from the mixed ones.

void fill_noise(Matrix& m, double std, Rng& rng) {
    for (double& v : m.values()) v = std * rng.normal();
}

void add_row_broadcast(Matrix& m, std::span<const double> row, double scale) {
    for (std::size_t t = 0; t < m.rows(); ++t) {
        auto r = m.row(t);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += scale * row[j];
    }
}

std::vector<double> random_unit(std::size_t d, Rng& rng) {
    std::vector<double> v(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

// ambient: one constant offset per modality, held across all time steps
void add_ambient(Matrix& m, double std, Rng& rng) {
    std::vector<double> offset(m.cols());
    for (double& x : offset) x = std * rng.normal();
    add_row_broadcast(m, offset, 1.0);
}

void plant_rows(Matrix& video, Matrix& audio,
                const std::vector<std::size_t>& steps, std::size_t label,
                const ClassPrototypes& protos, double s, Rng& rng) {
    auto uv = protos.video.row(label);
    auto ua = protos.audio.row(label);
    for (std::size_t t : steps) {
        auto carrier = random_unit(video.cols(), rng);
        for (std::size_t j = 0; j < video.cols(); ++j) {
            video.at(t, j) = s * carrier[j] + kClassAmp * uv[j];
            audio.at(t, j) = s * carrier[j] + kClassAmp * ua[j];
        }
    }
}

Matrix orthonormal_rows(std::size_t n, std::size_t d, Rng& rng) {
    if (n > d) {
        throw std::invalid_argument("synth: class count exceeds feature width");
    }
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        while (true) {
            auto v = random_unit(d, rng);
            // Gram-Schmidt against earlier rows
            for (std::size_t p = 0; p < i; ++p) {
                double proj = dot(std::span<const double>(v), m.row(p));
                auto prev = m.row(p);
                for (std::size_t j = 0; j < d; ++j) v[j] -= proj * prev[j];
            }
            double norm = std::sqrt(dot(std::span<const double>(v), std::span<const double>(v)));
            if (norm > 1e-8) {
                for (std::size_t j = 0; j < d; ++j) m.at(i, j) = v[j] / norm;
                break;
            }
        }
    }
    return m;
}

void validate(const SynthConfig& cfg) {
    if (cfg.T == 0 || cfg.classes == 0) {
        throw std::invalid_argument("synth: T and class count must be positive");
    }
    if (cfg.planted_instants > cfg.T) {
        throw std::invalid_argument("synth: planted_instants exceeds T");
    }
    if (cfg.onset_period < 2) {
        throw std::invalid_argument("synth: onset_period must be >= 2");
    }
    if (cfg.noise_std < 0.0) {
        throw std::invalid_argument("synth: noise_std must be >= 0");
    }
    if (cfg.d_in_video != cfg.d_in_audio) {
        // planted rows share one carrier across modalities, so the raw
        // widths must agree
        throw std::invalid_argument("synth: modality widths must match");
    }
}

std::vector<std::size_t> draw_distinct_steps(std::size_t count, std::size_t T,
                                             Rng& rng) {
    std::vector<std::size_t> all(T);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + rng.next_u64() % (T - i);
        std::swap(all[i], all[j]);
    }
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

// Adds one event's signal content on top of existing (noisy) streams.
// Returns the modalities the event claims (video, audio).
std::pair<bool, bool> apply_event(Matrix& video, Matrix& audio, EventSpec& spec,
                                  const SynthConfig& cfg,
                                  const ClassPrototypes& protos, Rng& rng,
                                  OnsetSet& onsets) {
    const double s = std::sqrt(cfg.correlation_strength);
    switch (spec.kind) {
        case LayerKind::continuous:
            add_row_broadcast(video, protos.video.row(spec.label), kContAmp);
            add_row_broadcast(audio, protos.audio.row(spec.label), kContAmp);
            return {true, true};
        case LayerKind::instant: {
            if (spec.planted_steps.empty()) {
                spec.planted_steps =
                    draw_distinct_steps(cfg.planted_instants, cfg.T, rng);
            }
            add_ambient(video, cfg.noise_std, rng);
            add_ambient(audio, cfg.noise_std, rng);
            plant_rows(video, audio, spec.planted_steps, spec.label, protos, s, rng);
            return {true, true};
        }
        case LayerKind::onset: {
            if (spec.planted_steps.empty()) {
                for (std::size_t t = 0; t < cfg.T; t += cfg.onset_period) {
                    spec.planted_steps.push_back(t);
                }
            }
            add_ambient(video, cfg.noise_std, rng);
            add_ambient(audio, cfg.noise_std, rng);
            plant_rows(video, audio, spec.planted_steps, spec.label, protos, s, rng);
            onsets = spec.planted_steps;
            return {true, true};
        }
        case LayerKind::visual:
            add_row_broadcast(video, protos.video.row(spec.label), 1.0);
            return {true, false};
        case LayerKind::audio:
            add_row_broadcast(audio, protos.audio.row(spec.label), 1.0);
            return {false, true};
    }
    throw std::invalid_argument("synth: unknown event kind");
}

Sample finish_sample(Matrix video, Matrix audio, const EventSpec& spec,
                     OnsetSet onsets, std::string id) {
    Sample smp;
    smp.id = std::move(id);
    smp.category = std::string("cat-") + std::to_string(spec.label);
    smp.video_raw = {Modality::video, std::move(video)};
    smp.audio_raw = {Modality::audio, std::move(audio)};
    smp.label = spec.label;
    smp.onsets = std::move(onsets);
    smp.event_kind = layer_name(spec.kind);
    smp.planted_steps = spec.planted_steps;
    return smp;
}

}  // namespace

ClassPrototypes make_prototypes(const SynthConfig& cfg) {
    validate(cfg);
    Rng rv(Rng::derive(cfg.seed, Rng::hash_string("prototypes-video")));
    Rng ra(Rng::derive(cfg.seed, Rng::hash_string("prototypes-audio")));
    return ClassPrototypes{orthonormal_rows(cfg.classes, cfg.d_in_video, rv),
                           orthonormal_rows(cfg.classes, cfg.d_in_audio, ra)};
}

GeneratedSample gen_event_pair(EventSpec spec, const SynthConfig& cfg,
                               const ClassPrototypes& protos, std::uint64_t seed) {
    validate(cfg);
    if (spec.label >= cfg.classes) {
        throw std::invalid_argument("gen_event_pair: label out of range");
    }
    for (std::size_t t : spec.planted_steps) {
        if (t >= cfg.T) {
            throw std::invalid_argument("gen_event_pair: planted step out of range");
        }
    }
    Rng rng(seed);
    Matrix video(cfg.T, cfg.d_in_video), audio(cfg.T, cfg.d_in_audio);
    fill_noise(video, cfg.noise_std, rng);
    fill_noise(audio, cfg.noise_std, rng);

    OnsetSet onsets;
    auto [claims_v, claims_a] = apply_event(video, audio, spec, cfg, protos, rng, onsets);
    // signal-free modality of a unimodal event carries a constant background
    if (!claims_a) add_ambient(audio, kAbsentAmbientScale * cfg.noise_std, rng);
    if (!claims_v) add_ambient(video, kAbsentAmbientScale * cfg.noise_std, rng);

    return {finish_sample(std::move(video), std::move(audio), spec,
                          std::move(onsets), "sample"),
            spec};
}

GeneratedSample gen_multi_event_pair(EventSpec first, EventSpec second,
                                     const SynthConfig& cfg,
                                     const ClassPrototypes& protos,
                                     std::uint64_t seed) {
    validate(cfg);
    if (first.label == second.label) {
        throw std::invalid_argument("gen_multi_event_pair: classes must differ");
    }
    std::set<std::size_t> steps(first.planted_steps.begin(), first.planted_steps.end());
    for (std::size_t t : second.planted_steps) {
        if (!steps.insert(t).second) {
            throw std::invalid_argument(
                "gen_multi_event_pair: overlapping planted steps");
        }
    }
    Rng rng(seed);
    Matrix video(cfg.T, cfg.d_in_video), audio(cfg.T, cfg.d_in_audio);
    fill_noise(video, cfg.noise_std, rng);
    fill_noise(audio, cfg.noise_std, rng);

    OnsetSet onsets;
    apply_event(video, audio, first, cfg, protos, rng, onsets);
    apply_event(video, audio, second, cfg, protos, rng, onsets);
    std::sort(onsets.begin(), onsets.end());

    Sample smp = finish_sample(std::move(video), std::move(audio), first,
                               std::move(onsets), "multi");
    smp.multi_labels = {first.label, second.label};
    smp.event_kind = std::string(layer_name(first.kind)) + "+" + layer_name(second.kind);
    return {std::move(smp), first};
}

PcmClip gen_click_pcm(const std::vector<std::size_t>& click_steps,
                      const SynthConfig& cfg) {
    validate(cfg);
    std::vector<double> samples(kClipSamples, 0.0);
    const std::size_t samples_per_step = kClipSamples / cfg.T;
    const int click_len = kSampleRate / 1000;  // 1 ms
    for (std::size_t t : click_steps) {
        if (t >= cfg.T) {
            throw std::invalid_argument("gen_click_pcm: step out of range");
        }
        const std::size_t start = t * samples_per_step;
        for (int i = 0; i < click_len && start + i < samples.size(); ++i) {
            samples[start + i] =
                0.9 * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / click_len));
        }
    }
    return PcmClip{std::move(samples)};
}

SynthDataset gen_dataset(const SynthConfig& cfg, const KindAllocation& alloc,
                         const std::array<std::size_t, 3>& split_ratio) {
    validate(cfg);
    if (std::accumulate(alloc.begin(), alloc.end(), std::size_t{0}) != cfg.classes) {
        throw std::invalid_argument("gen_dataset: allocation must sum to class count");
    }
    const std::size_t ratio_sum = split_ratio[0] + split_ratio[1] + split_ratio[2];
    if (ratio_sum == 0 || cfg.samples_per_class % ratio_sum != 0) {
        throw std::invalid_argument(
            "gen_dataset: samples_per_class must be divisible by the split ratio sum");
    }
    const std::size_t unit = cfg.samples_per_class / ratio_sum;
    const std::array<std::size_t, 3> per_split = {split_ratio[0] * unit,
                                                  split_ratio[1] * unit,
                                                  split_ratio[2] * unit};

    SynthDataset ds;
    ds.kind_of_class.reserve(cfg.classes);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        for (std::size_t j = 0; j < alloc[i]; ++j) {
            ds.kind_of_class.push_back(kLayerOrder[i]);
        }
    }
    const auto protos = make_prototypes(cfg);
    const std::array<const char*, 3> split_names = {"train", "val", "test"};
    std::array<std::vector<Sample>*, 3> split_out = {&ds.train, &ds.val, &ds.test};
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        for (std::size_t s = 0; s < 3; ++s) {
            for (std::size_t i = 0; i < per_split[s]; ++i) {
                std::string id = std::string(split_names[s]) + "-c" +
                                 std::to_string(c) + "-" + std::to_string(i);
                EventSpec spec{ds.kind_of_class[c], c, {}};
                auto gen = gen_event_pair(
                    spec, cfg, protos, Rng::derive(cfg.seed, Rng::hash_string(id)));
                gen.sample.id = id;
                split_out[s]->push_back(std::move(gen.sample));
            }
        }
    }
    return ds;
}

}  // namespace avfuse
