#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avfuse/audio_dsp.hpp"
#include "avfuse/training.hpp"

namespace avfuse {

// Generator knobs. sqrt(correlation_strength) is the carrier amplitude of
// planted instant/onset rows, which dominates their raw correlation scores.
struct SynthConfig {
    std::size_t T = 100;
    std::size_t d_in_video = 16;
    std::size_t d_in_audio = 16;
    std::size_t classes = 10;
    std::size_t samples_per_class = 70;
    double noise_std = 0.3;
    double correlation_strength = 36.0;
    std::size_t planted_instants = 12;
    std::size_t onset_period = 10;
    std::uint64_t seed = 1;
};

struct EventSpec {
    LayerKind kind = LayerKind::continuous;
    std::size_t label = 0;
    std::vector<std::size_t> planted_steps;  // filled by the generator
};

// Class prototype directions: orthonormal rows, one per class, per modality.
// Shared by every sample of a dataset (derived from the dataset seed).
struct ClassPrototypes {
    Matrix video;  // C x d_in_video
    Matrix audio;  // C x d_in_audio
};

ClassPrototypes make_prototypes(const SynthConfig& cfg);

// One labeled pair with the event structure of `spec` planted:
//   continuous: both modalities carry the class direction at every step
//   instant:    strong correlated rows at planted random steps only
//   onset:      the same at periodic steps {0, p, 2p, ...}, onsets recorded
//   visual:     class signal in video only, structured noise in audio
//   audio:      the converse
// Pure function of (spec, cfg, prototypes, seed); planted steps are written
// back into the returned spec.
struct GeneratedSample {
    Sample sample;
    EventSpec spec;
};

GeneratedSample gen_event_pair(EventSpec spec, const SynthConfig& cfg,
                               const ClassPrototypes& protos, std::uint64_t seed);

// Superimposes both events' signals on one shared noise bed. The specs must
// carry distinct classes and non-overlapping planted steps; multi_labels is
// the pair of classes and label is the first.
GeneratedSample gen_multi_event_pair(EventSpec first, EventSpec second,
                                     const SynthConfig& cfg,
                                     const ClassPrototypes& protos,
                                     std::uint64_t seed);

// 10 s of silence with a 1 ms raised-cosine click (amplitude 0.9) at the
// start of each step (step t -> sample t * 1600).
PcmClip gen_click_pcm(const std::vector<std::size_t>& click_steps,
                      const SynthConfig& cfg);

// classes per kind, in layer order; must sum to cfg.classes
using KindAllocation = std::array<std::size_t, kLayerCount>;

struct SynthDataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
    std::vector<LayerKind> kind_of_class;
};

// Balanced dataset with recorded ground truth; split ratio divides
// samples_per_class (remainder to train). Deterministic per seed.
SynthDataset gen_dataset(const SynthConfig& cfg, const KindAllocation& alloc,
                         const std::array<std::size_t, 3>& split_ratio);

}  // namespace avfuse
