#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "avfuse/audio_dsp.hpp"
#include "avfuse/core_math.hpp"

namespace avfuse {

enum class Modality { video, audio };

// The five event-specific layers, in the fixed order used by every
// per-layer array and logit row.
enum class LayerKind { continuous = 0, instant, onset, visual, audio };
inline constexpr std::size_t kLayerCount = 5;
inline constexpr std::array<LayerKind, kLayerCount> kLayerOrder = {
    LayerKind::continuous, LayerKind::instant, LayerKind::onset,
    LayerKind::visual, LayerKind::audio};
const char* layer_name(LayerKind k);

// One modality's per-time-step embedding sequence (T x D).
struct FeatureSequence {
    Modality modality = Modality::video;
    Matrix values;  // T rows, D cols

    std::size_t steps() const { return values.rows(); }
    std::size_t width() const { return values.cols(); }
};

// y = W x + b with W of shape (out x in).
struct AffineMap {
    Matrix weights;
    std::vector<double> bias;

    std::size_t in_width() const { return weights.cols(); }
    std::size_t out_width() const { return weights.rows(); }
    std::vector<double> apply(std::span<const double> x) const;
};

// Per-modality encoder: affine D_in -> D, or D_in -> H (ReLU) -> D when a
// hidden layer is configured. Both modalities share the output width D.
struct EncoderParams {
    AffineMap layer1;
    std::optional<AffineMap> layer2;  // present => layer1 output is rectified

    std::size_t in_width() const { return layer1.in_width(); }
    std::size_t out_width() const {
        return layer2 ? layer2->out_width() : layer1.out_width();
    }
};

struct ModelDims {
    std::size_t d_in_video = 0;
    std::size_t d_in_audio = 0;
    std::size_t d_embed = 0;
    std::size_t classes = 0;

    bool operator==(const ModelDims&) const = default;
};

struct ModelParams {
    EncoderParams video_encoder;
    EncoderParams audio_encoder;
    std::array<AffineMap, kLayerCount> heads;  // each 2D -> C
    ModelDims dims;
    std::size_t k = 10;  // instant-layer pool size
};

// 5 x C logits, row order per kLayerOrder; onset_fallback marks samples
// whose onset set was empty (onset row pooled as continuous).
struct LayerOutputs {
    Matrix logits;
    bool onset_fallback = false;

    std::span<const double> row(LayerKind kind) const {
        return logits.row(static_cast<std::size_t>(kind));
    }
};

// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases.
ModelParams init_params(const ModelDims& dims, std::size_t k,
                        std::size_t encoder_hidden, Rng& rng);

FeatureSequence encode(const FeatureSequence& raw, const EncoderParams& params);

// S[t] = dot(video row t, audio row t); sequences must share T and D.
std::vector<double> correlation_scores(const FeatureSequence& zv,
                                       const FeatureSequence& za);

// Indices of the k largest scores, ties broken toward lower time index,
// result sorted by time index.
std::vector<std::size_t> top_k_steps(const std::vector<double>& scores,
                                     std::size_t k);

// All fusions return a fused vector of width 2D, video half first.
std::vector<double> fuse_continuous(const FeatureSequence& zv,
                                    const FeatureSequence& za);
std::vector<double> fuse_instant(const FeatureSequence& zv,
                                 const FeatureSequence& za, std::size_t k);
// Empty onset set falls back to continuous pooling (the mean over an empty
// set is undefined); forward() flags such samples.
std::vector<double> fuse_onset(const FeatureSequence& zv,
                               const FeatureSequence& za, const OnsetSet& onsets);
std::vector<double> fuse_unimodal(const FeatureSequence& z, Modality keep);

// Encodes both modalities once, applies the five fusions and heads.
LayerOutputs forward(const FeatureSequence& video_raw,
                     const FeatureSequence& audio_raw,
                     const ModelParams& params, const OnsetSet& onsets);

}  // namespace avfuse
