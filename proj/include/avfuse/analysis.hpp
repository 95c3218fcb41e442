#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "avfuse/fusion.hpp"

namespace avfuse {

// One accepted label of the multi-label prediction set.
struct AcceptedLabel {
    std::size_t label = 0;
    LayerKind source = LayerKind::continuous;
    double confidence = 0.0;  // softmax of the source layer at its prediction
};

// Non-empty by construction: the layer maximizing its own predicted logit
// always passes the cross-layer filter. 1 <= size <= 5.
struct PredictionSet {
    std::vector<AcceptedLabel> labels;  // sorted by label, deduplicated

    bool contains(std::size_t label) const;
    std::vector<std::size_t> label_set() const;
};

// Modal per-layer prediction; count ties resolve to the prediction of the
// most confident layer (softmax at its own argmax), then LayerKind order.
std::size_t majority_vote(const LayerOutputs& outputs);

// Cross-layer dominance filter: layer i's prediction p_i is kept iff its
// logit at p_i is maximal over all layers' logits at p_i (ties toward lower
// layer index).
PredictionSet multilabel_set(const LayerOutputs& outputs);

// Per-sample F1 = 2|P ∩ G| / (|P| + |G|); truth must be non-empty.
double f1_multilabel(const std::vector<std::size_t>& predicted,
                     const std::vector<std::size_t>& truth);

// softmax(O_i)[y] per layer.
std::array<double, kLayerCount> modality_confidences(const LayerOutputs& outputs,
                                                     std::size_t y);

// argmax of modality_confidences, ties toward lower layer index.
LayerKind winning_layer(const LayerOutputs& outputs, std::size_t y);

struct SampleBias {
    std::string id;
    std::string category;
    LayerKind winner = LayerKind::continuous;
};

struct BiasReport {
    std::map<std::string, LayerKind> category_assignment;   // modal winner
    std::array<std::size_t, kLayerCount> dataset_counts{};  // categories per layer
    std::vector<SampleBias> per_sample;
};

BiasReport dataset_bias(const std::vector<SampleBias>& samples);

// Correctness bits of the three audio-visual layers per sample, in
// (continuous, instant, onset) order.
struct LayerUniqueness {
    std::array<std::size_t, 3> uniquely_correct{};  // cont, inst, onset
    std::size_t av_over_continuous = 0;             // (inst or onset) and !cont
};

LayerUniqueness layer_uniqueness(const std::vector<std::array<bool, 3>>& bits);

// Per-time-step H' x W' x D visual activation grid.
struct SpatialFeatureMap {
    std::size_t steps = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t depth = 0;
    std::vector<double> data;  // t-major, then row, col, channel

    double at(std::size_t t, std::size_t y, std::size_t x, std::size_t k) const {
        return data[((t * height + y) * width + x) * depth + k];
    }
    double& at(std::size_t t, std::size_t y, std::size_t x, std::size_t k) {
        return data[((t * height + y) * width + x) * depth + k];
    }
};

struct LocalizationMap {
    std::vector<Matrix> per_step;  // H' x W' response per time step
    Matrix time_average;           // mean over a centered window
};

// alpha_t[h,w] = dot(grid cell feature, audio embedding at t). The time
// average covers `window` steps centered at T/2, clamped to the clip.
LocalizationMap localization_map(const SpatialFeatureMap& vmap,
                                 const FeatureSequence& za,
                                 std::size_t window = 30);

// Rectangle in grid coordinates, half-open: rows [r0, r1), cols [c0, c1).
struct GridBox {
    std::size_t r0 = 0, c0 = 0, r1 = 0, c1 = 0;
};

struct LocalizationScore {
    double iou_at_half = 0.0;  // threshold 0.5 * max
    double auc = 0.0;          // mean IoU over tau in {0.05, ..., 0.95}
};

// Binarizes at tau * max(map) (inclusive) and intersects with the box.
LocalizationScore localization_eval(const Matrix& map, const GridBox& box);

}  // namespace avfuse
