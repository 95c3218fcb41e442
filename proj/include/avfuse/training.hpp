#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avfuse/fusion.hpp"

namespace avfuse {

// One labeled audio-visual example. `onsets` is empty when no onsets are
// known (the onset layer then falls back to continuous pooling).
struct Sample {
    std::string id;
    std::string category;
    FeatureSequence video_raw;
    FeatureSequence audio_raw;
    std::size_t label = 0;
    std::vector<std::size_t> multi_labels;  // contains label when present
    OnsetSet onsets;
    std::string pcm_path;
    // synthetic ground truth, carried through manifests for verification
    std::string event_kind;
    std::vector<std::size_t> planted_steps;
};

struct TrainConfig {
    double lr0 = 1e-2;
    double lr_decay = 0.1;
    int patience = 3;
    double momentum = 0.9;
    int epochs = 100;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t k = 10;
    std::array<double, kLayerCount> loss_weights = {1, 1, 1, 1, 1};
    std::size_t d_embed = 16;
    std::size_t encoder_hidden = 0;  // 0 = plain affine encoders
};

struct EpochRecord {
    int epoch = 0;
    std::array<double, kLayerCount> train_loss{};
    std::array<double, kLayerCount> val_accuracy{};
    double val_voted_accuracy = 0.0;
    double lr = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

// -log softmax(logits)[y] via the log-sum-exp trick.
double cross_entropy_loss(std::span<const double> logits, std::size_t y);

// Weighted sum of per-layer cross entropies.
double multi_task_loss(const LayerOutputs& outputs, std::size_t y,
                       const std::array<double, kLayerCount>& weights);

// Gradients share the ModelParams layout (weights + biases, zero-filled).
ModelParams zero_like(const ModelParams& params);

struct BatchGradients {
    ModelParams grads;
    double loss = 0.0;                                // batch-mean multi-task loss
    std::array<double, kLayerCount> layer_loss{};     // batch-mean per layer
};

// Analytic gradient of the batch-mean multi-task loss. The instant layer's
// top-k set and the onset set are treated as constants of the forward pass.
// `labels` overrides each sample's stored label (multi-label draws).
BatchGradients backward(const std::vector<const Sample*>& batch,
                        const std::vector<std::size_t>& labels,
                        const ModelParams& params,
                        const std::array<double, kLayerCount>& weights);

// velocity <- momentum * velocity + grads;  params <- params - lr * velocity
void sgd_update(ModelParams& params, const ModelParams& grads, double lr,
                double momentum, ModelParams& velocity);

// Plateau schedule on voted validation accuracy: multiply lr by lr_decay
// after `patience` consecutive epochs without improvement over the best;
// a reduction resets the counter.
class LrSchedule {
public:
    explicit LrSchedule(const TrainConfig& cfg)
        : lr_(cfg.lr0), decay_(cfg.lr_decay), patience_(cfg.patience) {}

    double lr() const { return lr_; }
    double step(double val_accuracy);

private:
    double lr_;
    double decay_;
    int patience_;
    double best_ = -1.0;
    int stale_ = 0;
};

// Flattened view of every trainable parameter, in checkpoint order; used by
// the finite-difference gradient check.
std::vector<double> flatten_params(const ModelParams& params);
void unflatten_params(std::span<const double> flat, ModelParams& params);

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

// Compares backward() against finite_diff_grad over every parameter.
// Relative error uses max(|analytic|, |numeric|, 1e-6) as the denominator so
// near-zero coordinates are compared absolutely.
GradCheckResult gradient_check(const std::vector<const Sample*>& batch,
                               const std::vector<std::size_t>& labels,
                               const ModelParams& params,
                               const std::array<double, kLayerCount>& weights,
                               double eps = 1e-5);

struct TrainResult {
    ModelParams params;
    TrainLog log;
};

// Deterministic for a fixed config: fixed init, fixed shuffle order, and a
// fresh per-epoch uniform draw from multi_labels for multi-label samples.
TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg);

}  // namespace avfuse
