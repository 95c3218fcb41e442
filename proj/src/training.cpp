#include "avfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "avfuse/analysis.hpp"

namespace avfuse {

double cross_entropy_loss(std::span<const double> logits, std::size_t y) {
    if (y >= logits.size()) {
        throw std::invalid_argument("cross_entropy_loss: label out of range");
    }
    double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - m);
    return m + std::log(sum) - logits[y];
}

double multi_task_loss(const LayerOutputs& outputs, std::size_t y,
                       const std::array<double, kLayerCount>& weights) {
    double total = 0.0;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        total += weights[i] * cross_entropy_loss(outputs.logits.row(i), y);
    }
    return total;
}

namespace {

AffineMap zero_affine(const AffineMap& like) {
    AffineMap z;
    z.weights = Matrix(like.weights.rows(), like.weights.cols());
    z.bias.assign(like.bias.size(), 0.0);
    return z;
}

EncoderParams zero_encoder(const EncoderParams& like) {
    EncoderParams z;
    z.layer1 = zero_affine(like.layer1);
    if (like.layer2) z.layer2 = zero_affine(*like.layer2);
    return z;
}

void axpy(std::span<double> y, double a, std::span<const double> x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// Backprop through one encoder given d(loss)/d(encoded rows).
void encoder_backward(const FeatureSequence& raw, const EncoderParams& enc,
                      const Matrix& dz, EncoderParams& grad) {
    const std::size_t T = raw.steps();
    if (!enc.layer2) {
        for (std::size_t t = 0; t < T; ++t) {
            auto g = dz.row(t);
            auto x = raw.values.row(t);
            for (std::size_t r = 0; r < enc.layer1.out_width(); ++r) {
                axpy(grad.layer1.weights.row(r), g[r], x);
                grad.layer1.bias[r] += g[r];
            }
        }
        return;
    }
    const auto& l1 = enc.layer1;
    const auto& l2 = *enc.layer2;
    std::vector<double> pre(l1.out_width()), h(l1.out_width()), dh(l1.out_width());
    for (std::size_t t = 0; t < T; ++t) {
        auto x = raw.values.row(t);
        pre = l1.apply(x);
        for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::max(0.0, pre[j]);
        auto g = dz.row(t);
        // layer2 grads and dh = W2^T g masked by the rectifier
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t r = 0; r < l2.out_width(); ++r) {
            axpy(grad.layer2->weights.row(r), g[r], h);
            grad.layer2->bias[r] += g[r];
            axpy(dh, g[r], l2.weights.row(r));
        }
        for (std::size_t j = 0; j < dh.size(); ++j) {
            if (pre[j] <= 0.0) dh[j] = 0.0;
        }
        for (std::size_t r = 0; r < l1.out_width(); ++r) {
            axpy(grad.layer1.weights.row(r), dh[r], x);
            grad.layer1.bias[r] += dh[r];
        }
    }
}

}  // namespace

ModelParams zero_like(const ModelParams& params) {
    ModelParams z;
    z.dims = params.dims;
    z.k = params.k;
    z.video_encoder = zero_encoder(params.video_encoder);
    z.audio_encoder = zero_encoder(params.audio_encoder);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        z.heads[i] = zero_affine(params.heads[i]);
    }
    return z;
}

BatchGradients backward(const std::vector<const Sample*>& batch,
                        const std::vector<std::size_t>& labels,
                        const ModelParams& params,
                        const std::array<double, kLayerCount>& weights) {
    if (batch.empty()) {
        throw std::invalid_argument("backward: empty batch");
    }
    if (labels.size() != batch.size()) {
        throw std::invalid_argument("backward: label count mismatch");
    }
    BatchGradients result;
    result.grads = zero_like(params);
    const std::size_t D = params.dims.d_embed;
    const std::size_t C = params.dims.classes;

    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Sample& smp = *batch[s];
        const std::size_t y = labels[s];
        FeatureSequence zv = encode(smp.video_raw, params.video_encoder);
        FeatureSequence za = encode(smp.audio_raw, params.audio_encoder);
        const std::size_t T = zv.steps();

        // pooled step sets per layer; top-k and onsets are constants here
        std::vector<std::size_t> every(T);
        std::iota(every.begin(), every.end(), std::size_t{0});
        std::array<const std::vector<std::size_t>*, kLayerCount> sel{};
        auto scores = correlation_scores(zv, za);
        auto topk = top_k_steps(scores, std::min(params.k, T));
        const std::vector<std::size_t>& onset_steps =
            smp.onsets.empty() ? every : smp.onsets;
        sel[0] = &every;
        sel[1] = &topk;
        sel[2] = &onset_steps;
        sel[3] = &every;
        sel[4] = &every;

        std::array<std::vector<double>, kLayerCount> fused;
        fused[0] = fuse_continuous(zv, za);
        fused[1] = fuse_instant(zv, za, std::min(params.k, T));
        fused[2] = fuse_onset(zv, za, smp.onsets);
        fused[3] = fuse_unimodal(zv, Modality::video);
        fused[4] = fuse_unimodal(za, Modality::audio);

        Matrix dzv(T, D), dza(T, D);
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            auto logits = params.heads[i].apply(fused[i]);
            double ce = cross_entropy_loss(logits, y);
            result.layer_loss[i] += ce;
            result.loss += weights[i] * ce;
            if (weights[i] == 0.0) continue;

            auto p = softmax(logits);
            std::vector<double> delta(C);
            for (std::size_t j = 0; j < C; ++j) {
                delta[j] = weights[i] * (p[j] - (j == y ? 1.0 : 0.0));
            }
            auto& hg = result.grads.heads[i];
            std::vector<double> du(2 * D, 0.0);
            for (std::size_t r = 0; r < C; ++r) {
                axpy(hg.weights.row(r), delta[r], fused[i]);
                hg.bias[r] += delta[r];
                axpy(du, delta[r], params.heads[i].weights.row(r));
            }
            const bool video_active = (kLayerOrder[i] != LayerKind::audio);
            const bool audio_active = (kLayerOrder[i] != LayerKind::visual);
            const double w = 1.0 / static_cast<double>(sel[i]->size());
            for (std::size_t t : *sel[i]) {
                if (video_active) {
                    axpy(dzv.row(t), w, std::span<const double>(du).subspan(0, D));
                }
                if (audio_active) {
                    axpy(dza.row(t), w, std::span<const double>(du).subspan(D, D));
                }
            }
        }
        encoder_backward(smp.video_raw, params.video_encoder, dzv,
                         result.grads.video_encoder);
        encoder_backward(smp.audio_raw, params.audio_encoder, dza,
                         result.grads.audio_encoder);
    }

    // batch means
    const double inv = 1.0 / static_cast<double>(batch.size());
    auto scale_affine = [&](AffineMap& m) {
        for (double& x : m.weights.values()) x *= inv;
        for (double& x : m.bias) x *= inv;
    };
    scale_affine(result.grads.video_encoder.layer1);
    if (result.grads.video_encoder.layer2) scale_affine(*result.grads.video_encoder.layer2);
    scale_affine(result.grads.audio_encoder.layer1);
    if (result.grads.audio_encoder.layer2) scale_affine(*result.grads.audio_encoder.layer2);
    for (auto& h : result.grads.heads) scale_affine(h);
    result.loss *= inv;
    for (double& l : result.layer_loss) l *= inv;
    return result;
}

namespace {

void sgd_affine(AffineMap& p, const AffineMap& g, double lr, double momentum,
                AffineMap& vel) {
    if (p.weights.rows() != g.weights.rows() || p.weights.cols() != g.weights.cols() ||
        p.bias.size() != g.bias.size()) {
        throw std::invalid_argument("sgd_update: shape mismatch");
    }
    auto& pv = p.weights.values();
    const auto& gv = g.weights.values();
    auto& vv = vel.weights.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        vv[i] = momentum * vv[i] + gv[i];
        pv[i] -= lr * vv[i];
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
        vel.bias[i] = momentum * vel.bias[i] + g.bias[i];
        p.bias[i] -= lr * vel.bias[i];
    }
}

bool params_finite(const ModelParams& p) {
    auto aff_ok = [](const AffineMap& m) {
        return m.weights.all_finite() &&
               std::all_of(m.bias.begin(), m.bias.end(),
                           [](double x) { return std::isfinite(x); });
    };
    bool ok = aff_ok(p.video_encoder.layer1) && aff_ok(p.audio_encoder.layer1);
    if (p.video_encoder.layer2) ok = ok && aff_ok(*p.video_encoder.layer2);
    if (p.audio_encoder.layer2) ok = ok && aff_ok(*p.audio_encoder.layer2);
    for (const auto& h : p.heads) ok = ok && aff_ok(h);
    return ok;
}

}  // namespace

void sgd_update(ModelParams& params, const ModelParams& grads, double lr,
                double momentum, ModelParams& velocity) {
    sgd_affine(params.video_encoder.layer1, grads.video_encoder.layer1, lr,
               momentum, velocity.video_encoder.layer1);
    if (params.video_encoder.layer2) {
        sgd_affine(*params.video_encoder.layer2, *grads.video_encoder.layer2, lr,
                   momentum, *velocity.video_encoder.layer2);
    }
    sgd_affine(params.audio_encoder.layer1, grads.audio_encoder.layer1, lr,
               momentum, velocity.audio_encoder.layer1);
    if (params.audio_encoder.layer2) {
        sgd_affine(*params.audio_encoder.layer2, *grads.audio_encoder.layer2, lr,
                   momentum, *velocity.audio_encoder.layer2);
    }
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        sgd_affine(params.heads[i], grads.heads[i], lr, momentum, velocity.heads[i]);
    }
}

namespace {

template <typename Fn>
void for_each_param_array(ModelParams& p, Fn&& fn) {
    fn(p.video_encoder.layer1.weights.values());
    fn(p.video_encoder.layer1.bias);
    if (p.video_encoder.layer2) {
        fn(p.video_encoder.layer2->weights.values());
        fn(p.video_encoder.layer2->bias);
    }
    fn(p.audio_encoder.layer1.weights.values());
    fn(p.audio_encoder.layer1.bias);
    if (p.audio_encoder.layer2) {
        fn(p.audio_encoder.layer2->weights.values());
        fn(p.audio_encoder.layer2->bias);
    }
    for (auto& h : p.heads) {
        fn(h.weights.values());
        fn(h.bias);
    }
}

}  // namespace

std::vector<double> flatten_params(const ModelParams& params) {
    std::vector<double> flat;
    ModelParams copy = params;
    for_each_param_array(copy, [&](std::vector<double>& arr) {
        flat.insert(flat.end(), arr.begin(), arr.end());
    });
    return flat;
}

void unflatten_params(std::span<const double> flat, ModelParams& params) {
    std::size_t pos = 0;
    for_each_param_array(params, [&](std::vector<double>& arr) {
        if (pos + arr.size() > flat.size()) {
            throw std::invalid_argument("unflatten_params: size mismatch");
        }
        std::copy(flat.begin() + pos, flat.begin() + pos + arr.size(), arr.begin());
        pos += arr.size();
    });
    if (pos != flat.size()) {
        throw std::invalid_argument("unflatten_params: size mismatch");
    }
}

GradCheckResult gradient_check(const std::vector<const Sample*>& batch,
                               const std::vector<std::size_t>& labels,
                               const ModelParams& params,
                               const std::array<double, kLayerCount>& weights,
                               double eps) {
    auto analytic = flatten_params(backward(batch, labels, params, weights).grads);
    ModelParams probe = params;
    auto loss_at = [&](std::span<const double> flat) {
        unflatten_params(flat, probe);
        double total = 0.0;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            auto out = forward(batch[s]->video_raw, batch[s]->audio_raw, probe,
                               batch[s]->onsets);
            total += multi_task_loss(out, labels[s], weights);
        }
        return total / static_cast<double>(batch.size());
    };
    auto flat0 = flatten_params(params);
    auto numeric = finite_diff_grad(loss_at, flat0, eps);

    GradCheckResult res;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double a = analytic[i], n = numeric[i];
        double abs_err = std::abs(a - n);
        double rel = abs_err / std::max({std::abs(a), std::abs(n), 1e-6});
        res.max_abs_error = std::max(res.max_abs_error, abs_err);
        res.max_rel_error = std::max(res.max_rel_error, rel);
    }
    return res;
}

double LrSchedule::step(double val_accuracy) {
    if (val_accuracy > best_) {
        best_ = val_accuracy;
        stale_ = 0;
    } else {
        ++stale_;
        if (stale_ >= patience_) {
            lr_ *= decay_;
            stale_ = 0;
        }
    }
    return lr_;
}

TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) {
        throw std::invalid_argument("train: empty training set");
    }
    const auto& first = train_set.front();
    ModelDims dims{first.video_raw.width(), first.audio_raw.width(), cfg.d_embed, 0};
    for (const auto& s : train_set) {
        if (s.video_raw.width() != dims.d_in_video ||
            s.audio_raw.width() != dims.d_in_audio ||
            s.video_raw.steps() != s.audio_raw.steps()) {
            throw std::invalid_argument("train: inconsistent sample shapes");
        }
        dims.classes = std::max(dims.classes, s.label + 1);
        for (std::size_t m : s.multi_labels) dims.classes = std::max(dims.classes, m + 1);
    }
    for (const auto& s : val_set) dims.classes = std::max(dims.classes, s.label + 1);

    Rng rng(cfg.seed);
    ModelParams params = init_params(dims, cfg.k, cfg.encoder_hidden, rng);
    ModelParams velocity = zero_like(params);
    LrSchedule schedule(cfg);

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::vector<std::size_t> epoch_labels(n);
    TrainResult result;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // per-epoch label draw for multi-label samples, in sample order
        for (std::size_t i = 0; i < n; ++i) {
            const auto& ml = train_set[i].multi_labels;
            epoch_labels[i] =
                (ml.size() > 1) ? ml[rng.next_u64() % ml.size()] : train_set[i].label;
        }
        // Fisher-Yates shuffle
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = 0; i + 1 < n; ++i) {
            std::size_t j = i + rng.next_u64() % (n - i);
            std::swap(order[i], order[j]);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
            std::vector<const Sample*> batch;
            std::vector<std::size_t> labels;
            for (std::size_t i = b0; i < std::min(n, b0 + cfg.batch_size); ++i) {
                batch.push_back(&train_set[order[i]]);
                labels.push_back(epoch_labels[order[i]]);
            }
            auto bg = backward(batch, labels, params, cfg.loss_weights);
            sgd_update(params, bg.grads, schedule.lr(), cfg.momentum, velocity);
            for (std::size_t i = 0; i < kLayerCount; ++i) {
                rec.train_loss[i] += bg.layer_loss[i];
            }
            ++batches;
        }
        if (!params_finite(params)) {
            throw std::runtime_error("train: non-finite parameters");
        }
        for (double& l : rec.train_loss) l /= static_cast<double>(batches);

        std::array<std::size_t, kLayerCount> layer_hits{};
        std::size_t voted_hits = 0;
        for (const auto& s : val_set) {
            auto outputs = forward(s.video_raw, s.audio_raw, params, s.onsets);
            for (std::size_t i = 0; i < kLayerCount; ++i) {
                if (argmax(outputs.logits.row(i)) == s.label) ++layer_hits[i];
            }
            if (majority_vote(outputs) == s.label) ++voted_hits;
        }
        const double nv = std::max<std::size_t>(1, val_set.size());
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            rec.val_accuracy[i] = layer_hits[i] / nv;
        }
        rec.val_voted_accuracy = voted_hits / nv;
        rec.lr = schedule.lr();
        schedule.step(rec.val_voted_accuracy);
        result.log.push_back(rec);
    }
    result.params = std::move(params);
    return result;
}

}  // namespace avfuse
