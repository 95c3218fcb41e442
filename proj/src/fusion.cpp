#include "avfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace avfuse {

const char* layer_name(LayerKind k) {
    switch (k) {
        case LayerKind::continuous: return "continuous";
        case LayerKind::instant: return "instant";
        case LayerKind::onset: return "onset";
        case LayerKind::visual: return "visual";
        case LayerKind::audio: return "audio";
    }
    return "?";
}

std::vector<double> AffineMap::apply(std::span<const double> x) const {
    if (x.size() != in_width()) {
        throw std::invalid_argument("AffineMap: input width mismatch");
    }
    std::vector<double> out(out_width());
    for (std::size_t r = 0; r < out_width(); ++r) {
        out[r] = dot(weights.row(r), x) + bias[r];
    }
    return out;
}

namespace {

AffineMap init_affine(std::size_t out, std::size_t in, Rng& rng) {
    AffineMap m;
    m.weights = Matrix(out, in);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < out; ++i) {
        for (std::size_t j = 0; j < in; ++j) {
            m.weights.at(i, j) = rng.uniform(-bound, bound);
        }
    }
    m.bias.assign(out, 0.0);
    return m;
}

EncoderParams init_encoder(std::size_t d_in, std::size_t d_out,
                           std::size_t hidden, Rng& rng) {
    EncoderParams enc;
    if (hidden == 0) {
        enc.layer1 = init_affine(d_out, d_in, rng);
    } else {
        enc.layer1 = init_affine(hidden, d_in, rng);
        enc.layer2 = init_affine(d_out, hidden, rng);
    }
    return enc;
}

void check_pair(const FeatureSequence& zv, const FeatureSequence& za) {
    if (zv.steps() != za.steps() || zv.width() != za.width()) {
        throw std::invalid_argument("fusion: paired sequences must share T and D");
    }
    if (zv.steps() == 0) {
        throw std::invalid_argument("fusion: empty sequence");
    }
}

// Mean of concat(video row, audio row) over the given steps.
std::vector<double> pooled_concat(const FeatureSequence& zv,
                                  const FeatureSequence& za,
                                  const std::vector<std::size_t>& steps) {
    const std::size_t d = zv.width();
    std::vector<double> out(2 * d, 0.0);
    for (std::size_t t : steps) {
        auto v = zv.values.row(t);
        auto a = za.values.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            out[j] += v[j];
            out[d + j] += a[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(steps.size());
    for (double& x : out) x *= inv;
    return out;
}

std::vector<std::size_t> all_steps(std::size_t T) {
    std::vector<std::size_t> s(T);
    std::iota(s.begin(), s.end(), std::size_t{0});
    return s;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, std::size_t k,
                        std::size_t encoder_hidden, Rng& rng) {
    ModelParams p;
    p.dims = dims;
    p.k = k;
    p.video_encoder = init_encoder(dims.d_in_video, dims.d_embed, encoder_hidden, rng);
    p.audio_encoder = init_encoder(dims.d_in_audio, dims.d_embed, encoder_hidden, rng);
    for (auto& head : p.heads) {
        head = init_affine(dims.classes, 2 * dims.d_embed, rng);
    }
    return p;
}

FeatureSequence encode(const FeatureSequence& raw, const EncoderParams& params) {
    if (raw.width() != params.in_width()) {
        throw std::invalid_argument("encode: input width mismatch");
    }
    FeatureSequence out;
    out.modality = raw.modality;
    out.values = Matrix(raw.steps(), params.out_width());
    std::vector<double> hidden;
    for (std::size_t t = 0; t < raw.steps(); ++t) {
        auto x = raw.values.row(t);
        std::vector<double> z;
        if (params.layer2) {
            hidden = params.layer1.apply(x);
            for (double& h : hidden) h = std::max(0.0, h);
            z = params.layer2->apply(hidden);
        } else {
            z = params.layer1.apply(x);
        }
        std::copy(z.begin(), z.end(), out.values.row(t).begin());
    }
    return out;
}

std::vector<double> correlation_scores(const FeatureSequence& zv,
                                       const FeatureSequence& za) {
    check_pair(zv, za);
    std::vector<double> s(zv.steps());
    for (std::size_t t = 0; t < zv.steps(); ++t) {
        s[t] = dot(zv.values.row(t), za.values.row(t));
    }
    return s;
}

std::vector<std::size_t> top_k_steps(const std::vector<double>& scores,
                                     std::size_t k) {
    if (k == 0 || k > scores.size()) {
        throw std::invalid_argument("top_k_steps: k out of range");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // stable sort by descending score keeps lower time indices first on ties
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> fuse_continuous(const FeatureSequence& zv,
                                    const FeatureSequence& za) {
    check_pair(zv, za);
    return pooled_concat(zv, za, all_steps(zv.steps()));
}

std::vector<double> fuse_instant(const FeatureSequence& zv,
                                 const FeatureSequence& za, std::size_t k) {
    check_pair(zv, za);
    auto scores = correlation_scores(zv, za);
    return pooled_concat(zv, za, top_k_steps(scores, k));
}

std::vector<double> fuse_onset(const FeatureSequence& zv,
                               const FeatureSequence& za, const OnsetSet& onsets) {
    check_pair(zv, za);
    if (onsets.empty()) {
        return fuse_continuous(zv, za);
    }
    for (std::size_t t : onsets) {
        if (t >= zv.steps()) {
            throw std::invalid_argument("fuse_onset: onset index out of range");
        }
    }
    return pooled_concat(zv, za, onsets);
}

std::vector<double> fuse_unimodal(const FeatureSequence& z, Modality keep) {
    if (z.modality != keep) {
        throw std::invalid_argument("fuse_unimodal: modality mismatch");
    }
    if (z.steps() == 0) {
        throw std::invalid_argument("fuse_unimodal: empty sequence");
    }
    const std::size_t d = z.width();
    std::vector<double> half(d, 0.0);
    for (std::size_t t = 0; t < z.steps(); ++t) {
        auto r = z.values.row(t);
        for (std::size_t j = 0; j < d; ++j) half[j] += r[j];
    }
    const double inv = 1.0 / static_cast<double>(z.steps());
    for (double& x : half) x *= inv;

    std::vector<double> out(2 * d, 0.0);
    const std::size_t offset = (keep == Modality::video) ? 0 : d;
    std::copy(half.begin(), half.end(), out.begin() + offset);
    return out;
}

LayerOutputs forward(const FeatureSequence& video_raw,
                     const FeatureSequence& audio_raw,
                     const ModelParams& params, const OnsetSet& onsets) {
    FeatureSequence zv = encode(video_raw, params.video_encoder);
    FeatureSequence za = encode(audio_raw, params.audio_encoder);

    std::array<std::vector<double>, kLayerCount> fused;
    fused[0] = fuse_continuous(zv, za);
    fused[1] = fuse_instant(zv, za, std::min(params.k, zv.steps()));
    fused[2] = fuse_onset(zv, za, onsets);
    fused[3] = fuse_unimodal(zv, Modality::video);
    fused[4] = fuse_unimodal(za, Modality::audio);

    LayerOutputs out;
    out.onset_fallback = onsets.empty();
    out.logits = Matrix(kLayerCount, params.dims.classes);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        auto logits = params.heads[i].apply(fused[i]);
        std::copy(logits.begin(), logits.end(), out.logits.row(i).begin());
    }
    return out;
}

}  // namespace avfuse
