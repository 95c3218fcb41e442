#include "avfuse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace avfuse {

bool PredictionSet::contains(std::size_t label) const {
    return std::any_of(labels.begin(), labels.end(),
                       [&](const AcceptedLabel& a) { return a.label == label; });
}

std::vector<std::size_t> PredictionSet::label_set() const {
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for (const auto& a : labels) out.push_back(a.label);
    return out;
}

std::size_t majority_vote(const LayerOutputs& outputs) {
    std::array<std::size_t, kLayerCount> preds{};
    std::array<double, kLayerCount> confs{};
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        auto row = outputs.logits.row(i);
        preds[i] = argmax(row);
        confs[i] = softmax(row)[preds[i]];
    }
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t p : preds) ++counts[p];
    std::size_t best_count = 0;
    for (const auto& [label, count] : counts) best_count = std::max(best_count, count);
    std::size_t modal_label = 0;
    int modal_hits = 0;
    for (const auto& [label, count] : counts) {
        if (count == best_count) {
            modal_label = label;
            ++modal_hits;
        }
    }
    if (modal_hits == 1) {
        return modal_label;
    }
    // no unique mode: the most confident layer decides, layer order on ties
    std::size_t best_layer = 0;
    for (std::size_t i = 1; i < kLayerCount; ++i) {
        if (confs[i] > confs[best_layer]) best_layer = i;
    }
    return preds[best_layer];
}

PredictionSet multilabel_set(const LayerOutputs& outputs) {
    PredictionSet set;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        auto row = outputs.logits.row(i);
        std::size_t p = argmax(row);
        // accepted iff layer i tops the column at class p
        std::size_t winner = 0;
        for (std::size_t l = 1; l < kLayerCount; ++l) {
            if (outputs.logits.at(l, p) > outputs.logits.at(winner, p)) winner = l;
        }
        if (winner != i) continue;
        if (!set.contains(p)) {
            set.labels.push_back({p, kLayerOrder[i], softmax(row)[p]});
        }
    }
    std::sort(set.labels.begin(), set.labels.end(),
              [](const AcceptedLabel& a, const AcceptedLabel& b) {
                  return a.label < b.label;
              });
    return set;
}

double f1_multilabel(const std::vector<std::size_t>& predicted,
                     const std::vector<std::size_t>& truth) {
    if (truth.empty()) {
        throw std::invalid_argument("f1_multilabel: empty truth set");
    }
    std::set<std::size_t> p(predicted.begin(), predicted.end());
    std::set<std::size_t> g(truth.begin(), truth.end());
    std::size_t inter = 0;
    for (std::size_t x : p) inter += g.count(x);
    return 2.0 * static_cast<double>(inter) /
           static_cast<double>(p.size() + g.size());
}

std::array<double, kLayerCount> modality_confidences(const LayerOutputs& outputs,
                                                     std::size_t y) {
    if (y >= outputs.logits.cols()) {
        throw std::invalid_argument("modality_confidences: label out of range");
    }
    std::array<double, kLayerCount> confs{};
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        confs[i] = softmax(outputs.logits.row(i))[y];
    }
    return confs;
}

LayerKind winning_layer(const LayerOutputs& outputs, std::size_t y) {
    auto confs = modality_confidences(outputs, y);
    std::size_t best = 0;
    for (std::size_t i = 1; i < kLayerCount; ++i) {
        if (confs[i] > confs[best]) best = i;
    }
    return kLayerOrder[best];
}

BiasReport dataset_bias(const std::vector<SampleBias>& samples) {
    BiasReport report;
    report.per_sample = samples;
    std::map<std::string, std::array<std::size_t, kLayerCount>> tallies;
    for (const auto& s : samples) {
        ++tallies[s.category][static_cast<std::size_t>(s.winner)];
    }
    for (const auto& [category, tally] : tallies) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < kLayerCount; ++i) {
            if (tally[i] > tally[best]) best = i;
        }
        report.category_assignment[category] = kLayerOrder[best];
        ++report.dataset_counts[best];
    }
    return report;
}

LayerUniqueness layer_uniqueness(const std::vector<std::array<bool, 3>>& bits) {
    LayerUniqueness out;
    for (const auto& b : bits) {
        const bool cont = b[0], inst = b[1], ons = b[2];
        if (cont && !inst && !ons) ++out.uniquely_correct[0];
        if (inst && !cont && !ons) ++out.uniquely_correct[1];
        if (ons && !cont && !inst) ++out.uniquely_correct[2];
        if ((inst || ons) && !cont) ++out.av_over_continuous;
    }
    return out;
}

LocalizationMap localization_map(const SpatialFeatureMap& vmap,
                                 const FeatureSequence& za, std::size_t window) {
    if (vmap.depth != za.width()) {
        throw std::invalid_argument("localization_map: feature width mismatch");
    }
    if (vmap.steps != za.steps()) {
        throw std::invalid_argument("localization_map: step count mismatch");
    }
    LocalizationMap out;
    out.per_step.reserve(vmap.steps);
    for (std::size_t t = 0; t < vmap.steps; ++t) {
        Matrix alpha(vmap.height, vmap.width);
        auto zat = za.values.row(t);
        for (std::size_t y = 0; y < vmap.height; ++y) {
            for (std::size_t x = 0; x < vmap.width; ++x) {
                double s = 0.0;
                for (std::size_t k = 0; k < vmap.depth; ++k) {
                    s += vmap.at(t, y, x, k) * zat[k];
                }
                alpha.at(y, x) = s;
            }
        }
        out.per_step.push_back(std::move(alpha));
    }

    // centered window around the mid step, clamped to the clip
    const std::size_t T = vmap.steps;
    std::size_t w = std::min<std::size_t>(std::max<std::size_t>(window, 1), T);
    std::size_t mid = T / 2;
    std::size_t lo = (mid >= w / 2) ? mid - w / 2 : 0;
    if (lo + w > T) lo = T - w;
    out.time_average = Matrix(vmap.height, vmap.width);
    for (std::size_t t = lo; t < lo + w; ++t) {
        for (std::size_t i = 0; i < out.time_average.size(); ++i) {
            out.time_average.values()[i] += out.per_step[t].values()[i];
        }
    }
    for (double& v : out.time_average.values()) v /= static_cast<double>(w);
    return out;
}

LocalizationScore localization_eval(const Matrix& map, const GridBox& box) {
    if (box.r1 <= box.r0 || box.c1 <= box.c0 || box.r1 > map.rows() ||
        box.c1 > map.cols()) {
        throw std::invalid_argument("localization_eval: degenerate or out-of-grid box");
    }
    const double mx = *std::max_element(map.values().begin(), map.values().end());
    auto iou_at = [&](double tau) {
        const double thr = tau * mx;
        std::size_t inter = 0, uni = 0;
        for (std::size_t r = 0; r < map.rows(); ++r) {
            for (std::size_t c = 0; c < map.cols(); ++c) {
                const bool on = map.at(r, c) >= thr;
                const bool in_box =
                    r >= box.r0 && r < box.r1 && c >= box.c0 && c < box.c1;
                if (on && in_box) ++inter;
                if (on || in_box) ++uni;
            }
        }
        return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    };
    LocalizationScore score;
    score.iou_at_half = iou_at(0.5);
    double sum = 0.0;
    int n = 0;
    for (int i = 1; i <= 19; ++i) {
        sum += iou_at(0.05 * i);
        ++n;
    }
    score.auc = sum / n;
    return score;
}

}  // namespace avfuse
