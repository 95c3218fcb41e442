#include "avfuse/cli.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "avfuse/analysis.hpp"
#include "avfuse/audio_dsp.hpp"
#include "avfuse/errors.hpp"
#include "avfuse/io.hpp"
#include "avfuse/synth.hpp"
#include "avfuse/training.hpp"

namespace avfuse {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw format_error("bad JSON in " + path + ": " + e.what());
    }
}

SynthConfig parse_synth_config(const json& j) {
    SynthConfig cfg;
    cfg.T = j.value("T", cfg.T);
    cfg.d_in_video = j.value("d_in_video", cfg.d_in_video);
    cfg.d_in_audio = j.value("d_in_audio", cfg.d_in_audio);
    cfg.classes = j.value("classes", cfg.classes);
    cfg.samples_per_class = j.value("samples_per_class", cfg.samples_per_class);
    cfg.noise_std = j.value("noise_std", cfg.noise_std);
    cfg.correlation_strength = j.value("correlation_strength", cfg.correlation_strength);
    cfg.planted_instants = j.value("planted_instants", cfg.planted_instants);
    cfg.onset_period = j.value("onset_period", cfg.onset_period);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

KindAllocation parse_allocation(const json& j, std::size_t classes) {
    KindAllocation alloc{};
    if (j.contains("allocation")) {
        const auto& a = j["allocation"];
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            alloc[i] = a.value(layer_name(kLayerOrder[i]), std::size_t{0});
        }
    } else if (classes % kLayerCount == 0) {
        alloc.fill(classes / kLayerCount);
    } else {
        throw std::invalid_argument(
            "synth config needs an allocation when classes are not divisible by 5");
    }
    return alloc;
}

TrainConfig parse_train_config(const json& j) {
    TrainConfig cfg;
    cfg.lr0 = j.value("lr0", cfg.lr0);
    cfg.lr_decay = j.value("lr_decay", cfg.lr_decay);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.k = j.value("k", cfg.k);
    cfg.d_embed = j.value("d_embed", cfg.d_embed);
    cfg.encoder_hidden = j.value("encoder_hidden", cfg.encoder_hidden);
    if (j.contains("loss_weights")) {
        auto w = j["loss_weights"].get<std::vector<double>>();
        if (w.size() != kLayerCount) {
            throw std::invalid_argument("loss_weights must have 5 entries");
        }
        std::copy(w.begin(), w.end(), cfg.loss_weights.begin());
    }
    return cfg;
}

json predict_record(const Sample& s, const LayerOutputs& out, bool multilabel) {
    json rec;
    rec["id"] = s.id;
    const std::size_t voted = majority_vote(out);
    rec["voted"] = voted;
    std::vector<std::size_t> labels;
    if (multilabel) {
        labels = multilabel_set(out).label_set();
    } else {
        labels = {voted};
    }
    rec["labels"] = labels;
    std::array<double, kLayerCount> confs{};
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        auto row = out.logits.row(i);
        confs[i] = softmax(row)[argmax(row)];
    }
    rec["confidences"] = confs;
    if (out.onset_fallback) rec["onset_fallback"] = true;
    return rec;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    json j = load_json_file(config_path);
    SynthConfig cfg = parse_synth_config(j);
    if (seed) cfg.seed = *seed;
    KindAllocation alloc = parse_allocation(j, cfg.classes);
    std::array<std::size_t, 3> split = {8, 1, 1};
    if (j.contains("split")) {
        auto sp = j["split"].get<std::vector<std::size_t>>();
        if (sp.size() != 3) throw std::invalid_argument("split must have 3 entries");
        std::copy(sp.begin(), sp.end(), split.begin());
    }
    SynthDataset ds = gen_dataset(cfg, alloc, split);
    write_dataset(out_dir, ds);
    json summary = {{"train", ds.train.size()},
                    {"val", ds.val.size()},
                    {"test", ds.test.size()},
                    {"classes", cfg.classes},
                    {"out", out_dir}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_onset(const std::string& wav_path, const std::string& out_path,
              std::size_t T) {
    PcmClip clip = read_wav(wav_path);
    auto spec = compute_logmel(clip);
    auto env = onset_envelope(spec);
    auto frames = pick_onsets(env);
    auto steps = map_onsets_to_steps(frames, spec.values.rows() / T, T);
    if (!out_path.empty()) write_matrix(out_path, spec.values);
    json rec = {{"frames", frames}, {"steps", steps}};
    std::cout << rec.dump() << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_path,
              const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::size_t> k_override) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = parse_train_config(load_json_file(config_path));
    if (seed) cfg.seed = *seed;
    if (k_override) cfg.k = *k_override;

    auto train_set = read_manifest(fs::path(data_dir) / "train.manifest");
    auto val_set = read_manifest(fs::path(data_dir) / "val.manifest");
    std::cerr << "training on " << train_set.size() << " samples, validating on "
              << val_set.size() << "\n";
    TrainResult result = train(train_set, val_set, cfg);

    fs::path ckpt_path(out_path);
    if (ckpt_path.extension() != ".avck") {
        ckpt_path = ckpt_path / "model.avck";
    }
    save_checkpoint(ckpt_path, Checkpoint{result.params, cfg.seed,
                                          static_cast<int>(result.log.size())});
    fs::path log_path = ckpt_path;
    log_path.replace_extension(".log.ndjson");
    atomic_write(log_path, [&](std::ostream& os) {
        for (const auto& rec : result.log) {
            json r = {{"epoch", rec.epoch},
                      {"train_loss", rec.train_loss},
                      {"val_accuracy", rec.val_accuracy},
                      {"val_voted_accuracy", rec.val_voted_accuracy},
                      {"lr", rec.lr}};
            os << r.dump() << "\n";
        }
    });
    for (const auto& rec : result.log) {
        json r = {{"epoch", rec.epoch},
                  {"val_voted_accuracy", rec.val_voted_accuracy},
                  {"lr", rec.lr}};
        std::cout << r.dump() << "\n";
    }
    std::cerr << "checkpoint written to " << ckpt_path.string() << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& manifest_path,
                bool multilabel, std::optional<std::size_t> k_override) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (k_override) ckpt.params.k = *k_override;
    auto samples = read_manifest(manifest_path);
    for (const auto& s : samples) {
        auto out = forward(s.video_raw, s.audio_raw, ckpt.params, s.onsets);
        std::cout << predict_record(s, out, multilabel).dump() << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto samples = read_manifest(manifest_path);
    if (samples.empty()) throw std::invalid_argument("eval: empty manifest");
    std::array<std::size_t, kLayerCount> layer_hits{};
    std::size_t voted_hits = 0;
    double f1_sum = 0.0;
    std::size_t f1_count = 0;
    for (const auto& s : samples) {
        auto out = forward(s.video_raw, s.audio_raw, ckpt.params, s.onsets);
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            if (argmax(out.logits.row(i)) == s.label) ++layer_hits[i];
        }
        if (majority_vote(out) == s.label) ++voted_hits;
        if (!s.multi_labels.empty()) {
            f1_sum += f1_multilabel(multilabel_set(out).label_set(), s.multi_labels);
            ++f1_count;
        }
    }
    const double n = static_cast<double>(samples.size());
    json layer_acc;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        layer_acc[layer_name(kLayerOrder[i])] = layer_hits[i] / n;
    }
    json rec = {{"samples", samples.size()},
                {"voted_accuracy", voted_hits / n},
                {"layer_accuracy", layer_acc}};
    if (f1_count > 0) rec["mean_f1"] = f1_sum / static_cast<double>(f1_count);
    std::cout << rec.dump() << "\n";
    return 0;
}

int cmd_bias(const std::string& ckpt_path, const std::string& manifest_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto samples = read_manifest(manifest_path);
    std::vector<SampleBias> winners;
    for (const auto& s : samples) {
        auto out = forward(s.video_raw, s.audio_raw, ckpt.params, s.onsets);
        SampleBias sb{s.id, s.category, winning_layer(out, s.label)};
        json rec = {{"id", sb.id},
                    {"category", sb.category},
                    {"winner", layer_name(sb.winner)}};
        std::cout << rec.dump() << "\n";
        winners.push_back(std::move(sb));
    }
    BiasReport report = dataset_bias(winners);
    json cats, counts;
    for (const auto& [cat, kind] : report.category_assignment) {
        cats[cat] = layer_name(kind);
    }
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        counts[layer_name(kLayerOrder[i])] = report.dataset_counts[i];
    }
    json summary = {{"categories", cats}, {"counts", counts}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_layerdiff(const std::string& ckpt_path, const std::string& manifest_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto samples = read_manifest(manifest_path);
    std::vector<std::array<bool, 3>> bits;
    for (const auto& s : samples) {
        auto out = forward(s.video_raw, s.audio_raw, ckpt.params, s.onsets);
        std::array<bool, 3> b = {argmax(out.row(LayerKind::continuous)) == s.label,
                                 argmax(out.row(LayerKind::instant)) == s.label,
                                 argmax(out.row(LayerKind::onset)) == s.label};
        json rec = {{"id", s.id}, {"correct", b}};
        std::cout << rec.dump() << "\n";
        bits.push_back(b);
    }
    auto u = layer_uniqueness(bits);
    json summary = {{"continuous_unique", u.uniquely_correct[0]},
                    {"instant_unique", u.uniquely_correct[1]},
                    {"onset_unique", u.uniquely_correct[2]},
                    {"av_over_continuous", u.av_over_continuous}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_localize(const std::string& config_path, const std::string& out_prefix,
                 std::size_t window) {
    json j = load_json_file(config_path);
    const fs::path base = fs::path(config_path).parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q : base / q;
    };
    Matrix flat = read_matrix(resolve(j.at("vmap").get<std::string>()));
    Matrix za_values = read_matrix(resolve(j.at("audio").get<std::string>()));
    auto grid = j.at("grid").get<std::vector<std::size_t>>();
    if (grid.size() != 2) throw std::invalid_argument("grid must be [H, W]");
    const std::size_t H = grid[0], W = grid[1];
    const std::size_t T = za_values.rows();
    if (flat.rows() != T * H * W || flat.cols() != za_values.cols()) {
        throw std::invalid_argument("vmap shape must be (T*H*W) x D");
    }
    SpatialFeatureMap vmap{T, H, W, flat.cols(), flat.values()};
    FeatureSequence za{Modality::audio, std::move(za_values)};
    if (j.contains("window")) window = j["window"].get<std::size_t>();
    LocalizationMap lmap = localization_map(vmap, za, window);

    if (!out_prefix.empty()) {
        write_matrix(out_prefix + ".avm", lmap.time_average);
        write_pgm(out_prefix + ".pgm", lmap.time_average);
    }
    const std::size_t flat_arg = argmax(lmap.time_average.values());
    json rec = {{"argmax", {flat_arg / W, flat_arg % W}}};
    if (j.contains("box")) {
        auto b = j["box"].get<std::vector<std::size_t>>();
        if (b.size() != 4) throw std::invalid_argument("box must be [r0, c0, r1, c1]");
        auto score = localization_eval(lmap.time_average, GridBox{b[0], b[1], b[2], b[3]});
        rec["iou"] = score.iou_at_half;
        rec["auc"] = score.auc;
    }
    std::cout << rec.dump() << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps) {
    Rng rng(seed);
    SynthConfig cfg;
    cfg.T = 8;
    cfg.d_in_video = 5;
    cfg.d_in_audio = 5;
    cfg.classes = 3;
    cfg.planted_instants = 2;
    cfg.onset_period = 4;
    cfg.noise_std = 0.5;
    cfg.seed = seed;
    auto protos = make_prototypes(cfg);
    std::vector<Sample> samples;
    std::vector<const Sample*> batch;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 3; ++i) {
        EventSpec spec{kLayerOrder[i % kLayerCount], i % cfg.classes, {}};
        auto gen = gen_event_pair(spec, cfg, protos, Rng::derive(seed, i));
        samples.push_back(std::move(gen.sample));
    }
    ModelDims dims{cfg.d_in_video, cfg.d_in_audio, 4, cfg.classes};
    ModelParams params = init_params(dims, 3, 0, rng);
    for (const auto& s : samples) {
        batch.push_back(&s);
        labels.push_back(s.label);
    }
    auto res = gradient_check(batch, labels, params, {1, 1, 1, 1, 1}, eps);
    const bool pass = res.max_rel_error < 1e-4;
    json rec = {{"max_rel_error", res.max_rel_error},
                {"max_abs_error", res.max_abs_error},
                {"pass", pass}};
    std::cout << rec.dump() << "\n";
    return pass ? 0 : 2;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"event-type-aware audio-visual fusion toolkit"};
    app.require_subcommand(1);

    std::string data_path, ckpt_path, out_path, config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k_override;
    std::uint64_t gradcheck_seed = 0;
    bool multilabel = false;
    std::size_t window = 30;
    std::size_t T = 100;
    double eps = 1e-5;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", config_path)->required();
    synth->add_option("--out", out_path)->required();
    synth->add_option("--seed", seed);

    auto* onset = app.add_subcommand("onset", "detect audio onsets in a WAV clip");
    onset->add_option("--data", data_path)->required();
    onset->add_option("--out", out_path);
    onset->add_option("--window", T, "video time steps (default 100)");

    auto* train_cmd = app.add_subcommand("train", "train encoders and heads");
    train_cmd->add_option("--data", data_path)->required();
    train_cmd->add_option("--out", out_path)->required();
    train_cmd->add_option("--config", config_path);
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--k", k_override, "instant-layer pool size");

    auto* predict = app.add_subcommand("predict", "per-sample predictions");
    predict->add_option("--ckpt", ckpt_path)->required();
    predict->add_option("--data", data_path)->required();
    predict->add_flag("--multilabel", multilabel);
    predict->add_option("--k", k_override, "instant-layer pool size");

    auto* eval = app.add_subcommand("eval", "accuracy and F1 metrics");
    eval->add_option("--ckpt", ckpt_path)->required();
    eval->add_option("--data", data_path)->required();

    auto* bias = app.add_subcommand("bias", "modality bias report");
    bias->add_option("--ckpt", ckpt_path)->required();
    bias->add_option("--data", data_path)->required();

    auto* layerdiff = app.add_subcommand("layerdiff", "layer uniqueness statistics");
    layerdiff->add_option("--ckpt", ckpt_path)->required();
    layerdiff->add_option("--data", data_path)->required();

    auto* localize = app.add_subcommand("localize", "sound localization heatmap");
    localize->add_option("--config", config_path)->required();
    localize->add_option("--out", out_path);
    localize->add_option("--window", window);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gradcheck->add_option("--seed", gradcheck_seed);
    gradcheck->add_option("--eps", eps);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::stringstream out;
        int code = app.exit(e, out, out);
        std::cerr << out.str();
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_path, seed);
        if (onset->parsed()) return cmd_onset(data_path, out_path, T);
        if (train_cmd->parsed()) return cmd_train(data_path, out_path, config_path, seed, k_override);
        if (predict->parsed()) return cmd_predict(ckpt_path, data_path, multilabel, k_override);
        if (eval->parsed()) return cmd_eval(ckpt_path, data_path);
        if (bias->parsed()) return cmd_bias(ckpt_path, data_path);
        if (layerdiff->parsed()) return cmd_layerdiff(ckpt_path, data_path);
        if (localize->parsed()) return cmd_localize(config_path, out_path, window);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_seed, eps);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

int run_command(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_command(args);
}

}  // namespace avfuse
