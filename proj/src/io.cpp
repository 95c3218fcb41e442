#include "avfuse/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <atomic>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "avfuse/errors.hpp"

namespace avfuse {

namespace {

using nlohmann::json;

constexpr char kMatrixMagic[8] = {'A', 'V', 'F', 'M', 'T', 'X', '0', '1'};
constexpr char kCheckpointMagic[8] = {'A', 'V', 'F', 'C', 'K', 'P', '0', '1'};
constexpr std::uint64_t kMaxElements = 1ull << 32;
constexpr int kCheckpointVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw format_error("truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f32(std::ostream& os, const std::vector<double>& values) {
    std::vector<unsigned char> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        float f = static_cast<float>(values[i]);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        buf[4 * i + 0] = static_cast<unsigned char>(u);
        buf[4 * i + 1] = static_cast<unsigned char>(u >> 8);
        buf[4 * i + 2] = static_cast<unsigned char>(u >> 16);
        buf[4 * i + 3] = static_cast<unsigned char>(u >> 24);
    }
    os.write(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
}

std::vector<double> get_f32(std::istream& is, std::size_t count) {
    std::vector<unsigned char> buf(count * 4);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
        throw format_error("truncated payload");
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = buf[4 * i] | (buf[4 * i + 1] << 8) |
                          (buf[4 * i + 2] << 16) |
                          (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        out[i] = f;
    }
    return out;
}

void check_magic(std::istream& is, const char (&magic)[8], const char* what) {
    char got[8];
    is.read(got, 8);
    if (!is || std::memcmp(got, magic, 8) != 0) {
        throw format_error(std::string(what) + ": bad magic");
    }
}

// Named parameter arrays in the fixed payload order.
struct NamedShape {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    std::vector<double>* data;
};

std::vector<NamedShape> shape_list(ModelParams& p) {
    std::vector<NamedShape> shapes;
    auto add_affine = [&](const std::string& prefix, AffineMap& m) {
        shapes.push_back({prefix + ".weights", m.weights.rows(), m.weights.cols(),
                          &m.weights.values()});
        shapes.push_back({prefix + ".bias", m.bias.size(), 1, &m.bias});
    };
    add_affine("video_encoder.layer1", p.video_encoder.layer1);
    if (p.video_encoder.layer2) add_affine("video_encoder.layer2", *p.video_encoder.layer2);
    add_affine("audio_encoder.layer1", p.audio_encoder.layer1);
    if (p.audio_encoder.layer2) add_affine("audio_encoder.layer2", *p.audio_encoder.layer2);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        add_affine("heads." + std::to_string(i), p.heads[i]);
    }
    return shapes;
}

}  // namespace

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    static std::atomic<unsigned> counter{0};
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw io_error("cannot open " + tmp.string());
        writer(os);
        if (!os) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw io_error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw io_error("rename failed for " + path.string());
    }
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    check_magic(is, kMatrixMagic, "read_matrix");
    const std::uint64_t rows = get_u64(is);
    const std::uint64_t cols = get_u64(is);
    if (rows == 0 || cols == 0 || rows * cols > kMaxElements ||
        (cols != 0 && rows * cols / cols != rows)) {
        throw format_error("read_matrix: shape overflow");
    }
    auto values = get_f32(is, rows * cols);
    // reject trailing garbage
    char extra;
    if (is.read(&extra, 1)) throw format_error("read_matrix: trailing bytes");
    for (double v : values) {
        if (!std::isfinite(v)) throw format_error("read_matrix: non-finite value");
    }
    return Matrix(rows, cols, std::move(values));
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    atomic_write(path, [&](std::ostream& os) {
        os.write(kMatrixMagic, 8);
        put_u64(os, m.rows());
        put_u64(os, m.cols());
        put_f32(os, m.values());
    });
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    ModelParams copy = ckpt.params;
    auto shapes = shape_list(copy);
    json header;
    header["version"] = kCheckpointVersion;
    header["dims"] = {{"d_in_video", copy.dims.d_in_video},
                      {"d_in_audio", copy.dims.d_in_audio},
                      {"d_embed", copy.dims.d_embed},
                      {"classes", copy.dims.classes},
                      {"k", copy.k}};
    header["encoder_hidden"] =
        copy.video_encoder.layer2 ? copy.video_encoder.layer1.out_width() : 0;
    header["seed"] = ckpt.seed;
    header["epoch"] = ckpt.epoch;
    auto& shape_json = header["shapes"];
    for (const auto& s : shapes) {
        shape_json.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    }
    const std::string text = header.dump();
    atomic_write(path, [&](std::ostream& os) {
        os.write(kCheckpointMagic, 8);
        put_u64(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& s : shapes) put_f32(os, *s.data);
    });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    check_magic(is, kCheckpointMagic, "load_checkpoint");
    const std::uint64_t header_len = get_u64(is);
    if (header_len > (1ull << 24)) throw format_error("load_checkpoint: oversized header");
    std::string text(header_len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw format_error("load_checkpoint: truncated header");
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception&) {
        throw format_error("load_checkpoint: malformed header JSON");
    }
    if (!header.contains("version") || header["version"].get<int>() != kCheckpointVersion) {
        throw format_error("load_checkpoint: unrecognized version");
    }

    Checkpoint ckpt;
    const auto& dims = header.at("dims");
    ckpt.params.dims = ModelDims{dims.at("d_in_video").get<std::size_t>(),
                                 dims.at("d_in_audio").get<std::size_t>(),
                                 dims.at("d_embed").get<std::size_t>(),
                                 dims.at("classes").get<std::size_t>()};
    ckpt.params.k = dims.at("k").get<std::size_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<int>();
    const std::size_t hidden = header.value("encoder_hidden", std::size_t{0});

    // materialize parameter arrays, then overwrite from the payload
    Rng dummy(0);
    ckpt.params = [&] {
        ModelParams p = init_params(ckpt.params.dims, ckpt.params.k, hidden, dummy);
        return p;
    }();
    auto shapes = shape_list(ckpt.params);
    const auto& shape_json = header.at("shapes");
    if (shape_json.size() != shapes.size()) {
        throw format_error("load_checkpoint: shape list mismatch");
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& sj = shape_json[i];
        if (sj.at("name").get<std::string>() != shapes[i].name ||
            sj.at("rows").get<std::size_t>() != shapes[i].rows ||
            sj.at("cols").get<std::size_t>() != shapes[i].cols) {
            throw format_error("load_checkpoint: shape mismatch at " + shapes[i].name);
        }
        *shapes[i].data = get_f32(is, shapes[i].rows * shapes[i].cols);
    }
    char extra;
    if (is.read(&extra, 1)) throw format_error("load_checkpoint: trailing bytes");
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelDims& expected_dims) {
    Checkpoint ckpt = load_checkpoint(path);
    if (!(ckpt.params.dims == expected_dims)) {
        throw format_error("load_checkpoint: dims mismatch against target configuration");
    }
    return ckpt;
}

namespace {

json sample_record(const Sample& s, const std::string& video_rel,
                   const std::string& audio_rel) {
    json rec;
    rec["id"] = s.id;
    rec["category"] = s.category;
    rec["label"] = s.label;
    if (!s.multi_labels.empty()) rec["multi_labels"] = s.multi_labels;
    rec["video"] = video_rel;
    rec["audio"] = audio_rel;
    if (!s.pcm_path.empty()) rec["pcm"] = s.pcm_path;
    if (!s.event_kind.empty()) rec["kind"] = s.event_kind;
    if (!s.planted_steps.empty()) rec["planted_steps"] = s.planted_steps;
    return rec;
}

}  // namespace

void write_manifest(const std::filesystem::path& path,
                    const std::vector<Sample>& samples,
                    const std::filesystem::path& feature_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(feature_dir);
    const fs::path base = path.parent_path();
    std::vector<json> records;
    records.reserve(samples.size());
    for (const auto& s : samples) {
        fs::path video_path = feature_dir / (s.id + ".video.avm");
        fs::path audio_path = feature_dir / (s.id + ".audio.avm");
        write_matrix(video_path, s.video_raw.values);
        write_matrix(audio_path, s.audio_raw.values);
        records.push_back(sample_record(s, fs::relative(video_path, base).string(),
                                        fs::relative(audio_path, base).string()));
    }
    atomic_write(path, [&](std::ostream& os) {
        for (const auto& r : records) os << r.dump() << "\n";
    });
}

std::vector<Sample> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string());
    const std::filesystem::path base = path.parent_path();
    std::vector<Sample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception&) {
            throw format_error("read_manifest: bad JSON at line " +
                               std::to_string(lineno));
        }
        Sample s;
        s.id = rec.at("id").get<std::string>();
        s.category = rec.value("category", std::string{});
        s.label = rec.at("label").get<std::size_t>();
        if (rec.contains("multi_labels")) {
            s.multi_labels = rec["multi_labels"].get<std::vector<std::size_t>>();
            if (std::find(s.multi_labels.begin(), s.multi_labels.end(), s.label) ==
                s.multi_labels.end()) {
                throw format_error("read_manifest: multi_labels must contain label");
            }
        }
        s.video_raw = {Modality::video,
                       read_matrix(base / rec.at("video").get<std::string>())};
        s.audio_raw = {Modality::audio,
                       read_matrix(base / rec.at("audio").get<std::string>())};
        s.pcm_path = rec.value("pcm", std::string{});
        s.event_kind = rec.value("kind", std::string{});
        if (rec.contains("planted_steps")) {
            s.planted_steps = rec["planted_steps"].get<std::vector<std::size_t>>();
        }
        if (s.event_kind == "onset") {
            s.onsets = OnsetSet(s.planted_steps.begin(), s.planted_steps.end());
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_dataset(const std::filesystem::path& out_dir, const SynthDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_manifest(out_dir / "train.manifest", ds.train, out_dir / "features");
    write_manifest(out_dir / "val.manifest", ds.val, out_dir / "features");
    write_manifest(out_dir / "test.manifest", ds.test, out_dir / "features");
}

void write_pgm(const std::filesystem::path& path, const Matrix& map) {
    const double mx = *std::max_element(map.values().begin(), map.values().end());
    const double mn = *std::min_element(map.values().begin(), map.values().end());
    const double range = (mx > mn) ? (mx - mn) : 1.0;
    atomic_write(path, [&](std::ostream& os) {
        os << "P5\n" << map.cols() << " " << map.rows() << "\n255\n";
        for (double v : map.values()) {
            os.put(static_cast<char>(
                static_cast<unsigned char>(255.0 * (v - mn) / range)));
        }
    });
}

}  // namespace avfuse
