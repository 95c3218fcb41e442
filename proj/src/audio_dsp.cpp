#include "avfuse/audio_dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "avfuse/errors.hpp"

namespace avfuse {

PcmClip PcmClip::from_samples(std::vector<double> raw) {
    raw.resize(kClipSamples, 0.0);
    for (double& s : raw) s = std::clamp(s, -1.0, 1.0);
    return PcmClip{std::move(raw)};
}

namespace {

// In-place iterative radix-2 FFT; n must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// 80 triangular unit-peak filters over the 257 rfft bins, corners equally
// spaced on the mel scale from 0 Hz to Nyquist.
std::vector<std::vector<double>> mel_filterbank() {
    const int bins = kFftSize / 2 + 1;
    const double nyquist = kSampleRate / 2.0;
    std::vector<double> corners(kMelBands + 2);
    const double mel_hi = hz_to_mel(nyquist);
    for (int i = 0; i < kMelBands + 2; ++i) {
        corners[i] = mel_to_hz(mel_hi * i / (kMelBands + 1));
    }
    std::vector<std::vector<double>> bank(kMelBands, std::vector<double>(bins, 0.0));
    for (int b = 0; b < kMelBands; ++b) {
        double lo = corners[b], mid = corners[b + 1], hi = corners[b + 2];
        for (int k = 0; k < bins; ++k) {
            double f = k * static_cast<double>(kSampleRate) / kFftSize;
            double w = 0.0;
            if (f > lo && f < hi) {
                w = (f <= mid) ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
            }
            bank[b][k] = w;
        }
    }
    return bank;
}

double reflect_sample(const std::vector<double>& x, long long i) {
    const long long n = static_cast<long long>(x.size());
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return x[static_cast<std::size_t>(i)];
}

}  // namespace

double mel_band_center_hz(int band) {
    const double mel_hi = hz_to_mel(kSampleRate / 2.0);
    return mel_to_hz(mel_hi * (band + 1) / (kMelBands + 1));
}

LogMelSpectrogram compute_logmel(const PcmClip& clip) {
    if (clip.samples.size() != kClipSamples) {
        throw std::invalid_argument("compute_logmel: clip must hold 160000 samples");
    }
    // periodic Hann of length 320, centered in the 512-point frame
    std::vector<double> window(kFftSize, 0.0);
    const int off = (kFftSize - kWinLength) / 2;
    for (int n = 0; n < kWinLength; ++n) {
        window[off + n] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / kWinLength));
    }
    static const auto bank = mel_filterbank();

    Matrix out(kSpecFrames, kMelBands);
    std::vector<std::complex<double>> frame(kFftSize);
    std::vector<double> power(kFftSize / 2 + 1);
    for (std::size_t t = 0; t < kSpecFrames; ++t) {
        const long long start =
            static_cast<long long>(t) * kHopLength - kFftSize / 2;
        for (int n = 0; n < kFftSize; ++n) {
            frame[n] = reflect_sample(clip.samples, start + n) * window[n];
        }
        fft(frame);
        for (int k = 0; k <= kFftSize / 2; ++k) power[k] = std::norm(frame[k]);
        for (int b = 0; b < kMelBands; ++b) {
            double e = 0.0;
            for (int k = 0; k <= kFftSize / 2; ++k) e += bank[b][k] * power[k];
            out.at(t, b) = std::log(e + kLogFloor);
        }
    }
    return LogMelSpectrogram{std::move(out)};
}

OnsetEnvelope onset_envelope(const LogMelSpectrogram& spec) {
    const auto& m = spec.values;
    OnsetEnvelope env(m.rows(), 0.0);
    for (std::size_t t = 1; t < m.rows(); ++t) {
        double s = 0.0;
        for (std::size_t b = 0; b < m.cols(); ++b) {
            s += std::max(0.0, m.at(t, b) - m.at(t - 1, b));
        }
        env[t] = s;
    }
    return env;
}

std::vector<std::size_t> pick_onsets(const OnsetEnvelope& env,
                                     const PeakPickParams& p) {
    std::vector<std::size_t> picks;
    const long long n = static_cast<long long>(env.size());
    long long last = -1;
    for (long long t = 0; t < n; ++t) {
        long long a = std::max<long long>(0, t - p.pre_max);
        long long b = std::min(n - 1, t + p.post_max);
        double mx = env[a];
        for (long long i = a + 1; i <= b; ++i) mx = std::max(mx, env[i]);
        if (env[t] < mx) continue;

        long long c = std::max<long long>(0, t - p.pre_avg);
        long long d = std::min(n - 1, t + p.post_avg);
        double mean = 0.0;
        for (long long i = c; i <= d; ++i) mean += env[i];
        mean /= static_cast<double>(d - c + 1);
        if (env[t] < mean + p.delta) continue;

        if (last >= 0 && t - last < p.wait) continue;
        picks.push_back(static_cast<std::size_t>(t));
        last = t;
    }
    return picks;
}

OnsetSet map_onsets_to_steps(const std::vector<std::size_t>& frames,
                             std::size_t frames_per_step, std::size_t T) {
    if (frames_per_step == 0) {
        throw std::invalid_argument("map_onsets_to_steps: frames_per_step must be >= 1");
    }
    OnsetSet steps;
    for (std::size_t f : frames) {
        std::size_t s = std::min(f / frames_per_step, T - 1);
        if (steps.empty() || steps.back() != s) steps.push_back(s);
    }
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
}

OnsetSet detect_onsets(const PcmClip& clip, std::size_t T,
                       const PeakPickParams& params) {
    auto spec = compute_logmel(clip);
    auto env = onset_envelope(spec);
    auto frames = pick_onsets(env, params);
    return map_onsets_to_steps(frames, spec.values.rows() / T, T);
}

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (p[1] << 8) | (p[2] << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

PcmClip read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("read_wav: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
        throw format_error("read_wav: not a RIFF/WAVE file");
    }
    std::uint16_t fmt_code = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const unsigned char* hdr = buf.data() + pos;
        std::uint32_t len = rd_u32(hdr + 4);
        const unsigned char* body = hdr + 8;
        if (pos + 8 + len > buf.size()) throw format_error("read_wav: truncated chunk");
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (len < 16) throw format_error("read_wav: short fmt chunk");
            fmt_code = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);
    }
    if (!data || fmt_code == 0) throw format_error("read_wav: missing fmt/data chunk");
    if (channels != 1) throw std::invalid_argument("read_wav: expected mono audio");
    if (rate != kSampleRate) {
        throw std::invalid_argument("read_wav: expected 16 kHz sample rate");
    }
    std::vector<double> samples;
    if (fmt_code == 1 && bits == 16) {
        samples.reserve(data_len / 2);
        for (std::uint32_t i = 0; i + 1 < data_len; i += 2) {
            std::int16_t v =
                static_cast<std::int16_t>(data[i] | (data[i + 1] << 8));
            samples.push_back(v / 32768.0);
        }
    } else if (fmt_code == 3 && bits == 32) {
        samples.reserve(data_len / 4);
        for (std::uint32_t i = 0; i + 3 < data_len; i += 4) {
            float v;
            std::memcpy(&v, data + i, 4);
            samples.push_back(v);
        }
    } else {
        throw format_error("read_wav: unsupported encoding (need PCM16 or float32)");
    }
    return PcmClip::from_samples(std::move(samples));
}

void write_wav(const std::string& path, const PcmClip& clip) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("write_wav: cannot open " + path);
    auto w_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto w_u16 = [&](std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    };
    const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
    f.write("RIFF", 4);
    w_u32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    w_u32(16);
    w_u16(1);  // PCM
    w_u16(1);  // mono
    w_u32(kSampleRate);
    w_u32(kSampleRate * 2);
    w_u16(2);
    w_u16(16);
    f.write("data", 4);
    w_u32(data_len);
    for (double s : clip.samples) {
        double v = std::clamp(s, -1.0, 1.0) * 32767.0;
        auto q = static_cast<std::int16_t>(std::lround(v));
        unsigned char b[2] = {static_cast<unsigned char>(q & 0xff),
                              static_cast<unsigned char>((q >> 8) & 0xff)};
        f.write(reinterpret_cast<char*>(b), 2);
    }
    if (!f) throw io_error("write_wav: write failed for " + path);
}

}  // namespace avfuse
