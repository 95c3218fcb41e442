#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "avfuse/core_math.hpp"

namespace avfuse {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 160000;  // 10 s at 16 kHz
inline constexpr int kFftSize = 512;
inline constexpr int kHopLength = 160;
inline constexpr int kWinLength = 320;
inline constexpr int kMelBands = 80;
inline constexpr std::size_t kSpecFrames = 1000;
inline constexpr double kLogFloor = 1e-10;

// Mono PCM clip, fixed 10 s at 16 kHz. Shorter input is zero-padded,
// longer input truncated.
struct PcmClip {
    std::vector<double> samples;  // in [-1, 1], size kClipSamples

    static PcmClip from_samples(std::vector<double> raw);
};

// frames x mel_bands natural-log energies: ln(mel_power + 1e-10)
struct LogMelSpectrogram {
    Matrix values;  // kSpecFrames x kMelBands for a full clip
};

// per-frame spectral flux, envelope[0] == 0, all values >= 0
using OnsetEnvelope = std::vector<double>;

// sorted unique video-time-step indices in [0, T)
using OnsetSet = std::vector<std::size_t>;

struct PeakPickParams {
    int pre_max = 30;
    int post_max = 30;
    int pre_avg = 100;
    int post_avg = 100;
    int wait = 30;
    double delta = 0.07;
};

// STFT (n_fft 512, hop 160, win 320, periodic Hann, centered with reflect
// padding) -> power -> 80 triangular mel filters on 2595*log10(1+f/700),
// unit peak, spanning 0..8000 Hz -> ln(power + 1e-10).
// A 160000-sample clip yields 1001 centered frames; the last is dropped so
// the output is exactly 1000 x 80.
LogMelSpectrogram compute_logmel(const PcmClip& clip);

// Half-wave rectified first difference of log-mel values, summed over bands.
OnsetEnvelope onset_envelope(const LogMelSpectrogram& spec);

// Local-max + mean-threshold + minimum-wait peak picking, scanned left to
// right. Windows are clipped at the envelope boundaries.
std::vector<std::size_t> pick_onsets(const OnsetEnvelope& env,
                                     const PeakPickParams& params = {});

// frame -> floor(frame / frames_per_step), clamped to [0, T-1], deduplicated.
OnsetSet map_onsets_to_steps(const std::vector<std::size_t>& frames,
                             std::size_t frames_per_step, std::size_t T);

// Full pipeline: clip -> logmel -> envelope -> peaks -> steps.
OnsetSet detect_onsets(const PcmClip& clip, std::size_t T,
                       const PeakPickParams& params = {});

// Mel filterbank center frequency of band b (Hz); used by tests to locate
// the band nearest a known tone.
double mel_band_center_hz(int band);

// Single-channel WAV input, 16-bit PCM or 32-bit float, 16 kHz only.
PcmClip read_wav(const std::string& path);
// Writes 16-bit PCM mono.
void write_wav(const std::string& path, const PcmClip& clip);

}  // namespace avfuse
