#pragma once

#include <string>
#include <vector>

#include "soundrep/errors.hpp"
#include "soundrep/rng.hpp"
#include "soundrep/wav.hpp"

namespace soundrep {

/// Feature extraction parameters. Defaults give exactly 101 frames per 1.0 s
/// of audio at 22050 Hz (hop 220 samples with centered framing).
struct FrontendConfig {
  int sample_rate = 22050;
  int win_length = 551;  // ~25 ms
  int hop_length = 220;  // ~10 ms
  int n_fft = 1024;
  int n_mels = 96;
  double fmin = 0.0;
  double fmax = 11025.0;
  double power_floor = 1e-10;  // clamp before the natural log
};

/// A clip's mel spectrogram, natural-log power domain, row-major [n_mels x frames].
struct LogMelSpec {
  std::vector<double> values;
  int n_mels = 0;
  int frames = 0;
  double frame_hop_s = 0.0;
  std::string source_id;

  double at(int band, int frame) const { return values[static_cast<std::size_t>(band) * frames + frame]; }
  double& at(int band, int frame) { return values[static_cast<std::size_t>(band) * frames + frame]; }
};

enum class PatchDomain { Log, Linear };

/// Fixed-size time-frequency view, 96 bands x 101 frames. The log/linear
/// domain is tracked explicitly so energy math cannot be applied to log values.
struct TFPatch {
  static constexpr int kBands = 96;
  static constexpr int kFrames = 101;
  static constexpr int kCells = kBands * kFrames;

  std::vector<double> values;  // row-major [kBands x kFrames]
  PatchDomain domain = PatchDomain::Log;
  std::string source_id;
  int start_frame = 0;

  static TFPatch filled(double v, PatchDomain d = PatchDomain::Log) {
    TFPatch p;
    p.values.assign(kCells, v);
    p.domain = d;
    return p;
  }
  double at(int band, int frame) const { return values[static_cast<std::size_t>(band) * kFrames + frame]; }
  double& at(int band, int frame) { return values[static_cast<std::size_t>(band) * kFrames + frame]; }
};

enum class PatchMode { TrainRandom, EvalGrid };

// HTK-style mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Band-limited sample rate conversion (windowed-sinc). Identity when the
/// rates already match.
AudioClip resample(const AudioClip& clip, int target_hz);

/// 96-band log-mel spectrogram: centered STFT -> power -> mel filterbank ->
/// clamp at cfg.power_floor -> natural log. A 1.0 s clip yields 101 frames.
LogMelSpec logmel(const AudioClip& clip, const FrontendConfig& cfg);

/// Tiles the spectrogram along time until it spans at least `min_frames`.
LogMelSpec replicate_to_min_frames(const LogMelSpec& spec, int min_frames = TFPatch::kFrames);

/// Cuts the 101-frame patch starting at `start_frame` (spec must be long enough).
TFPatch patch_at(const LogMelSpec& spec, int start_frame);

/// TrainRandom: one uniformly positioned patch (rng required).
/// EvalGrid: consecutive non-overlapping windows plus a final flush window
/// against the clip end. Short clips are replicated first.
std::vector<TFPatch> extract_patches(const LogMelSpec& spec, PatchMode mode, Rng* rng = nullptr);

TFPatch to_linear(const TFPatch& p);
TFPatch to_log(const TFPatch& p);

}  // namespace soundrep
