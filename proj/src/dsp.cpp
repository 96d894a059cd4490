#include "soundrep/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace soundrep {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

// Blackman window on [-1, 1].
double blackman(double x) {
  if (std::abs(x) >= 1.0) return 0.0;
  return 0.42 + 0.5 * std::cos(kPi * x) + 0.08 * std::cos(2.0 * kPi * x);
}

/// Triangular mel filterbank, HTK scale, peak 1. Returned as a dense
/// [n_mels x (n_fft/2+1)] row-major matrix.
std::vector<double> mel_filterbank(const FrontendConfig& cfg) {
  const int bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.n_mels + 1);
    edges[i] = mel_to_hz(mel);
  }
  std::vector<double> fb(static_cast<std::size_t>(cfg.n_mels) * bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double f_lo = edges[m], f_c = edges[m + 1], f_hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > f_lo && f < f_hi) {
        w = (f <= f_c) ? (f - f_lo) / (f_c - f_lo) : (f_hi - f) / (f_hi - f_c);
      }
      fb[static_cast<std::size_t>(m) * bins + k] = w;
    }
  }
  return fb;
}

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

AudioClip resample(const AudioClip& clip, int target_hz) {
  if (target_hz <= 0) throw ConfigError("resample: target rate must be positive");
  if (clip.sample_rate == target_hz) return clip;

  const double ratio = static_cast<double>(clip.sample_rate) / target_hz;  // input samples / output sample
  const double cutoff = std::min(1.0, 1.0 / ratio);  // relative to input Nyquist
  constexpr int kZeroCrossings = 32;
  const double half_width = kZeroCrossings / cutoff;

  const std::int64_t n_in = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t n_out =
      std::llround(static_cast<double>(n_in) * target_hz / clip.sample_rate);

  AudioClip out;
  out.sample_rate = target_hz;
  out.source_id = clip.source_id;
  out.samples.resize(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 1)));

  for (std::int64_t n = 0; n < static_cast<std::int64_t>(out.samples.size()); ++n) {
    const double center = static_cast<double>(n) * ratio;
    const std::int64_t k_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(center - half_width)));
    const std::int64_t k_hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
      const double t = static_cast<double>(k) - center;
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * t) *
             blackman(t / half_width);
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

LogMelSpec logmel(const AudioClip& clip, const FrontendConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw ConfigError("logmel: clip rate " + std::to_string(clip.sample_rate) +
                      " != pipeline rate " + std::to_string(cfg.sample_rate));
  }
  if (clip.samples.empty()) throw ConfigError("logmel: empty clip");

  const int n_fft = cfg.n_fft;
  const int bins = n_fft / 2 + 1;
  const std::int64_t n = static_cast<std::int64_t>(clip.samples.size());
  const int frames = 1 + static_cast<int>(n / cfg.hop_length);

  // Centered framing: pad n_fft/2 zeros on both sides, frame t starts at
  // t*hop in the padded signal.
  std::vector<double> padded(static_cast<std::size_t>(n) + n_fft, 0.0);
  std::copy(clip.samples.begin(), clip.samples.end(), padded.begin() + n_fft / 2);

  // Periodic Hann window, centered in the FFT buffer.
  std::vector<double> window(static_cast<std::size_t>(cfg.win_length));
  for (int i = 0; i < cfg.win_length; ++i) {
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.win_length);
  }
  const int win_offset = (n_fft - cfg.win_length) / 2;

  std::vector<double> fft_in(static_cast<std::size_t>(n_fft));
  std::vector<fftw_complex> fft_out(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());  // planner is not thread-safe
    plan = fftw_plan_dft_r2c_1d(n_fft, fft_in.data(), fft_out.data(), FFTW_ESTIMATE);
  }

  const std::vector<double> fb = mel_filterbank(cfg);

  LogMelSpec spec;
  spec.n_mels = cfg.n_mels;
  spec.frames = frames;
  spec.frame_hop_s = static_cast<double>(cfg.hop_length) / cfg.sample_rate;
  spec.source_id = clip.source_id;
  spec.values.assign(static_cast<std::size_t>(cfg.n_mels) * frames, 0.0);

  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int t = 0; t < frames; ++t) {
    std::fill(fft_in.begin(), fft_in.end(), 0.0);
    // The window is centered on sample t*hop of the original signal.
    const std::int64_t frame_start = static_cast<std::int64_t>(t) * cfg.hop_length + n_fft / 2 -
                                     cfg.win_length / 2;
    for (int i = 0; i < cfg.win_length; ++i) {
      const std::int64_t src = frame_start + i;
      if (src >= 0 && src < static_cast<std::int64_t>(padded.size())) {
        fft_in[static_cast<std::size_t>(win_offset + i)] =
            padded[static_cast<std::size_t>(src)] * window[static_cast<std::size_t>(i)];
      }
    }
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) {
      power[static_cast<std::size_t>(k)] =
          fft_out[static_cast<std::size_t>(k)][0] * fft_out[static_cast<std::size_t>(k)][0] +
          fft_out[static_cast<std::size_t>(k)][1] * fft_out[static_cast<std::size_t>(k)][1];
    }
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* w = fb.data() + static_cast<std::size_t>(m) * bins;
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) acc += w[k] * power[static_cast<std::size_t>(k)];
      spec.at(m, t) = std::log(std::max(acc, cfg.power_floor));
    }
  }

  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  return spec;
}

LogMelSpec replicate_to_min_frames(const LogMelSpec& spec, int min_frames) {
  if (spec.frames >= min_frames) return spec;
  LogMelSpec out;
  out.n_mels = spec.n_mels;
  out.frames = min_frames;
  out.frame_hop_s = spec.frame_hop_s;
  out.source_id = spec.source_id;
  out.values.resize(static_cast<std::size_t>(spec.n_mels) * min_frames);
  for (int m = 0; m < spec.n_mels; ++m) {
    for (int t = 0; t < min_frames; ++t) {
      out.at(m, t) = spec.at(m, t % spec.frames);
    }
  }
  return out;
}

TFPatch patch_at(const LogMelSpec& spec, int start_frame) {
  if (spec.n_mels != TFPatch::kBands) {
    throw ConfigError("patch_at: spectrogram has " + std::to_string(spec.n_mels) + " bands");
  }
  if (start_frame < 0 || start_frame + TFPatch::kFrames > spec.frames) {
    throw ConfigError("patch_at: window out of range");
  }
  TFPatch p;
  p.values.resize(TFPatch::kCells);
  p.domain = PatchDomain::Log;
  p.source_id = spec.source_id;
  p.start_frame = start_frame;
  for (int m = 0; m < TFPatch::kBands; ++m) {
    const double* row = spec.values.data() + static_cast<std::size_t>(m) * spec.frames + start_frame;
    std::copy(row, row + TFPatch::kFrames, p.values.begin() + static_cast<std::size_t>(m) * TFPatch::kFrames);
  }
  return p;
}

std::vector<TFPatch> extract_patches(const LogMelSpec& spec, PatchMode mode, Rng* rng) {
  LogMelSpec replicated;
  if (spec.frames < TFPatch::kFrames) replicated = replicate_to_min_frames(spec);
  const LogMelSpec& src = spec.frames >= TFPatch::kFrames ? spec : replicated;

  std::vector<TFPatch> out;
  const int max_start = src.frames - TFPatch::kFrames;
  if (mode == PatchMode::TrainRandom) {
    if (rng == nullptr) throw ConfigError("extract_patches: TrainRandom requires an rng");
    const int start = max_start == 0 ? 0 : static_cast<int>(rng->uniform_int(0, max_start));
    out.push_back(patch_at(src, start));
  } else {
    const int full = src.frames / TFPatch::kFrames;
    for (int i = 0; i < full; ++i) out.push_back(patch_at(src, i * TFPatch::kFrames));
    if (src.frames % TFPatch::kFrames != 0) out.push_back(patch_at(src, max_start));
  }
  return out;
}

TFPatch to_linear(const TFPatch& p) {
  if (p.domain != PatchDomain::Log) throw DomainError("to_linear: patch already linear");
  TFPatch out = p;
  out.domain = PatchDomain::Linear;
  for (double& v : out.values) v = std::exp(v);
  return out;
}

TFPatch to_log(const TFPatch& p) {
  if (p.domain != PatchDomain::Linear) throw DomainError("to_log: patch already log");
  TFPatch out = p;
  out.domain = PatchDomain::Log;
  for (double& v : out.values) {
    if (v <= 0.0) throw DomainError("to_log: non-positive linear value");
    v = std::log(v);
  }
  return out;
}

}  // namespace soundrep
