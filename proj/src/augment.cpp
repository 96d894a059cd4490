#include "soundrep/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace soundrep {

namespace {

constexpr int kF = TFPatch::kBands;
constexpr int kT = TFPatch::kFrames;

double patch_mean(const TFPatch& p) {
  double s = std::accumulate(p.values.begin(), p.values.end(), 0.0);
  return s / TFPatch::kCells;
}

double patch_std(const TFPatch& p) {
  const double m = patch_mean(p);
  double acc = 0.0;
  for (double v : p.values) acc += (v - m) * (v - m);
  return std::sqrt(acc / TFPatch::kCells);
}

// Mirror reflection without edge repetition: -1 -> 1, n -> n-2.
int reflect(int idx, int n) {
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * n - 2 - idx;
  }
  return idx;
}

}  // namespace

TFPatch rrc_crop_resize(const TFPatch& p, int crop_f, int crop_t, int off_f, int off_t) {
  if (crop_f < 1 || crop_t < 1 || off_f < 0 || off_t < 0 || off_f + crop_f > kF ||
      off_t + crop_t > kT) {
    throw ConfigError("rrc: crop rectangle out of range");
  }
  TFPatch out = p;
  // Bilinear resize of the crop back to full size, align-corners mapping so a
  // full-size crop reproduces the input exactly.
  const double step_f = crop_f > 1 ? static_cast<double>(crop_f - 1) / (kF - 1) : 0.0;
  const double step_t = crop_t > 1 ? static_cast<double>(crop_t - 1) / (kT - 1) : 0.0;
  for (int f = 0; f < kF; ++f) {
    const double sf = f * step_f;
    const int f0 = static_cast<int>(sf);
    const int f1 = std::min(f0 + 1, crop_f - 1);
    const double wf = sf - f0;
    for (int t = 0; t < kT; ++t) {
      const double st = t * step_t;
      const int t0 = static_cast<int>(st);
      const int t1 = std::min(t0 + 1, crop_t - 1);
      const double wt = st - t0;
      const double v00 = p.at(off_f + f0, off_t + t0);
      const double v01 = p.at(off_f + f0, off_t + t1);
      const double v10 = p.at(off_f + f1, off_t + t0);
      const double v11 = p.at(off_f + f1, off_t + t1);
      out.at(f, t) = (1.0 - wf) * ((1.0 - wt) * v00 + wt * v01) +
                     wf * ((1.0 - wt) * v10 + wt * v11);
    }
  }
  return out;
}

TFPatch apply_rrc(const TFPatch& p, const RrcParams& params, Rng& rng) {
  const double scale = rng.uniform(params.scale_lo, params.scale_hi);
  const double ratio = rng.uniform(params.ratio_lo, params.ratio_hi);
  const int crop_f = std::clamp(static_cast<int>(std::lround(kF * std::sqrt(scale / ratio))), 1, kF);
  const int crop_t = std::clamp(static_cast<int>(std::lround(kT * std::sqrt(scale * ratio))), 1, kT);
  const int off_f = crop_f == kF ? 0 : static_cast<int>(rng.uniform_int(0, kF - crop_f));
  const int off_t = crop_t == kT ? 0 : static_cast<int>(rng.uniform_int(0, kT - crop_t));
  return rrc_crop_resize(p, crop_f, crop_t, off_f, off_t);
}

TFPatch apply_compression(const TFPatch& p, const CompressionParams& params, Rng& rng) {
  const double c = rng.uniform(params.c_lo, params.c_hi);
  const double m = patch_mean(p);
  TFPatch out = p;
  for (double& v : out.values) v = m + c * (v - m);
  return out;
}

TFPatch apply_noise(const TFPatch& p, const GaussianNoiseParams& params, Rng& rng) {
  const double sigma_rel = rng.uniform(params.sigma_rel_lo, params.sigma_rel_hi);
  const double sigma = sigma_rel * patch_std(p);
  if (sigma == 0.0) return p;
  TFPatch out = p;
  for (double& v : out.values) v += sigma * rng.normal();
  return out;
}

TFPatch apply_specaugment(const TFPatch& p, const SpecAugmentParams& params, Rng& rng) {
  const double fill = patch_mean(p);
  TFPatch out = p;
  const int num_f = static_cast<int>(rng.uniform_int(params.num_f_lo, params.num_f_hi));
  for (int i = 0; i < num_f; ++i) {
    const int w = std::min(static_cast<int>(rng.uniform_int(params.f_width_lo, params.f_width_hi)), kF);
    const int start = static_cast<int>(rng.uniform_int(0, kF - w));
    for (int f = start; f < start + w; ++f) {
      for (int t = 0; t < kT; ++t) out.at(f, t) = fill;
    }
  }
  const int num_t = static_cast<int>(rng.uniform_int(params.num_t_lo, params.num_t_hi));
  for (int i = 0; i < num_t; ++i) {
    const int w = std::min(static_cast<int>(rng.uniform_int(params.t_width_lo, params.t_width_hi)), kT);
    const int start = static_cast<int>(rng.uniform_int(0, kT - w));
    for (int f = 0; f < kF; ++f) {
      for (int t = start; t < start + w; ++t) out.at(f, t) = fill;
    }
  }
  return out;
}

TFPatch apply_shift(const TFPatch& p, const TimeFreqShiftParams& params, Rng& rng) {
  const int dt = static_cast<int>(rng.uniform_int(-params.max_t, params.max_t));
  const int df = static_cast<int>(rng.uniform_int(-params.max_f, params.max_f));
  if (dt == 0 && df == 0) return p;
  TFPatch out = p;
  for (int f = 0; f < kF; ++f) {
    const int src_f = ((f - df) % kF + kF) % kF;
    for (int t = 0; t < kT; ++t) {
      const int src_t = ((t - dt) % kT + kT) % kT;
      out.at(f, t) = p.at(src_f, src_t);
    }
  }
  return out;
}

TFPatch apply_blur(const TFPatch& p, const GaussianBlurParams& params, Rng& rng) {
  const double sigma = rng.uniform(params.sigma_lo, params.sigma_hi);
  if (sigma < 0.05) return p;  // identity limit

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  // Separable convolution with reflected boundaries.
  TFPatch tmp = p;
  for (int f = 0; f < kF; ++f) {
    for (int t = 0; t < kT; ++t) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] * p.at(f, reflect(t + i, kT));
      }
      tmp.at(f, t) = acc;
    }
  }
  TFPatch out = tmp;
  for (int f = 0; f < kF; ++f) {
    for (int t = 0; t < kT; ++t) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(reflect(f + i, kF), t);
      }
      out.at(f, t) = acc;
    }
  }
  return out;
}

TFPatch apply_op(const TFPatch& p, const AugOp& op, Rng& rng) {
  return std::visit(
      [&](const auto& params) -> TFPatch {
        using P = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<P, RrcParams>) return apply_rrc(p, params, rng);
        else if constexpr (std::is_same_v<P, CompressionParams>) return apply_compression(p, params, rng);
        else if constexpr (std::is_same_v<P, GaussianNoiseParams>) return apply_noise(p, params, rng);
        else if constexpr (std::is_same_v<P, SpecAugmentParams>) return apply_specaugment(p, params, rng);
        else if constexpr (std::is_same_v<P, TimeFreqShiftParams>) return apply_shift(p, params, rng);
        else return apply_blur(p, params, rng);
      },
      op);
}

TFPatch apply_policy(const TFPatch& p, const AugPolicy& policy, Rng& rng) {
  TFPatch out = p;
  for (const AugOp& op : policy.ops) out = apply_op(out, op, rng);
  return out;
}

std::string op_kind(const AugOp& op) {
  return std::visit(
      [](const auto& params) -> std::string {
        using P = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<P, RrcParams>) return "rrc";
        else if constexpr (std::is_same_v<P, CompressionParams>) return "compression";
        else if constexpr (std::is_same_v<P, GaussianNoiseParams>) return "gaussian_noise";
        else if constexpr (std::is_same_v<P, SpecAugmentParams>) return "specaugment";
        else if constexpr (std::is_same_v<P, TimeFreqShiftParams>) return "time_freq_shift";
        else return "gaussian_blur";
      },
      op);
}

AugPolicy named_policy(const std::string& name) {
  if (name == "none") return {};
  if (name == "rrc") return {{RrcParams{}}};
  if (name == "specaugment") return {{SpecAugmentParams{}}};
  if (name == "rrc+comp") return {{RrcParams{}, CompressionParams{}}};
  if (name == "rrc+comp+noise") return {{RrcParams{}, CompressionParams{}, GaussianNoiseParams{}}};
  if (name == "rrc+specaugment") return {{RrcParams{}, SpecAugmentParams{}}};
  throw ConfigError("policy: unknown name '" + name + "'");
}

}  // namespace soundrep
