#pragma once

#include <string>
#include <variant>
#include <vector>

#include "soundrep/dsp.hpp"
#include "soundrep/rng.hpp"

namespace soundrep {

// Per-op hyper-parameter ranges. Each application draws fresh values from its
// ranges, so a degenerate range pins the op (tests use this to force the
// identity point of every op).

struct RrcParams {
  double scale_lo = 0.8, scale_hi = 1.0;  // crop area fraction
  double ratio_lo = 0.9, ratio_hi = 1.1;  // aspect distortion
};

struct CompressionParams {
  double c_lo = 0.5, c_hi = 1.5;  // contrast factor about the patch mean
};

struct GaussianNoiseParams {
  double sigma_rel_lo = 0.0, sigma_rel_hi = 0.15;  // sigma relative to std(patch)
};

struct SpecAugmentParams {
  int num_f_lo = 0, num_f_hi = 2;
  int f_width_lo = 1, f_width_hi = 12;  // bands
  int num_t_lo = 0, num_t_hi = 2;
  int t_width_lo = 1, t_width_hi = 16;  // frames
};

struct TimeFreqShiftParams {
  int max_t = 10;  // frames, circular
  int max_f = 8;   // bands, circular
};

struct GaussianBlurParams {
  double sigma_lo = 0.5, sigma_hi = 1.1;
};

using AugOp = std::variant<RrcParams, CompressionParams, GaussianNoiseParams, SpecAugmentParams,
                           TimeFreqShiftParams, GaussianBlurParams>;

/// Ordered augmentation policy; order is preserved exactly as configured.
struct AugPolicy {
  std::vector<AugOp> ops;
};

TFPatch apply_rrc(const TFPatch& p, const RrcParams& params, Rng& rng);
TFPatch apply_compression(const TFPatch& p, const CompressionParams& params, Rng& rng);
TFPatch apply_noise(const TFPatch& p, const GaussianNoiseParams& params, Rng& rng);
TFPatch apply_specaugment(const TFPatch& p, const SpecAugmentParams& params, Rng& rng);
TFPatch apply_shift(const TFPatch& p, const TimeFreqShiftParams& params, Rng& rng);
TFPatch apply_blur(const TFPatch& p, const GaussianBlurParams& params, Rng& rng);

TFPatch apply_op(const TFPatch& p, const AugOp& op, Rng& rng);

/// Applies ops in listed order, each with fresh stochastic draws. The empty
/// policy is the identity.
TFPatch apply_policy(const TFPatch& p, const AugPolicy& policy, Rng& rng);

/// Crop + bilinear resize back to 96x101 (exposed for direct testing).
TFPatch rrc_crop_resize(const TFPatch& p, int crop_f, int crop_t, int off_f, int off_t);

std::string op_kind(const AugOp& op);

/// Named policies ("rrc+comp+noise" is the shipped default).
AugPolicy named_policy(const std::string& name);

}  // namespace soundrep
