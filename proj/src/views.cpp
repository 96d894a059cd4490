#include "soundrep/views.hpp"

#include <algorithm>
#include <cmath>

namespace soundrep {

std::pair<TFPatch, TFPatch> sample_patch_pair(const LogMelSpec& spec, const SamplerConfig& cfg,
                                              Rng& rng) {
  if (spec.frames < TFPatch::kFrames) {
    throw ConfigError("sample_patch_pair: spectrogram must be replicated to >= 101 frames");
  }
  const int max_start = spec.frames - TFPatch::kFrames;

  int start_a, start_b;
  if (cfg.mode == SamplerConfig::Mode::Random) {
    start_a = max_start == 0 ? 0 : static_cast<int>(rng.uniform_int(0, max_start));
    start_b = max_start == 0 ? 0 : static_cast<int>(rng.uniform_int(0, max_start));
  } else {
    if (cfg.distance < 0) throw ConfigError("sampler.distance: must be >= 0");
    // The first start is confined so the full distance fits whenever the clip
    // allows it; on short clips the distance is bounded by the clip length.
    const int first_max = std::max(0, max_start - cfg.distance);
    start_a = first_max == 0 ? 0 : static_cast<int>(rng.uniform_int(0, first_max));
    start_b = std::clamp(start_a + cfg.distance, 0, max_start);
  }
  return {patch_at(spec, start_a), patch_at(spec, start_b)};
}

double patch_energy(const TFPatch& p) {
  if (p.domain != PatchDomain::Linear) {
    throw DomainError("patch_energy: requires a linear-domain patch");
  }
  double e = 0.0;
  for (double v : p.values) e += v;
  return e;
}

TFPatch mixback_with_lambda(const TFPatch& x_log, const TFPatch& b_linear, double lambda,
                            bool energy_adjust) {
  if (x_log.domain != PatchDomain::Log) throw DomainError("mixback: foreground must be log domain");
  if (b_linear.domain != PatchDomain::Linear) {
    throw DomainError("mixback: background must be linear domain");
  }

  TFPatch x_lin = to_linear(x_log);
  const double scale =
      energy_adjust ? patch_energy(x_lin) / patch_energy(b_linear) : 1.0;
  for (int i = 0; i < TFPatch::kCells; ++i) {
    x_lin.values[static_cast<std::size_t>(i)] =
        (1.0 - lambda) * x_lin.values[static_cast<std::size_t>(i)] +
        lambda * scale * b_linear.values[static_cast<std::size_t>(i)];
  }
  TFPatch out = to_log(x_lin);
  out.source_id = x_log.source_id;
  out.start_frame = x_log.start_frame;
  return out;
}

TFPatch mixback(const TFPatch& x_log, const TFPatch& b_linear, const MixbackConfig& cfg, Rng& rng,
                double* lambda_out) {
  if (!cfg.enabled) {
    if (lambda_out) *lambda_out = 0.0;
    return x_log;
  }
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("mixback.alpha: must be in [0, 1]");
  const double lambda = cfg.alpha == 0.0 ? 0.0 : rng.uniform(0.0, cfg.alpha);
  if (lambda_out) *lambda_out = lambda;
  return mixback_with_lambda(x_log, b_linear, lambda, cfg.energy_adjust);
}

}  // namespace soundrep
