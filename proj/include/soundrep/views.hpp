#pragma once

#include <string>
#include <utility>

#include "soundrep/dsp.hpp"
#include "soundrep/rng.hpp"

namespace soundrep {

/// How the two positive patches are drawn from a clip.
struct SamplerConfig {
  enum class Mode { Random, FixedDistance };
  Mode mode = Mode::Random;
  int distance = 0;  // frames; only used by FixedDistance
};

struct MixbackConfig {
  bool enabled = true;
  double alpha = 0.05;  // lambda ~ U[0, alpha)
  bool energy_adjust = true;
};

struct ViewProvenance {
  int start_a = 0;
  int start_b = 0;
  std::string background_a;
  std::string background_b;
  double lambda_a = 0.0;
  double lambda_b = 0.0;
};

struct ViewPair {
  TFPatch view_a;
  TFPatch view_b;
  ViewProvenance provenance;
};

/// Draws the two patch positions. Random mode: both starts i.i.d. uniform over
/// [0, T-101]. FixedDistance: first start uniform, second = first + d clamped
/// into range (d = 0 yields bitwise-identical patches).
std::pair<TFPatch, TFPatch> sample_patch_pair(const LogMelSpec& spec, const SamplerConfig& cfg,
                                              Rng& rng);

/// E(p): sum of all linear (power) cells. Requires linear domain.
double patch_energy(const TFPatch& p);

/// Mixes a log-domain patch with a linear-domain background:
///   out_lin = (1-lambda) * x_lin + lambda * [E(x)/E(b)] * b      (energy_adjust)
///   out_lin = (1-lambda) * x_lin + lambda * b                    (otherwise)
/// with lambda ~ U[0, alpha). Disabled config passes the patch through
/// untouched. The drawn lambda is reported via lambda_out.
TFPatch mixback(const TFPatch& x_log, const TFPatch& b_linear, const MixbackConfig& cfg, Rng& rng,
                double* lambda_out = nullptr);

/// Deterministic variant used by tests and by the invariant suite.
TFPatch mixback_with_lambda(const TFPatch& x_log, const TFPatch& b_linear, double lambda,
                            bool energy_adjust);

}  // namespace soundrep
