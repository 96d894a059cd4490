#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "soundrep/rng.hpp"
#include "soundrep/views.hpp"

using namespace soundrep;

namespace {

LogMelSpec synthetic_spec(int frames, std::uint64_t seed = 5) {
  Rng rng(seed);
  LogMelSpec s;
  s.n_mels = 96;
  s.frames = frames;
  s.frame_hop_s = 0.01;
  s.source_id = "synthetic";
  s.values.resize(static_cast<std::size_t>(96) * frames);
  for (auto& v : s.values) v = rng.uniform(-8.0, 2.0);
  return s;
}

TFPatch random_log_patch(Rng& rng, double lo = -8.0, double hi = 2.0) {
  TFPatch p = TFPatch::filled(0.0);
  for (auto& v : p.values) v = rng.uniform(lo, hi);
  return p;
}

}  // namespace

TEST_CASE("fixed distance d=0 returns bitwise-identical patches") {
  Rng rng(1);
  const LogMelSpec spec = synthetic_spec(180);
  SamplerConfig cfg{SamplerConfig::Mode::FixedDistance, 0};
  for (int i = 0; i < 50; ++i) {
    const auto [a, b] = sample_patch_pair(spec, cfg, rng);
    CHECK(a.start_frame == b.start_frame);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("fixed distance d=125 on long clips gives disjoint patches") {
  Rng rng(2);
  SamplerConfig cfg{SamplerConfig::Mode::FixedDistance, 125};
  for (int frames : {226, 300, 420}) {
    const LogMelSpec spec = synthetic_spec(frames);
    for (int i = 0; i < 50; ++i) {
      const auto [a, b] = sample_patch_pair(spec, cfg, rng);
      CHECK(b.start_frame - a.start_frame == 125);  // no overlap since 125 >= 101
    }
  }
}

TEST_CASE("random mode on T=101 forces both starts to zero") {
  Rng rng(3);
  const LogMelSpec spec = synthetic_spec(101);
  const auto [a, b] = sample_patch_pair(spec, SamplerConfig{}, rng);
  CHECK(a.start_frame == 0);
  CHECK(b.start_frame == 0);
}

TEST_CASE("random starts are uniform (chi-squared at alpha=0.01)") {
  Rng rng(42);
  const LogMelSpec spec = synthetic_spec(301);  // starts in [0, 200]
  const int n_values = 201;
  std::vector<int> counts(static_cast<std::size_t>(n_values), 0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto [a, b] = sample_patch_pair(spec, SamplerConfig{}, rng);
    counts[static_cast<std::size_t>(a.start_frame)]++;
    counts[static_cast<std::size_t>(b.start_frame)]++;
  }
  // 20 bins over 201 values.
  const int bins = 20;
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const int lo = b * n_values / bins, hi = (b + 1) * n_values / bins;
    double observed = 0.0;
    for (int v = lo; v < hi; ++v) observed += counts[static_cast<std::size_t>(v)];
    const double expected = 2.0 * draws * (hi - lo) / n_values;
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  CHECK(chi2 < 36.19);  // chi^2_{0.99, 19}
}

TEST_CASE("patch energy") {
  SUBCASE("all-ones linear patch has energy 96*101") {
    const TFPatch ones = TFPatch::filled(1.0, PatchDomain::Linear);
    CHECK(patch_energy(ones) == doctest::Approx(9696.0).epsilon(1e-14));
  }
  SUBCASE("energy is linear in scaling") {
    Rng rng(9);
    TFPatch p = TFPatch::filled(0.0, PatchDomain::Linear);
    for (auto& v : p.values) v = rng.uniform(0.1, 3.0);
    const double e = patch_energy(p);
    TFPatch scaled = p;
    for (auto& v : scaled.values) v *= 2.5;
    CHECK(patch_energy(scaled) == doctest::Approx(2.5 * e).epsilon(1e-12));
  }
  SUBCASE("matches naive re-summation") {
    Rng rng(10);
    TFPatch p = TFPatch::filled(0.0, PatchDomain::Linear);
    for (auto& v : p.values) v = rng.uniform(1e-6, 100.0);
    double naive = 0.0;
    for (int m = 0; m < 96; ++m) {
      for (int t = 0; t < 101; ++t) naive += p.at(m, t);
    }
    CHECK(std::abs(patch_energy(p) - naive) <= 1e-12 * naive);
  }
  SUBCASE("log-domain input is rejected") {
    CHECK_THROWS_AS(patch_energy(TFPatch::filled(0.0, PatchDomain::Log)), DomainError);
  }
}

TEST_CASE("mixback at lambda=0 is the identity") {
  Rng rng(20);
  const TFPatch x = random_log_patch(rng);
  TFPatch b = random_log_patch(rng);
  b = to_linear(b);
  const TFPatch out = mixback_with_lambda(x, b, 0.0, true);
  for (int i = 0; i < TFPatch::kCells; ++i) {
    CHECK(std::abs(out.values[static_cast<std::size_t>(i)] - x.values[static_cast<std::size_t>(i)]) <=
          1e-6 * std::max(1.0, std::abs(x.values[static_cast<std::size_t>(i)])));
  }
}

TEST_CASE("mixback with the patch as its own background is the identity") {
  Rng rng(21);
  const TFPatch x = random_log_patch(rng);
  const TFPatch b = to_linear(x);
  for (double lambda : {0.01, 0.1, 0.5, 0.99}) {
    const TFPatch out = mixback_with_lambda(x, b, lambda, true);
    for (int i = 0; i < TFPatch::kCells; ++i) {
      CHECK(std::abs(out.values[static_cast<std::size_t>(i)] - x.values[static_cast<std::size_t>(i)]) <=
            1e-9 * std::max(1.0, std::abs(x.values[static_cast<std::size_t>(i)])));
    }
  }
}

TEST_CASE("hand-evaluated mix: x_lin=1, b=2, lambda=0.1, adjusted") {
  const TFPatch x = TFPatch::filled(0.0);  // linear 1 everywhere
  const TFPatch b = TFPatch::filled(2.0, PatchDomain::Linear);
  const TFPatch out = mixback_with_lambda(x, b, 0.1, true);
  // E(x)/E(b) = 0.5, so out_lin = 0.9*1 + 0.1*0.5*2 = 1.0 -> log 0.
  for (double v : out.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("energy conservation and background share under adjustment") {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const TFPatch x = random_log_patch(rng);
    TFPatch b_log = random_log_patch(rng);
    const TFPatch b = to_linear(b_log);
    const double lambda = rng.uniform(0.0, 0.2);

    const TFPatch x_lin = to_linear(x);
    const double ex = patch_energy(x_lin);
    const double eb = patch_energy(b);

    const TFPatch out = mixback_with_lambda(x, b, lambda, true);
    const double eout = patch_energy(to_linear(out));
    CHECK(std::abs(eout - ex) <= 1e-6 * ex);

    // Background term energy share equals lambda.
    const double bg_energy = lambda * (ex / eb) * eb;
    CHECK(bg_energy / eout == doctest::Approx(lambda).epsilon(1e-9));
  }
}

TEST_CASE("without adjustment a loud background can dominate") {
  Rng rng(23);
  const TFPatch x = random_log_patch(rng, -4.0, 0.0);
  const TFPatch x_lin = to_linear(x);
  const double ex = patch_energy(x_lin);

  // Scale a background to 1e4 times the foreground energy.
  TFPatch b = to_linear(random_log_patch(rng, -4.0, 0.0));
  const double scale = 1e4 * ex / patch_energy(b);
  for (auto& v : b.values) v *= scale;

  const double lambda = 0.1;
  const TFPatch out = mixback_with_lambda(x, b, lambda, false);
  const double eout = patch_energy(to_linear(out));
  const double bg_share = lambda * patch_energy(b) / eout;
  CHECK(bg_share > 0.5);
}

TEST_CASE("disabled mixback passes through and reports lambda 0") {
  Rng rng(24);
  const TFPatch x = random_log_patch(rng);
  const TFPatch b = to_linear(random_log_patch(rng));
  MixbackConfig cfg;
  cfg.enabled = false;
  double lambda = -1.0;
  const TFPatch out = mixback(x, b, cfg, rng, &lambda);
  CHECK(lambda == 0.0);
  CHECK(out.values == x.values);
}

TEST_CASE("sampled lambda stays below alpha") {
  Rng rng(25);
  const TFPatch x = random_log_patch(rng);
  const TFPatch b = to_linear(random_log_patch(rng));
  MixbackConfig cfg;
  cfg.alpha = 0.05;
  for (int i = 0; i < 200; ++i) {
    double lambda = -1.0;
    mixback(x, b, cfg, rng, &lambda);
    CHECK(lambda >= 0.0);
    CHECK(lambda < 0.05);
  }
}
