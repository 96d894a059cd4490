#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "soundrep/augment.hpp"
#include "soundrep/rng.hpp"

using namespace soundrep;

namespace {

TFPatch random_patch(std::uint64_t seed = 1) {
  Rng rng(seed);
  TFPatch p = TFPatch::filled(0.0);
  for (auto& v : p.values) v = rng.uniform(-8.0, 2.0);
  return p;
}

void check_close(const TFPatch& a, const TFPatch& b, double rel = 1e-6) {
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(std::abs(a.values[i] - b.values[i]) <= rel * std::max(1.0, std::abs(b.values[i])));
  }
}

double mean_of(const TFPatch& p) {
  return std::accumulate(p.values.begin(), p.values.end(), 0.0) / TFPatch::kCells;
}

bool all_finite(const TFPatch& p) {
  return std::all_of(p.values.begin(), p.values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

TEST_CASE("rrc with full-size crop is the identity") {
  Rng rng(2);
  const TFPatch p = random_patch();
  RrcParams forced{1.0, 1.0, 1.0, 1.0};
  check_close(apply_rrc(p, forced, rng), p);
}

TEST_CASE("rrc always produces 96x101 finite patches") {
  Rng rng(3);
  const TFPatch p = random_patch();
  RrcParams params;
  for (int i = 0; i < 1000; ++i) {
    const TFPatch out = apply_rrc(p, params, rng);
    REQUIRE(out.values.size() == 96u * 101u);
    CHECK(all_finite(out));
  }
}

TEST_CASE("rrc maps a constant patch to the same constant") {
  Rng rng(4);
  const TFPatch p = TFPatch::filled(3.25);
  RrcParams params;
  for (int i = 0; i < 50; ++i) {
    const TFPatch out = apply_rrc(p, params, rng);
    for (double v : out.values) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("compression") {
  Rng rng(5);
  const TFPatch p = random_patch();
  SUBCASE("c=1 is the identity") {
    check_close(apply_compression(p, CompressionParams{1.0, 1.0}, rng), p);
  }
  SUBCASE("constant patches are unchanged for any c") {
    const TFPatch c = TFPatch::filled(-2.0);
    const TFPatch out = apply_compression(c, CompressionParams{}, rng);
    for (double v : out.values) CHECK(v == doctest::Approx(-2.0).epsilon(1e-12));
  }
  SUBCASE("values {0,2} with c=0.5 become {0.5,1.5}") {
    TFPatch q = TFPatch::filled(0.0);
    for (int i = 0; i < TFPatch::kCells; ++i) {
      q.values[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 0.0 : 2.0;
    }
    REQUIRE(mean_of(q) == doctest::Approx(1.0));
    const TFPatch out = apply_compression(q, CompressionParams{0.5, 0.5}, rng);
    for (int i = 0; i < TFPatch::kCells; ++i) {
      const double expect = (i % 2 == 0) ? 0.5 : 1.5;
      CHECK(out.values[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("gaussian noise") {
  const TFPatch p = random_patch(7);
  SUBCASE("sigma_rel=0 is the identity") {
    Rng rng(6);
    const TFPatch out = apply_noise(p, GaussianNoiseParams{0.0, 0.0}, rng);
    CHECK(out.values == p.values);
  }
  SUBCASE("added noise has the right statistics") {
    Rng rng(8);
    const double m = mean_of(p);
    double var = 0.0;
    for (double v : p.values) var += (v - m) * (v - m);
    const double sigma = 0.15 * std::sqrt(var / TFPatch::kCells);

    const TFPatch out = apply_noise(p, GaussianNoiseParams{0.15, 0.15}, rng);
    double dmean = 0.0;
    for (int i = 0; i < TFPatch::kCells; ++i) {
      dmean += out.values[static_cast<std::size_t>(i)] - p.values[static_cast<std::size_t>(i)];
    }
    dmean /= TFPatch::kCells;
    CHECK(std::abs(dmean) <= 4.0 * sigma / std::sqrt(9696.0));

    double dvar = 0.0;
    for (int i = 0; i < TFPatch::kCells; ++i) {
      const double d = out.values[static_cast<std::size_t>(i)] - p.values[static_cast<std::size_t>(i)];
      dvar += (d - dmean) * (d - dmean);
    }
    const double dstd = std::sqrt(dvar / TFPatch::kCells);
    CHECK(std::abs(dstd - sigma) <= 0.05 * sigma);
  }
}

TEST_CASE("specaugment") {
  // A ramp patch: no cell equals the patch mean, so masked cells are countable.
  TFPatch p = TFPatch::filled(0.0);
  for (int i = 0; i < TFPatch::kCells; ++i) p.values[static_cast<std::size_t>(i)] = i;
  const double fill = mean_of(p);

  SUBCASE("zero masks is the identity") {
    Rng rng(9);
    SpecAugmentParams none{0, 0, 1, 12, 0, 0, 1, 16};
    const TFPatch out = apply_specaugment(p, none, rng);
    CHECK(out.values == p.values);
  }
  SUBCASE("one frequency mask of width 12 fills exactly 12*101 cells") {
    Rng rng(10);
    SpecAugmentParams one_f{1, 1, 12, 12, 0, 0, 1, 16};
    const TFPatch out = apply_specaugment(p, one_f, rng);
    int masked = 0;
    for (double v : out.values) {
      if (v == fill) ++masked;
    }
    CHECK(masked == 12 * 101);
  }
  SUBCASE("total masked cells bounded by the config") {
    Rng rng(11);
    SpecAugmentParams defaults;
    for (int i = 0; i < 200; ++i) {
      const TFPatch out = apply_specaugment(p, defaults, rng);
      int masked = 0;
      for (double v : out.values) {
        if (v == fill) ++masked;
      }
      CHECK(masked <= 2 * 12 * 101 + 2 * 16 * 96);
    }
  }
}

TEST_CASE("time/frequency shift") {
  const TFPatch p = random_patch(12);
  SUBCASE("zero shift is the identity") {
    Rng rng(13);
    const TFPatch out = apply_shift(p, TimeFreqShiftParams{0, 0}, rng);
    CHECK(out.values == p.values);
  }
  SUBCASE("circular shift preserves the multiset of values") {
    Rng rng(14);
    for (int i = 0; i < 100; ++i) {
      const TFPatch out = apply_shift(p, TimeFreqShiftParams{}, rng);
      std::vector<double> a = p.values, b = out.values;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("gaussian blur") {
  const TFPatch p = random_patch(15);
  SUBCASE("tiny sigma is handled as the identity") {
    Rng rng(16);
    const TFPatch out = apply_blur(p, GaussianBlurParams{0.01, 0.01}, rng);
    CHECK(out.values == p.values);
  }
  SUBCASE("mean is preserved") {
    Rng rng(17);
    for (int i = 0; i < 20; ++i) {
      const TFPatch out = apply_blur(p, GaussianBlurParams{}, rng);
      CHECK(std::abs(mean_of(out) - mean_of(p)) <= 1e-3 * std::abs(mean_of(p)));
    }
  }
  SUBCASE("matches a direct non-separable convolution oracle") {
    Rng rng(18);
    const double sigma = 0.8;
    const TFPatch out = apply_blur(p, GaussianBlurParams{sigma, sigma}, rng);

    // Oracle: dense 2D kernel, reflected indices, no separability shortcut.
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k1(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      k1[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
      sum += k1[static_cast<std::size_t>(i + radius)];
    }
    for (double& v : k1) v /= sum;
    auto reflect = [](int idx, int n) {
      while (idx < 0 || idx >= n) {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * n - 2 - idx;
      }
      return idx;
    };
    for (int f = 0; f < 96; ++f) {
      for (int t = 0; t < 101; ++t) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          for (int j = -radius; j <= radius; ++j) {
            acc += k1[static_cast<std::size_t>(i + radius)] * k1[static_cast<std::size_t>(j + radius)] *
                   p.at(reflect(f + i, 96), reflect(t + j, 101));
          }
        }
        CHECK(out.at(f, t) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("policy application") {
  const TFPatch p = random_patch(19);
  SUBCASE("empty policy is the identity") {
    Rng rng(20);
    const TFPatch out = apply_policy(p, AugPolicy{}, rng);
    CHECK(out.values == p.values);
  }
  SUBCASE("named default policy is rrc+comp+noise") {
    const AugPolicy policy = named_policy("rrc+comp+noise");
    REQUIRE(policy.ops.size() == 3);
    CHECK(op_kind(policy.ops[0]) == "rrc");
    CHECK(op_kind(policy.ops[1]) == "compression");
    CHECK(op_kind(policy.ops[2]) == "gaussian_noise");
  }
  SUBCASE("alternate policies are constructible") {
    CHECK(named_policy("rrc+specaugment").ops.size() == 2);
    CHECK(named_policy("none").ops.empty());
    CHECK_THROWS_AS(named_policy("nope"), ConfigError);
  }
  SUBCASE("op order matters") {
    AugPolicy comp_noise{{CompressionParams{}, GaussianNoiseParams{0.1, 0.15}}};
    AugPolicy noise_comp{{GaussianNoiseParams{0.1, 0.15}, CompressionParams{}}};
    Rng rng_a(77), rng_b(77);
    const TFPatch a = apply_policy(p, comp_noise, rng_a);
    const TFPatch b = apply_policy(p, noise_comp, rng_b);
    CHECK(a.values != b.values);
  }
  SUBCASE("identical seed gives bitwise-identical output") {
    const AugPolicy policy = named_policy("rrc+comp+noise");
    Rng rng_a(123), rng_b(123);
    const TFPatch a = apply_policy(p, policy, rng_a);
    const TFPatch b = apply_policy(p, policy, rng_b);
    CHECK(a.values == b.values);
  }
  SUBCASE("full policy keeps shape and finiteness") {
    AugPolicy everything{{RrcParams{}, CompressionParams{}, GaussianNoiseParams{},
                          SpecAugmentParams{}, TimeFreqShiftParams{}, GaussianBlurParams{}}};
    Rng rng(21);
    for (int i = 0; i < 50; ++i) {
      const TFPatch out = apply_policy(p, everything, rng);
      REQUIRE(out.values.size() == 96u * 101u);
      CHECK(all_finite(out));
    }
  }
}
