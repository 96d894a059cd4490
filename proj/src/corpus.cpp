#include "soundrep/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace soundrep {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Paul Kellet's economy pink-noise filter over white noise.
class PinkNoise {
 public:
  double next(Rng& rng) {
    const double w = rng.normal();
    b0_ = 0.99765 * b0_ + w * 0.0990460;
    b1_ = 0.96300 * b1_ + w * 0.2965164;
    b2_ = 0.57000 * b2_ + w * 1.0526913;
    return (b0_ + b1_ + b2_ + w * 0.1848) * 0.1;
  }

 private:
  double b0_ = 0.0, b1_ = 0.0, b2_ = 0.0;
};

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / std::max<std::size_t>(x.size(), 1));
}

// Attack/release envelope so events do not start or stop on a hard edge.
double envelope(double t, double duration) {
  const double attack = 0.08, release = 0.12;
  double e = 1.0;
  if (t < attack) e = t / attack;
  if (t > duration - release) e = std::max(0.0, (duration - t) / release);
  return e;
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::CleanTrain: return "clean_train";
    case Split::NoisyTrain: return "noisy_train";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "clean_train") return Split::CleanTrain;
  if (name == "noisy_train") return Split::NoisyTrain;
  if (name == "test") return Split::Test;
  throw ManifestError("manifest: unknown split '" + name + "'");
}

std::size_t CorpusManifest::split_size(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

CorpusManifest read_manifest_csv(const std::filesystem::path& csv_path, int expected_classes) {
  std::ifstream in(csv_path);
  if (!in) throw ManifestError("manifest: cannot open " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw ManifestError("manifest: empty file " + csv_path.string());
  if (line.ends_with('\r')) line.pop_back();
  if (line != "path,label,split") {
    throw ManifestError("manifest: expected header 'path,label,split', got '" + line + "'");
  }

  CorpusManifest m;
  m.root = csv_path.parent_path();
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.ends_with('\r')) line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string path, label_str, split_str;
    if (!std::getline(ss, path, ',') || !std::getline(ss, label_str, ',') ||
        !std::getline(ss, split_str)) {
      throw ManifestError("manifest: malformed row " + std::to_string(line_no));
    }
    ManifestEntry e;
    e.path = path;
    e.label = std::stoi(label_str);
    e.split = split_from_name(split_str);
    if (e.label < 0) throw ManifestError("manifest: negative label at row " + std::to_string(line_no));
    if (expected_classes >= 0 && e.label >= expected_classes) {
      throw ManifestError("manifest: label " + std::to_string(e.label) + " >= class count " +
                          std::to_string(expected_classes) + " at row " + std::to_string(line_no));
    }
    max_label = std::max(max_label, e.label);
    m.entries.push_back(std::move(e));
  }
  m.num_classes = expected_classes >= 0 ? expected_classes : max_label + 1;
  for (int c = 0; c < m.num_classes; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class_%02d", c);
    m.class_names.emplace_back(buf);
  }
  return m;
}

void write_manifest_csv(const CorpusManifest& manifest, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw ManifestError("manifest: cannot write " + csv_path.string());
  out << "path,label,split\n";
  for (const auto& e : manifest.entries) {
    out << e.path << "," << e.label << "," << split_name(e.split) << "\n";
  }
}

int synth_family_count() { return 8; }

std::vector<std::string> synth_family_names(int num_classes) {
  static const char* kNames[] = {"chirp_up",    "chirp_down",  "vibrato_tone", "click_train",
                                 "am_noise",    "harmonic_stack", "warble_noise", "beep_sequence"};
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) names.emplace_back(kNames[c]);
  return names;
}

AudioClip synth_clip(int family, double duration_s, int sample_rate, Rng& rng) {
  if (family < 0 || family >= synth_family_count()) {
    throw ConfigError("synth: family index out of range");
  }
  const int n = static_cast<int>(std::lround(duration_s * sample_rate));
  std::vector<double> event(static_cast<std::size_t>(n), 0.0);
  const double dt = 1.0 / sample_rate;

  // Shared within-class variation: +-10% f0 jitter, random phases/rates.
  const double f0_jitter = rng.uniform(0.9, 1.1);

  switch (family) {
    case 0:    // repeated rising chirps
    case 1: {  // repeated falling chirps
      const double f_lo = 500.0 * f0_jitter;
      const double f_hi = 2400.0 * f0_jitter;
      const double chirp_len = rng.uniform(0.25, 0.45);
      const double gap = rng.uniform(0.02, 0.08);
      double phase = rng.uniform(0.0, kTwoPi);
      for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const double pos = std::fmod(t, chirp_len + gap);
        if (pos < chirp_len) {
          double frac = pos / chirp_len;
          if (family == 1) frac = 1.0 - frac;
          const double f = f_lo * std::pow(f_hi / f_lo, frac);
          phase += kTwoPi * f * dt;
          const double edge = std::min(1.0, std::min(pos, chirp_len - pos) / 0.02);
          event[static_cast<std::size_t>(i)] = std::sin(phase) * edge;
        }
      }
      break;
    }
    case 2: {  // steady tone with vibrato
      const double f0 = rng.uniform(600.0, 2000.0) * f0_jitter;
      const double vib_rate = rng.uniform(4.0, 7.0);
      const double vib_depth = rng.uniform(0.02, 0.04);
      const double trem_rate = rng.uniform(1.0, 3.0);
      double phase = rng.uniform(0.0, kTwoPi);
      for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const double f = f0 * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * t));
        phase += kTwoPi * f * dt;
        const double am = 0.85 + 0.15 * std::sin(kTwoPi * trem_rate * t);
        event[static_cast<std::size_t>(i)] = std::sin(phase) * am;
      }
      break;
    }
    case 3: {  // broadband click train
      const double rate = rng.uniform(6.0, 14.0);
      const double period = 1.0 / rate;
      const double decay = rng.uniform(0.004, 0.010);
      double next_click = rng.uniform(0.0, period);
      while (next_click < duration_s) {
        const int start = static_cast<int>(next_click * sample_rate);
        const int len = static_cast<int>(0.03 * sample_rate);
        for (int i = start; i < std::min(n, start + len); ++i) {
          const double t = (i - start) * dt;
          event[static_cast<std::size_t>(i)] += rng.normal() * std::exp(-t / decay);
        }
        next_click += period;
      }
      break;
    }
    case 4: {  // amplitude-modulated noise
      const double am_rate = rng.uniform(3.0, 8.0);
      const double depth = rng.uniform(0.7, 0.95);
      PinkNoise pink;
      for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const double am = (1.0 - depth) + depth * 0.5 * (1.0 + std::sin(kTwoPi * am_rate * t));
        event[static_cast<std::size_t>(i)] = pink.next(rng) * 6.0 * am;
      }
      break;
    }
    case 5: {  // harmonic stack with slow tremolo
      const double f0 = rng.uniform(220.0, 520.0) * f0_jitter;
      const double trem = rng.uniform(0.8, 2.0);
      double phases[5];
      for (auto& ph : phases) ph = rng.uniform(0.0, kTwoPi);
      for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        double s = 0.0;
        for (int h = 1; h <= 5; ++h) {
          s += std::sin(kTwoPi * f0 * h * t + phases[h - 1]) / h;
        }
        event[static_cast<std::size_t>(i)] = s * (0.8 + 0.2 * std::sin(kTwoPi * trem * t)) / 2.0;
      }
      break;
    }
    case 6: {  // narrowband noise: tone with slowly wandering frequency
      double f = rng.uniform(800.0, 2600.0) * f0_jitter;
      const double walk = rng.uniform(30.0, 80.0);  // Hz per step scale
      double phase = rng.uniform(0.0, kTwoPi);
      for (int i = 0; i < n; ++i) {
        if (i % 64 == 0) {
          f = std::clamp(f + walk * rng.normal(), 400.0, 5200.0);
        }
        phase += kTwoPi * f * dt;
        event[static_cast<std::size_t>(i)] = std::sin(phase);
      }
      break;
    }
    case 7: {  // on/off beep sequence
      const double beep_rate = rng.uniform(2.0, 5.0);
      const double period = 1.0 / beep_rate;
      const double duty = rng.uniform(0.35, 0.6);
      double f = rng.uniform(900.0, 2800.0) * f0_jitter;
      double phase = 0.0;
      int last_cycle = -1;
      for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const int cycle = static_cast<int>(t / period);
        if (cycle != last_cycle) {
          last_cycle = cycle;
          f *= rng.uniform(0.95, 1.05);  // per-beep pitch jitter
        }
        const double pos = std::fmod(t, period);
        if (pos < duty * period) {
          phase += kTwoPi * f * dt;
          const double edge = std::min(1.0, std::min(pos, duty * period - pos) / 0.01);
          event[static_cast<std::size_t>(i)] = std::sin(phase) * edge;
        }
      }
      break;
    }
    default: break;
  }

  // Overall envelope, event gain, pink-noise bed at a random SNR.
  const double gain_db = rng.uniform(-8.0, -2.0);
  const double gain = std::pow(10.0, gain_db / 20.0);
  for (int i = 0; i < n; ++i) {
    event[static_cast<std::size_t>(i)] *= gain * envelope(i * dt, duration_s);
  }
  const double event_rms = std::max(rms(event), 1e-6);
  const double snr_db = rng.uniform(6.0, 18.0);
  const double noise_rms_target = event_rms / std::pow(10.0, snr_db / 20.0);
  PinkNoise bed;
  std::vector<double> noise(static_cast<std::size_t>(n));
  for (auto& v : noise) v = bed.next(rng);
  const double noise_scale = noise_rms_target / std::max(rms(noise), 1e-12);

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    clip.samples[static_cast<std::size_t>(i)] = std::clamp(
        event[static_cast<std::size_t>(i)] + noise[static_cast<std::size_t>(i)] * noise_scale,
        -1.0, 1.0);
  }
  return clip;
}

CorpusManifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.num_classes < 1 || cfg.num_classes > synth_family_count()) {
    throw ConfigError("synth.num_classes: must be in [1, " +
                      std::to_string(synth_family_count()) + "]");
  }
  if (cfg.label_noise_rate < 0.0 || cfg.label_noise_rate >= 1.0) {
    throw ConfigError("synth.label_noise_rate: must be in [0, 1)");
  }
  if (cfg.duration_lo_s < 0.3 || cfg.duration_hi_s > 30.0 || cfg.duration_lo_s > cfg.duration_hi_s) {
    throw ConfigError("synth.duration: range must lie within [0.3, 30] seconds");
  }

  std::filesystem::create_directories(out_dir / "audio");
  const RngScheme scheme(cfg.seed);

  CorpusManifest m;
  m.num_classes = cfg.num_classes;
  m.class_names = synth_family_names(cfg.num_classes);
  m.root = out_dir;

  const struct {
    Split split;
    int count;
    const char* prefix;
  } plans[] = {{Split::CleanTrain, cfg.clips_clean, "clean"},
               {Split::NoisyTrain, cfg.clips_noisy, "noisy"},
               {Split::Test, cfg.clips_test, "test"}};

  std::uint64_t global_index = 0;
  for (const auto& plan : plans) {
    for (int i = 0; i < plan.count; ++i, ++global_index) {
      const int family = i % cfg.num_classes;  // balanced classes
      Rng audio_rng = scheme.stream("synth_audio", global_index);
      const double duration = audio_rng.uniform(cfg.duration_lo_s, cfg.duration_hi_s);
      const AudioClip clip = synth_clip(family, duration, cfg.sample_rate, audio_rng);

      int label = family;
      if (plan.split == Split::NoisyTrain && cfg.label_noise_rate > 0.0 && cfg.num_classes > 1) {
        Rng label_rng = scheme.stream("synth_label", global_index);
        if (label_rng.uniform() < cfg.label_noise_rate) {
          label = static_cast<int>((family + 1 + label_rng.uniform_int(0, cfg.num_classes - 2)) %
                                   cfg.num_classes);
        }
      }

      char name[64];
      std::snprintf(name, sizeof(name), "audio/%s_%05d.wav", plan.prefix, i);
      write_wav_pcm16(out_dir / name, clip.samples, clip.sample_rate);
      m.entries.push_back(ManifestEntry{name, label, plan.split});
    }
  }

  write_manifest_csv(m, out_dir / "manifest.csv");

  nlohmann::json prov;
  prov["schema_version"] = 1;
  prov["synth"] = {{"num_classes", cfg.num_classes},
                   {"clips_clean", cfg.clips_clean},
                   {"clips_noisy", cfg.clips_noisy},
                   {"clips_test", cfg.clips_test},
                   {"duration_lo_s", cfg.duration_lo_s},
                   {"duration_hi_s", cfg.duration_hi_s},
                   {"label_noise_rate", cfg.label_noise_rate},
                   {"seed", cfg.seed},
                   {"sample_rate", cfg.sample_rate}};
  prov["class_names"] = m.class_names;
  std::ofstream prov_out(out_dir / "provenance.json", std::ios::trunc);
  prov_out << prov.dump(2) << "\n";

  return m;
}

Dataset Dataset::load(const CorpusManifest& manifest, const FrontendConfig& frontend) {
  Dataset ds;
  ds.num_classes_ = manifest.num_classes;
  ds.class_names_ = manifest.class_names;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (e.label >= manifest.num_classes) {
      throw ManifestError("manifest: label " + std::to_string(e.label) + " >= class count " +
                          std::to_string(manifest.num_classes) + " (" + e.path + ")");
    }
    const auto full = manifest.root / e.path;
    if (!std::filesystem::exists(full)) {
      throw ManifestError("manifest: missing file " + full.string());
    }
    AudioClip clip = decode_wav_file(full);
    if (clip.sample_rate != frontend.sample_rate) clip = resample(clip, frontend.sample_rate);
    clip.source_id = e.path;
    LogMelSpec spec = logmel(clip, frontend);
    ds.labels_.push_back(e.label);
    ds.splits_.push_back(e.split);
    ds.clip_ids_.push_back(e.path);
    ds.specs_.push_back(std::move(spec));
  }
  for (int i = 0; i < ds.size(); ++i) {
    switch (ds.splits_[static_cast<std::size_t>(i)]) {
      case Split::CleanTrain: ds.clean_.push_back(i); break;
      case Split::NoisyTrain: ds.noisy_.push_back(i); break;
      case Split::Test: ds.test_.push_back(i); break;
    }
  }
  return ds;
}

Dataset Dataset::from_clips(const std::vector<std::tuple<AudioClip, int, Split>>& clips,
                            const FrontendConfig& frontend, int num_classes) {
  Dataset ds;
  int max_label = -1;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& [clip, label, split] = clips[i];
    AudioClip local = clip;
    if (local.source_id.empty()) local.source_id = "mem_" + std::to_string(i);
    if (local.sample_rate != frontend.sample_rate) local = resample(local, frontend.sample_rate);
    ds.labels_.push_back(label);
    ds.splits_.push_back(split);
    ds.clip_ids_.push_back(local.source_id);
    ds.specs_.push_back(logmel(local, frontend));
    max_label = std::max(max_label, label);
  }
  ds.num_classes_ = num_classes >= 0 ? num_classes : max_label + 1;
  for (int c = 0; c < ds.num_classes_; ++c) ds.class_names_.push_back("class_" + std::to_string(c));
  for (int i = 0; i < ds.size(); ++i) {
    switch (ds.splits_[static_cast<std::size_t>(i)]) {
      case Split::CleanTrain: ds.clean_.push_back(i); break;
      case Split::NoisyTrain: ds.noisy_.push_back(i); break;
      case Split::Test: ds.test_.push_back(i); break;
    }
  }
  return ds;
}

const std::vector<int>& Dataset::split_indices(Split s) const {
  switch (s) {
    case Split::CleanTrain: return clean_;
    case Split::NoisyTrain: return noisy_;
    case Split::Test: return test_;
  }
  return test_;
}

TFPatch Dataset::sample_background(Split from, int exclude_index, Rng& rng) const {
  const std::vector<int>& pool = split_indices(from);
  int candidates = 0;
  for (int idx : pool) {
    if (idx != exclude_index) ++candidates;
  }
  if (candidates == 0) {
    throw ConfigError("sample_background: split has no clip other than the excluded one");
  }
  std::int64_t pick = rng.uniform_int(0, candidates - 1);
  int chosen = -1;
  for (int idx : pool) {
    if (idx == exclude_index) continue;
    if (pick-- == 0) {
      chosen = idx;
      break;
    }
  }
  const LogMelSpec& raw = spectrogram(chosen);
  LogMelSpec replicated;
  if (raw.frames < TFPatch::kFrames) replicated = replicate_to_min_frames(raw);
  const LogMelSpec& spec = raw.frames >= TFPatch::kFrames ? raw : replicated;
  const int max_start = spec.frames - TFPatch::kFrames;
  const int start = max_start == 0 ? 0 : static_cast<int>(rng.uniform_int(0, max_start));
  return to_linear(patch_at(spec, start));
}

}  // namespace soundrep
