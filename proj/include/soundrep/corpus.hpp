#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "soundrep/dsp.hpp"
#include "soundrep/rng.hpp"
#include "soundrep/wav.hpp"

namespace soundrep {

enum class Split { CleanTrain, NoisyTrain, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string path;  // relative to the manifest root
  int label = 0;
  Split split = Split::NoisyTrain;
};

struct CorpusManifest {
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;

  std::size_t split_size(Split s) const;
};

/// Reads a `path,label,split` CSV. When expected_classes >= 0 every label is
/// validated against it; otherwise the class count is inferred from the data.
CorpusManifest read_manifest_csv(const std::filesystem::path& csv_path, int expected_classes = -1);

void write_manifest_csv(const CorpusManifest& manifest, const std::filesystem::path& csv_path);

/// Synthetic corpus description. Each class is a parametric sound family with
/// within-class variation; label noise (uniform wrong-class flips) is applied
/// to the noisy split only. Fully determined by the seed.
struct SynthConfig {
  int num_classes = 4;
  int clips_clean = 120;
  int clips_noisy = 600;
  int clips_test = 120;
  double duration_lo_s = 1.2;
  double duration_hi_s = 3.0;
  double label_noise_rate = 0.3;  // noisy split only
  std::uint64_t seed = 1;
  int sample_rate = 22050;
};

/// Number of distinct sound families available to `generate_synthetic`.
int synth_family_count();
std::vector<std::string> synth_family_names(int num_classes);

/// Renders one clip of a family (exposed for tests and tooling).
AudioClip synth_clip(int family, double duration_s, int sample_rate, Rng& rng);

/// Renders WAV files + manifest.csv + provenance.json under out_dir and
/// returns the manifest.
CorpusManifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// Immutable, fully decoded dataset: every clip's log-mel spectrogram is
/// computed at load time, after which the handle is read-only.
class Dataset {
 public:
  static Dataset load(const CorpusManifest& manifest, const FrontendConfig& frontend);

  /// In-memory construction for tests: (clip, label, split) triples.
  static Dataset from_clips(const std::vector<std::tuple<AudioClip, int, Split>>& clips,
                            const FrontendConfig& frontend, int num_classes = -1);

  int size() const { return static_cast<int>(labels_.size()); }
  int num_classes() const { return num_classes_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  int label(int i) const { return labels_[static_cast<std::size_t>(i)]; }
  Split split(int i) const { return splits_[static_cast<std::size_t>(i)]; }
  const std::string& clip_id(int i) const { return clip_ids_[static_cast<std::size_t>(i)]; }
  const LogMelSpec& spectrogram(int i) const { return specs_[static_cast<std::size_t>(i)]; }

  const std::vector<int>& split_indices(Split s) const;

  /// Uniform draw of a random 101-frame background patch from `from`, never
  /// from the excluded clip. Returned in linear domain.
  TFPatch sample_background(Split from, int exclude_index, Rng& rng) const;

 private:
  int num_classes_ = 0;
  std::vector<std::string> class_names_;
  std::vector<int> labels_;
  std::vector<Split> splits_;
  std::vector<std::string> clip_ids_;
  std::vector<LogMelSpec> specs_;
  std::vector<int> clean_, noisy_, test_;
};

}  // namespace soundrep
