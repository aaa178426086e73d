#pragma once

#include <string>
#include <vector>

#include "attrsyn/domain.hpp"
#include "attrsyn/rng.hpp"

namespace attrsyn {

struct LandmarkSet {
  std::vector<std::pair<float, float>> points;  // (row, col) in pixel units
};

struct ManifestEntry {
  std::string image_path;  // relative to manifest directory
  LandmarkSet landmarks;
  std::vector<std::string> attribute_names;
};

struct DatasetManifest {
  std::string root;
  std::string split;
  std::vector<ManifestEntry> entries;
};

DatasetManifest load_manifest(const std::string& csv_path, const std::string& split);
void save_manifest(const DatasetManifest& m, const std::string& csv_path);

// max-combined Gaussians at landmark locations, mapped to [-1,1] via 2H-1
Tensor<float> make_landmark_heatmap(const LandmarkSet& lm, int h, int w, float sigma);

// Resolves one manifest entry at a time; nothing is cached.
class Dataset {
 public:
  Dataset(DatasetManifest manifest, DomainSpec spec, int target_h, int target_w);

  int size() const { return static_cast<int>(manifest_.entries.size()); }
  ConditionedSample load(int index) const;
  const DomainSpec& spec() const { return spec_; }
  int height() const { return th_; }
  int width() const { return tw_; }

 private:
  DatasetManifest manifest_;
  DomainSpec spec_;
  int th_, tw_;
  float sigma_;
};

Dataset load_dataset(const DatasetManifest& manifest, const DomainSpec& spec, int target_h,
                     int target_w);

ConditionedSample augment_flip(const ConditionedSample& s, bool coin);

// epoch-e visit order; same (seed, epoch) gives the same permutation
std::vector<int> epoch_order(int n, uint64_t seed, int epoch);

std::vector<AttributeVector> sample_target_attributes(
    const std::vector<AttributeVector>& batch_source_y, const DomainSpec& spec, Rng& rng);

// Procedural faces: elliptical skin patch, two eye blobs, a mouth curve whose
// curvature encodes the category, 4 landmarks (eye centers, mouth corners),
// and 4-class masks {0 background, 1 skin, 2 eyes, 3 lips}. Writes images/,
// masks/, train.csv, test.csv, masks_train.csv, masks_test.csv, domain.conf.
// The test split holds n_images/4 extra images beyond the requested count.
void generate_toy_dataset(int n_images, int n_categories, int size, uint64_t seed,
                          const std::string& out_dir);

}  // namespace attrsyn
