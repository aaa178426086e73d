#pragma once

#include <string>
#include <vector>

#include "attrsyn/data.hpp"
#include "attrsyn/networks.hpp"

namespace attrsyn {

// Rebuilds the generator stored in a trainer checkpoint. Inference only; the
// checkpoint is never written to.
struct LoadedGenerator {
  Generator<float> gen;
  DomainSpec domain;
  int image_size = 0;
  std::string mode;
};

LoadedGenerator load_generator(const std::string& ckpt_dir);

struct Translation {
  Tensor<float> image;  // (C,H,W) in [-1,1]
  Tensor<float> side;   // empty when the domain has no side channel
};

Translation translate(const Generator<float>& g, const ConditionedSample& s,
                      const AttributeVector& y_target);

// Same generator path with (x = synthetic frontal, s = real profile).
Tensor<float> pose_normalize(const Generator<float>& g, const Tensor<float>& frontal,
                             const Tensor<float>& profile, const AttributeVector& y_target);

// One augmentation experiment: synthetic pools sized per category, evaluated
// at several multiples of the base counts. Subsets nest, so row m reuses the
// images of every smaller row.
struct AugmentationPlan {
  std::vector<int> multipliers = {0, 1, 2, 4};
  std::vector<int> per_category_counts;  // base (1x) count per category-group member
  std::string source_manifest;           // real pool driving translation
  std::string output_manifest;           // where generated entries are listed

  void validate(const DomainSpec& spec) const;
};

struct ClassifierConfig {
  int base_channels = 8;
  int steps = 200;
  int batch_size = 8;
  double lr = 1e-3;
  int n_seeds = 3;
  std::string eval_manifest;  // held-out real split
};

struct AugmentationRow {
  int64_t synthetic_count = 0;
  double mean_accuracy = 0;
  double std_accuracy = 0;
  std::vector<double> per_seed;
};

struct AugmentationTable {
  std::vector<AugmentationRow> rows;
};

std::string augmentation_csv(const AugmentationTable& t);

AugmentationTable augment_and_classify(const AugmentationPlan& plan,
                                       const std::string& gen_ckpt_dir,
                                       const ClassifierConfig& cls, uint64_t seed,
                                       const std::string& work_dir);

// In-memory category-labeled image pool for the desk-scale classifier.
// Labels are positions within the domain's first attribute group.
struct LabeledImages {
  std::vector<Tensor<float>> images;  // (C,H,W) normalized
  std::vector<int> labels;
  int n_categories = 0;
};

LabeledImages load_category_images(const DatasetManifest& m, const DomainSpec& spec, int size);

// Trains the small convolutional classifier and returns held-out accuracy.
double classify_accuracy(const LabeledImages& train, const LabeledImages& test,
                         const ClassifierConfig& cfg, uint64_t seed);

struct ActivationOverlays {
  std::vector<Tensor<float>> overlays;  // (3,H,W) in [0,255]
  std::vector<int> units;               // channel index per overlay
  bool clipped = false;                 // top_k exceeded the channel count
};

// Encoder stage activations: index 0 is the stem output, k is the k-th
// downsampling stage. Units are ranked by their maximum activation.
ActivationOverlays visualize_activations(const Generator<float>& g, const ConditionedSample& s,
                                         int layer_index, int top_k);

struct LossCurves {
  std::vector<std::string> columns;          // excludes the step column
  std::vector<double> steps;
  std::vector<std::vector<double>> series;  // one per column
};

LossCurves load_loss_log(const std::string& csv_path);

const std::vector<std::string>& default_loss_panels();

void plot_losses(const std::string& csv_path, const std::string& out_png,
                 std::vector<std::string> columns = {});

}  // namespace attrsyn
