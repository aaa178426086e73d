#pragma once

#include <string>
#include <vector>

#include "attrsyn/networks.hpp"

namespace attrsyn {

struct MaskPair {
  std::string image_path;
  std::string mask_path;
};

// CSV with columns image_path,mask_path; paths are relative to the CSV's
// directory. Masks are single-channel PNGs holding class indices.
struct MaskDataset {
  std::string root;
  std::vector<MaskPair> pairs;

  size_t size() const { return pairs.size(); }
};

MaskDataset load_mask_manifest(const std::string& csv_path);

struct MaskSample {
  Tensor<float> image;   // (C,H,W), normalized to [-1,1]
  Tensor<float> labels;  // (n_classes,H,W) one-hot
  Tensor<int> classes;   // (H,W)
};

MaskSample load_mask_sample(const MaskDataset& ds, size_t index, int n_classes,
                            int image_channels = 3);

struct ParserTrainOptions {
  int steps = 500;
  int batch_size = 4;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

struct ParserTrainResult {
  Parser<float> parser;
  std::vector<double> losses;  // one cross-entropy value per step
};

ParserTrainResult train_parser(const MaskDataset& ds, const ParserSpec& spec,
                               const ParserTrainOptions& opt, uint64_t seed,
                               int image_channels = 3);

// Mean per-pixel cross-entropy of the parser's posteriors against hard labels.
Var<float> parser_ce_loss(Parser<float>& parser, const Var<float>& images,
                          const Tensor<float>& onehot);

struct ParserAccuracy {
  std::vector<double> per_class;  // recall per class; -1 when absent from data
  double overall = 0.0;
  double mean_present = 0.0;  // mean over classes that occur
};

ParserAccuracy evaluate_parser(Parser<float>& parser, const MaskDataset& ds,
                               int image_channels = 3);

void save_parser(const std::string& dir, const Parser<float>& parser, uint64_t seed);
Parser<float> load_parser(const std::string& dir);

// A frozen parser never receives gradient updates: its parameters are marked
// non-differentiable, so the tape cannot record them.
class FrozenParser {
 public:
  explicit FrozenParser(Parser<float> parser) : net_(std::move(parser)) {
    net_.params.set_requires_grad(false);
  }

  Var<float> posteriors(const Var<float>& images) { return net_.posteriors(images); }
  int n_classes() const { return net_.spec.n_classes; }
  const Parser<float>& net() const { return net_; }

 private:
  Parser<float> net_;
};

}  // namespace attrsyn
