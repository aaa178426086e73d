#pragma once

#include <memory>
#include <string>

#include "attrsyn/config.hpp"
#include "attrsyn/data.hpp"
#include "attrsyn/losses.hpp"
#include "attrsyn/networks.hpp"
#include "attrsyn/optim.hpp"
#include "attrsyn/parsing.hpp"

namespace attrsyn {

enum class TrainMode { attribute_transfer, pose_normalization };

TrainMode train_mode_from(const std::string& name);
std::string to_string(TrainMode mode);

// Base rate until decay_start_epoch, then linear to zero at total_epochs.
double lr_at(int epoch, const OptimizerConfig& opt);

struct TrainConfig {
  DomainSpec domain;
  GeneratorSpec gen;
  DiscriminatorSpec disc;  // input channels/size are derived in finalize()
  OptimizerConfig opt;
  LossWeights weights;
  TrainMode mode = TrainMode::attribute_transfer;
  int image_size = 128;
  int checkpoint_every = 1000;  // generator steps between saves; 0 disables

  void finalize();
};

// Reads trainer keys (and the embedded domain) from a parsed config map.
TrainConfig train_config_from(const ConfigMap& cfg);

struct Batch {
  Tensor<float> x;  // (B,C,H,W)
  Tensor<float> s;  // (B,side,H,W); empty when the domain has no side channel
  std::vector<AttributeVector> ys;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, uint64_t seed);

  void set_dataset(std::shared_ptr<const Dataset> ds);
  void set_parser(std::shared_ptr<FrozenParser> parser);

  Batch next_batch();
  std::vector<AttributeVector> sample_targets(const Batch& b);

  // One critic update on a fresh batch. The generator only produces detached
  // fakes here; its parameters are bitwise untouched.
  void discriminator_step(const Batch& b, const std::vector<AttributeVector>& targets);

  // One generator update; critic and parser parameters are bitwise untouched.
  void generator_step(const Batch& b, const std::vector<AttributeVector>& targets);

  // Runs cycles of opt.d_steps_per_g critic updates followed by one generator
  // update until the generator has taken n_generator_steps total. Appends one
  // CSV row per optimizer update to log_path and checkpoints into ckpt_dir.
  void train(int64_t n_generator_steps, const std::string& log_path,
             const std::string& ckpt_dir);

  void save_state(const std::string& dir) const;
  void load_state(const std::string& dir);

  const TrainConfig& config() const { return cfg_; }
  const LossReport& report() const { return report_; }
  Generator<float>& generator() { return gen_; }
  Discriminator<float>& discriminator() { return disc_; }
  int64_t generator_steps() const { return g_steps_; }
  int64_t discriminator_steps() const { return d_steps_; }
  int64_t optimizer_steps() const { return g_steps_ + d_steps_; }
  int epoch() const { return epoch_; }
  double current_lr() const { return lr_at(epoch_, cfg_.opt); }

 private:
  Var<float> encoder_input(const Batch& b) const;
  void ensure_ready() const;

  TrainConfig cfg_;
  uint64_t seed_;
  Rng rng_;
  Generator<float> gen_;
  Discriminator<float> disc_;
  Adam adam_g_, adam_d_;
  std::shared_ptr<const Dataset> ds_;
  std::shared_ptr<FrozenParser> parser_;
  LossReport report_;
  int64_t g_steps_ = 0, d_steps_ = 0;
  int epoch_ = 0;
  int pos_ = 0;
};

}  // namespace attrsyn
