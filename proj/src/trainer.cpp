#include "attrsyn/trainer.hpp"

#include <filesystem>
#include <fstream>

namespace attrsyn {

namespace fs = std::filesystem;

TrainMode train_mode_from(const std::string& name) {
  if (name == "attribute_transfer") return TrainMode::attribute_transfer;
  if (name == "pose_normalization") return TrainMode::pose_normalization;
  fail("BAD_CONFIG", "unknown mode '" + name +
                         "' (expected attribute_transfer or pose_normalization)");
}

std::string to_string(TrainMode mode) {
  return mode == TrainMode::attribute_transfer ? "attribute_transfer" : "pose_normalization";
}

double lr_at(int epoch, const OptimizerConfig& opt) {
  opt.validate();
  if (epoch < opt.decay_start_epoch) return opt.base_lr;
  double span = static_cast<double>(opt.total_epochs - opt.decay_start_epoch);
  double f = static_cast<double>(opt.total_epochs - epoch) / span;
  return opt.base_lr * std::max(0.0, f);
}

void TrainConfig::finalize() {
  domain.validate();
  gen.validate();
  opt.validate();
  weights.validate();
  check(image_size > 0 && image_size % 16 == 0, "BAD_CONFIG",
        "image_size must be a positive multiple of 16");
  check(checkpoint_every >= 0, "BAD_CONFIG", "checkpoint_every must be >= 0");
  if (mode == TrainMode::pose_normalization) {
    check(domain.side_channels == domain.image_channels, "BAD_CONFIG",
          "pose normalization pairs two images, so side_channels must equal image_channels");
    disc.input_channels = domain.image_channels;
  } else {
    disc.input_channels = domain.image_channels + domain.side_channels;
  }
  disc.input_size = image_size;
  disc.validate();
}

TrainConfig train_config_from(const ConfigMap& cfg) {
  TrainConfig c;
  c.domain = domain_from_config(cfg);
  c.image_size = config_int(cfg, "image_size", 128);
  c.gen.base_channels = config_int(cfg, "gen_base_channels", 64);
  c.gen.latent_channels = config_int(cfg, "gen_latent_channels", 256);
  c.gen.n_residual = config_int(cfg, "gen_n_residual", 6);
  c.disc.base_channels = config_int(cfg, "disc_base_channels", 64);
  c.disc.n_layers = config_int(cfg, "disc_n_layers", 6);
  c.opt.base_lr = config_double(cfg, "base_lr", 1e-4);
  c.opt.beta1 = config_double(cfg, "beta1", 0.5);
  c.opt.beta2 = config_double(cfg, "beta2", 0.999);
  c.opt.decay_start_epoch = config_int(cfg, "decay_start_epoch", 100);
  c.opt.total_epochs = config_int(cfg, "total_epochs", 200);
  c.opt.d_steps_per_g = config_int(cfg, "d_steps_per_g", 5);
  c.opt.batch_size = config_int(cfg, "batch_size", 8);
  c.opt.augment_flips = config_int(cfg, "augment_flips", 1) != 0;
  c.weights.lambda_bi = config_double(cfg, "lambda_bi", 10.0);
  c.weights.lambda_cls = config_double(cfg, "lambda_cls", 1.0);
  c.weights.lambda_id = config_double(cfg, "lambda_id", 10.0);
  c.weights.lambda_p = config_double(cfg, "lambda_p", 10.0);
  c.weights.lambda_gp = config_double(cfg, "lambda_gp", 10.0);
  c.mode = train_mode_from(config_str(cfg, "mode", "attribute_transfer"));
  c.checkpoint_every = config_int(cfg, "checkpoint_every", 1000);
  c.finalize();
  return c;
}

namespace {

// Temporarily removes a store from the tape; restores on scope exit.
struct GradSwitch {
  ParamStore<float>& ps;
  explicit GradSwitch(ParamStore<float>& p) : ps(p) { ps.set_requires_grad(false); }
  ~GradSwitch() { ps.set_requires_grad(true); }
};

Tensor<float> cat_tensors(const Tensor<float>& a, const Tensor<float>& b) {
  if (b.empty()) return a;
  return concat_channels(constant(a), constant(b))->value;
}

double tensor_mean(const Tensor<float>& t) {
  double s = 0;
  for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
  return s / static_cast<double>(t.numel());
}

void check_grads_finite(const ParamStore<float>& ps, const GradMap<float>& g,
                        const std::string& what) {
  for (const auto& e : ps.entries()) {
    auto it = g.find(e.var.get());
    if (it != g.end())
      check(it->second->value.all_finite(), "NONFINITE_GRADIENT",
            what + " gradient for " + e.name + " is not finite");
  }
}

}  // namespace

namespace {
TrainConfig finalized(TrainConfig c) {
  c.finalize();
  return c;
}
}  // namespace

Trainer::Trainer(const TrainConfig& cfg, uint64_t seed)
    : cfg_(finalized(cfg)),
      seed_(seed),
      rng_(mix_seed(seed, 0x7247ull)),
      gen_(build_generator<float>(cfg_.gen, cfg_.domain, seed)),
      disc_(build_discriminator<float>(cfg_.disc, cfg_.domain.n_y(), seed)) {
  adam_g_.beta1 = adam_d_.beta1 = cfg_.opt.beta1;
  adam_g_.beta2 = adam_d_.beta2 = cfg_.opt.beta2;
  adam_g_.init(gen_.params);
  adam_d_.init(disc_.params);
}

void Trainer::set_dataset(std::shared_ptr<const Dataset> ds) {
  check(ds != nullptr, "BAD_CONFIG", "dataset is null");
  check(ds->height() == cfg_.image_size && ds->width() == cfg_.image_size, "BAD_CONFIG",
        "dataset resolution does not match image_size");
  check(ds->size() >= cfg_.opt.batch_size, "BAD_CONFIG",
        "dataset smaller than one batch");
  ds_ = std::move(ds);
}

void Trainer::set_parser(std::shared_ptr<FrozenParser> parser) { parser_ = std::move(parser); }

void Trainer::ensure_ready() const {
  check(ds_ != nullptr, "BAD_CONFIG", "no dataset attached");
  if (cfg_.weights.lambda_p > 0)
    check(parser_ != nullptr, "BAD_CONFIG",
          "parsing loss weight is positive but no parser is attached");
}

Batch Trainer::next_batch() {
  check(ds_ != nullptr, "BAD_CONFIG", "no dataset attached");
  int n = ds_->size();
  int bsz = cfg_.opt.batch_size;
  if (pos_ + bsz > n) {
    ++epoch_;
    pos_ = 0;
  }
  std::vector<int> order = epoch_order(n, seed_, epoch_);

  Batch b;
  int c = cfg_.domain.image_channels, sc = cfg_.domain.side_channels;
  int h = cfg_.image_size, w = cfg_.image_size;
  b.x = Tensor<float>::zeros({bsz, c, h, w});
  if (sc > 0) b.s = Tensor<float>::zeros({bsz, sc, h, w});
  for (int i = 0; i < bsz; ++i) {
    int idx = order[pos_ + i];
    ConditionedSample s = ds_->load(idx);
    bool coin = cfg_.opt.augment_flips &&
                Rng(mix_seed(mix_seed(seed_, 0xf119ull), static_cast<uint64_t>(epoch_),
                             static_cast<uint64_t>(idx)))
                    .bernoulli();
    s = augment_flip(s, coin);
    std::memcpy(b.x.data() + static_cast<int64_t>(i) * c * h * w, s.image.data(),
                sizeof(float) * c * h * w);
    if (sc > 0)
      std::memcpy(b.s.data() + static_cast<int64_t>(i) * sc * h * w, s.side.data(),
                  sizeof(float) * sc * h * w);
    b.ys.push_back(s.attrs);
  }
  pos_ += bsz;
  return b;
}

std::vector<AttributeVector> Trainer::sample_targets(const Batch& b) {
  return sample_target_attributes(b.ys, cfg_.domain, rng_);
}

Var<float> Trainer::encoder_input(const Batch& b) const {
  if (b.s.empty()) return constant(b.x);
  return concat_channels(constant(b.x), constant(b.s));
}

void Trainer::discriminator_step(const Batch& b, const std::vector<AttributeVector>& targets) {
  ensure_ready();
  double lr = current_lr();

  // Fakes are produced off the tape; the critic never differentiates into the
  // generator here.
  Tensor<float> fake_img, fake_side;
  {
    GradSwitch off(gen_.params);
    Var<float> z = gen_.encode(encoder_input(b));
    auto dec = gen_.decode(z, targets);
    fake_img = dec.image->value;
    if (dec.side) fake_side = dec.side->value;
  }

  bool pose = cfg_.mode == TrainMode::pose_normalization;
  Tensor<float> real_in = pose ? b.s : cat_tensors(b.x, b.s);
  Tensor<float> fake_in = pose ? fake_img : cat_tensors(fake_img, fake_side);

  auto scores_real = disc_.forward(constant(real_in));
  auto scores_fake = disc_.forward(constant(fake_in));

  Var<float> gp = gradient_penalty([this](const Var<float>& v) { return disc_.forward(v).src; },
                                   real_in, fake_in, rng_.next_u64());
  Var<float> critic_part = critic_loss(scores_real.src, scores_fake.src, gp, cfg_.weights);

  // Attribute recognition trains on labeled inputs only: the paired input in
  // transfer mode, the labeled first image in pose mode.
  Var<float> clsr = pose ? cls_real(disc_.forward(constant(b.x)).cls, b.ys)
                         : cls_real(scores_real.cls, b.ys);

  check_finite(gp, "gradient penalty");
  check_finite(critic_part, "critic loss");
  check_finite(clsr, "real classification loss");
  Var<float> total = total_discriminator_loss(critic_part, clsr, cfg_.weights);

  GradMap<float> grads = backward_pass(total);
  check_grads_finite(disc_.params, grads, "critic");
  adam_d_.step(disc_.params, grads, lr);
  ++d_steps_;

  report_.gan_critic = critic_part->value[0];
  report_.gradient_penalty = gp->value[0];
  report_.cls_real = clsr->value[0];
  report_.total_d = total->value[0];
  report_.d_real_mean = tensor_mean(scores_real.src->value);
  report_.d_fake_mean = tensor_mean(scores_fake.src->value);
}

void Trainer::generator_step(const Batch& b, const std::vector<AttributeVector>& targets) {
  ensure_ready();
  double lr = current_lr();
  bool pose = cfg_.mode == TrainMode::pose_normalization;

  // The critic scores flow through, but its parameters stay off the tape.
  GradSwitch off(disc_.params);

  Var<float> z = gen_.encode(encoder_input(b));
  auto dec = gen_.decode(z, targets);

  Var<float> d_in = pose ? dec.image
                         : (dec.side ? concat_channels(dec.image, dec.side) : dec.image);
  auto scores_fake = disc_.forward(d_in);
  Var<float> adv = generator_adversarial_loss(scores_fake.src);
  Var<float> clsf = cls_fake(scores_fake.cls, targets);
  Var<float> id = identity_loss(dec.image, constant(b.x));

  Var<float> re_in = dec.side ? concat_channels(dec.image, dec.side) : dec.image;
  Var<float> z_fake = gen_.encode(re_in);
  auto rec = gen_.decode(z_fake, b.ys);
  Var<float> side_const = b.s.empty() ? Var<float>() : constant(b.s);
  auto bi = bidirectional_loss(constant(b.x), side_const, rec.image, rec.side, z, z_fake);

  Var<float> pl;
  if (parser_ && cfg_.weights.lambda_p > 0) {
    Var<float> p_real = parser_->posteriors(constant(b.x));
    Var<float> p_fake = parser_->posteriors(dec.image);
    pl = parsing_loss(p_real, p_fake);
  } else {
    pl = constant(Tensor<float>::zeros({1}));
  }

  Var<float> bi_total = add(bi.image, bi.latent);
  Var<float> total = total_generator_loss(adv, bi_total, clsf, id, pl, cfg_.weights);
  check_finite(total, "generator loss");

  GradMap<float> grads = backward_pass(total);
  check_grads_finite(gen_.params, grads, "generator");
  adam_g_.step(gen_.params, grads, lr);
  ++g_steps_;

  report_.gan_generator = adv->value[0];
  report_.cls_fake = clsf->value[0];
  report_.identity = id->value[0];
  report_.parsing = pl->value[0];
  report_.bidirectional_image = bi.image->value[0];
  report_.bidirectional_latent = bi.latent->value[0];
  report_.total_g = total->value[0];
  report_.d_fake_mean = tensor_mean(scores_fake.src->value);
}

void Trainer::train(int64_t n_generator_steps, const std::string& log_path,
                    const std::string& ckpt_dir) {
  ensure_ready();
  std::ofstream log;
  if (!log_path.empty()) {
    bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
    log.open(log_path, std::ios::app);
    check(log.good(), "IO_ERROR", "cannot open loss log " + log_path);
    if (fresh) log << loss_csv_header() << '\n';
  }
  auto emit = [&] {
    if (log.is_open()) {
      log << loss_csv_line(optimizer_steps(), report_) << '\n';
      log.flush();
    }
  };

  while (g_steps_ < n_generator_steps) {
    for (int k = 0; k < cfg_.opt.d_steps_per_g; ++k) {
      Batch b = next_batch();
      auto t = sample_targets(b);
      discriminator_step(b, t);
      emit();
    }
    Batch b = next_batch();
    auto t = sample_targets(b);
    generator_step(b, t);
    emit();
    if (!ckpt_dir.empty() && cfg_.checkpoint_every > 0 &&
        g_steps_ % cfg_.checkpoint_every == 0)
      save_state(ckpt_dir);
  }
  if (!ckpt_dir.empty()) save_state(ckpt_dir);
}

void Trainer::save_state(const std::string& dir) const {
  NamedArrays arrays = snapshot_params(gen_.params, "gen/");
  NamedArrays d = snapshot_params(disc_.params, "disc/");
  arrays.insert(arrays.end(), d.begin(), d.end());
  adam_g_.append_state(arrays, gen_.params, "opt_g/");
  adam_d_.append_state(arrays, disc_.params, "opt_d/");

  Json meta;
  meta["kind"] = "trainer";
  meta["mode"] = to_string(cfg_.mode);
  meta["image_size"] = cfg_.image_size;
  meta["checkpoint_every"] = cfg_.checkpoint_every;
  meta["domain"] = domain_to_config(cfg_.domain);
  meta["gen"] = {{"base_channels", cfg_.gen.base_channels},
                 {"latent_channels", cfg_.gen.latent_channels},
                 {"n_residual", cfg_.gen.n_residual},
                 {"n_downsample", cfg_.gen.n_downsample},
                 {"n_upsample", cfg_.gen.n_upsample}};
  meta["disc"] = {{"base_channels", cfg_.disc.base_channels},
                  {"n_layers", cfg_.disc.n_layers},
                  {"input_channels", cfg_.disc.input_channels},
                  {"input_size", cfg_.disc.input_size}};
  meta["opt"] = {{"base_lr", cfg_.opt.base_lr},
                 {"beta1", cfg_.opt.beta1},
                 {"beta2", cfg_.opt.beta2},
                 {"decay_start_epoch", cfg_.opt.decay_start_epoch},
                 {"total_epochs", cfg_.opt.total_epochs},
                 {"d_steps_per_g", cfg_.opt.d_steps_per_g},
                 {"batch_size", cfg_.opt.batch_size},
                 {"augment_flips", cfg_.opt.augment_flips}};
  meta["weights"] = {{"lambda_bi", cfg_.weights.lambda_bi},
                     {"lambda_cls", cfg_.weights.lambda_cls},
                     {"lambda_id", cfg_.weights.lambda_id},
                     {"lambda_p", cfg_.weights.lambda_p},
                     {"lambda_gp", cfg_.weights.lambda_gp}};
  meta["seed"] = seed_;
  meta["rng_state"] = rng_.state();
  meta["epoch"] = epoch_;
  meta["pos"] = pos_;
  meta["g_steps"] = g_steps_;
  meta["d_steps"] = d_steps_;
  meta["adam_g_t"] = adam_g_.steps_taken();
  meta["adam_d_t"] = adam_d_.steps_taken();
  save_checkpoint(dir, arrays, meta);
}

void Trainer::load_state(const std::string& dir) {
  Json meta;
  NamedArrays arrays = load_checkpoint(dir, &meta);
  check(meta.value("kind", std::string()) == "trainer", "IO_ERROR",
        dir + ": checkpoint does not hold a trainer state");

  auto mismatch = [&](const std::string& what) {
    fail("BAD_CONFIG", "checkpoint was written for a different configuration: " + what);
  };
  if (meta.at("mode").get<std::string>() != to_string(cfg_.mode)) mismatch("mode");
  if (meta.at("image_size").get<int>() != cfg_.image_size) mismatch("image_size");
  if (meta.at("domain").get<std::string>() != domain_to_config(cfg_.domain)) mismatch("domain");
  const Json& g = meta.at("gen");
  if (g.at("base_channels").get<int>() != cfg_.gen.base_channels ||
      g.at("latent_channels").get<int>() != cfg_.gen.latent_channels ||
      g.at("n_residual").get<int>() != cfg_.gen.n_residual ||
      g.at("n_downsample").get<int>() != cfg_.gen.n_downsample ||
      g.at("n_upsample").get<int>() != cfg_.gen.n_upsample)
    mismatch("generator architecture");
  const Json& dj = meta.at("disc");
  if (dj.at("base_channels").get<int>() != cfg_.disc.base_channels ||
      dj.at("n_layers").get<int>() != cfg_.disc.n_layers ||
      dj.at("input_channels").get<int>() != cfg_.disc.input_channels ||
      dj.at("input_size").get<int>() != cfg_.disc.input_size)
    mismatch("critic architecture");
  const Json& oj = meta.at("opt");
  if (oj.at("base_lr").get<double>() != cfg_.opt.base_lr ||
      oj.at("beta1").get<double>() != cfg_.opt.beta1 ||
      oj.at("beta2").get<double>() != cfg_.opt.beta2 ||
      oj.at("decay_start_epoch").get<int>() != cfg_.opt.decay_start_epoch ||
      oj.at("total_epochs").get<int>() != cfg_.opt.total_epochs ||
      oj.at("d_steps_per_g").get<int>() != cfg_.opt.d_steps_per_g ||
      oj.at("batch_size").get<int>() != cfg_.opt.batch_size ||
      oj.value("augment_flips", true) != cfg_.opt.augment_flips)
    mismatch("optimizer schedule");
  const Json& wj = meta.at("weights");
  if (wj.at("lambda_bi").get<double>() != cfg_.weights.lambda_bi ||
      wj.at("lambda_cls").get<double>() != cfg_.weights.lambda_cls ||
      wj.at("lambda_id").get<double>() != cfg_.weights.lambda_id ||
      wj.at("lambda_p").get<double>() != cfg_.weights.lambda_p ||
      wj.at("lambda_gp").get<double>() != cfg_.weights.lambda_gp)
    mismatch("loss weights");

  restore_params(gen_.params, arrays, "gen/");
  restore_params(disc_.params, arrays, "disc/");
  adam_g_.restore_state(arrays, gen_.params, "opt_g/", meta.at("adam_g_t").get<int64_t>());
  adam_d_.restore_state(arrays, disc_.params, "opt_d/", meta.at("adam_d_t").get<int64_t>());

  // The stream of shuffles, flips, targets and interpolates continues exactly
  // where the saved run stopped, regardless of the seed this instance was
  // constructed with.
  seed_ = meta.at("seed").get<uint64_t>();
  rng_.restore(meta.at("rng_state").get<uint64_t>());
  epoch_ = meta.at("epoch").get<int>();
  pos_ = meta.at("pos").get<int>();
  g_steps_ = meta.at("g_steps").get<int64_t>();
  d_steps_ = meta.at("d_steps").get<int64_t>();
}

}  // namespace attrsyn
