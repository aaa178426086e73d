#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>

#include "attrsyn/eval.hpp"
#include "attrsyn/image.hpp"
#include "attrsyn/parsing.hpp"
#include "attrsyn/plot.hpp"
#include "attrsyn/trainer.hpp"

namespace fs = std::filesystem;
using namespace attrsyn;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("ATTRSYN_OUT");
  return env && *env ? env : ".";
}

void guard_overwrite(const std::string& path, bool force) {
  if (force || path.empty()) return;
  std::error_code ec;
  if (!fs::exists(path, ec)) return;
  if (fs::is_directory(path, ec) && fs::is_empty(path, ec)) return;
  fail("IO_ERROR", path + " already exists (pass --force to overwrite)");
}

Tensor<float> load_image_as(const std::string& path, int channels, int size) {
  Tensor<float> img = read_png(path, channels);
  if (img.dim(1) != size || img.dim(2) != size) img = resize_bilinear(img, size, size);
  return normalize_image(img);
}

ConditionedSample cli_sample(const LoadedGenerator& g, const std::string& image,
                             const std::string& side) {
  ConditionedSample s;
  s.image = load_image_as(image, g.domain.image_channels, g.image_size);
  if (g.domain.side_channels > 0) {
    check(!side.empty(), "BAD_ARGS", "this model conditions on a side image; pass --side");
    s.side = load_image_as(side, g.domain.side_channels, g.image_size);
  }
  return s;
}

AttributeVector cli_target(const std::string& names, const DomainSpec& domain) {
  AttributeVector y = encode_attributes(split_list(names), domain);
  y.validate(domain);
  return y;
}

std::vector<int> parse_counts(const std::string& csv, const std::string& what) {
  std::vector<int> out;
  for (const auto& tok : split_list(csv)) {
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    check(used == tok.size(), "BAD_ARGS", what + ": '" + tok + "' is not an integer");
    out.push_back(v);
  }
  check(!out.empty(), "BAD_ARGS", what + " must not be empty");
  return out;
}

struct TrainArgs {
  std::string data, config, out, resume, log, parser;
  int64_t steps = 0;
  uint64_t seed = 0;
  bool force = false;
  std::vector<std::pair<std::string, std::string>> overrides;  // config key -> raw value
};

void run_train(const TrainArgs& a) {
  ConfigMap merged = load_config_file(a.data + "/domain.conf");
  if (!a.config.empty())
    for (const auto& [k, v] : load_config_file(a.config)) merged[k] = v;
  for (const auto& [k, v] : a.overrides) merged[k] = v;

  TrainConfig cfg = train_config_from(merged);
  if (a.resume != a.out) guard_overwrite(a.out, a.force);

  Trainer t(cfg, a.seed);
  if (!a.resume.empty()) t.load_state(a.resume);
  t.set_dataset(std::make_shared<Dataset>(load_manifest(a.data + "/train.csv", "train"),
                                          cfg.domain, cfg.image_size, cfg.image_size));
  if (!a.parser.empty())
    t.set_parser(std::make_shared<FrozenParser>(load_parser(a.parser)));

  t.train(a.steps, a.log, a.out);
  std::printf("trained to %lld generator steps; checkpoint at %s\n",
              static_cast<long long>(t.generator_steps()), a.out.c_str());
}

struct ParserArgs {
  std::string data, out;
  int steps = 500, classes = 4, base = 16, depth = 3, batch = 4;
  double lr = 1e-3;
  uint64_t seed = 0;
  bool force = false;
};

void run_train_parser(const ParserArgs& a) {
  guard_overwrite(a.out, a.force);
  MaskDataset md = load_mask_manifest(a.data + "/masks_train.csv");
  ParserSpec spec;
  spec.n_classes = a.classes;
  spec.base_channels = a.base;
  spec.depth = a.depth;
  ParserTrainOptions po;
  po.steps = a.steps;
  po.batch_size = a.batch;
  po.lr = a.lr;
  ParserTrainResult r = train_parser(md, spec, po, a.seed);
  save_parser(a.out, r.parser, a.seed);
  std::printf("parser trained for %d steps (final loss %.4f); saved to %s\n", a.steps,
              r.losses.empty() ? 0.0 : r.losses.back(), a.out.c_str());
}

struct TranslateArgs {
  std::string ckpt, image, side, target, out, side_out;
  uint64_t seed = 0;
  bool force = false;
};

void run_translate(const TranslateArgs& a) {
  LoadedGenerator g = load_generator(a.ckpt);
  check(!a.image.empty(), "BAD_ARGS", "pass --image");
  check(!a.target.empty(), "BAD_ARGS", "pass --target");
  ConditionedSample s = cli_sample(g, a.image, a.side);
  Translation t = translate(g.gen, s, cli_target(a.target, g.domain));
  guard_overwrite(a.out, a.force);
  write_png(a.out, denormalize_image(t.image));
  if (!a.side_out.empty() && !t.side.empty()) {
    guard_overwrite(a.side_out, a.force);
    write_png(a.side_out, denormalize_image(t.side));
  }
  std::printf("wrote %s\n", a.out.c_str());
}

struct PoseArgs {
  std::string ckpt, frontal, profile, target, out;
  uint64_t seed = 0;
  bool force = false;
};

void run_pose(const PoseArgs& a) {
  LoadedGenerator g = load_generator(a.ckpt);
  Tensor<float> frontal = load_image_as(a.frontal, g.domain.image_channels, g.image_size);
  Tensor<float> profile = load_image_as(a.profile, g.domain.side_channels, g.image_size);
  Tensor<float> out = pose_normalize(g.gen, frontal, profile, cli_target(a.target, g.domain));
  guard_overwrite(a.out, a.force);
  write_png(a.out, denormalize_image(out));
  std::printf("wrote %s\n", a.out.c_str());
}

struct AugmentArgs {
  std::string ckpt, train_manifest, eval_manifest, counts, multipliers, out, synth, work;
  int cls_steps = 200, cls_base = 8, cls_batch = 8, seeds = 3;
  double cls_lr = 1e-3;
  uint64_t seed = 0;
  bool force = false;
};

void run_augment(const AugmentArgs& a) {
  AugmentationPlan plan;
  plan.per_category_counts = parse_counts(a.counts, "--counts");
  plan.multipliers = parse_counts(a.multipliers, "--multipliers");
  plan.source_manifest = a.train_manifest;
  plan.output_manifest = a.synth;

  ClassifierConfig cls;
  cls.base_channels = a.cls_base;
  cls.steps = a.cls_steps;
  cls.batch_size = a.cls_batch;
  cls.lr = a.cls_lr;
  cls.n_seeds = a.seeds;
  cls.eval_manifest = a.eval_manifest;

  guard_overwrite(a.out, a.force);
  AugmentationTable table = augment_and_classify(plan, a.ckpt, cls, a.seed, a.work);
  std::ofstream f(a.out);
  check(f.good(), "IO_ERROR", "cannot write " + a.out);
  f << augmentation_csv(table);
  for (const auto& r : table.rows)
    std::printf("%lld synthetic -> %.4f +- %.4f\n", static_cast<long long>(r.synthetic_count),
                r.mean_accuracy, r.std_accuracy);
  std::printf("wrote %s\n", a.out.c_str());
}

struct VizArgs {
  std::string ckpt, image, side, out_dir;
  int layer = 0, top = 8;
  uint64_t seed = 0;
  bool force = false;
};

void run_viz(const VizArgs& a) {
  LoadedGenerator g = load_generator(a.ckpt);
  ConditionedSample s = cli_sample(g, a.image, a.side);
  ActivationOverlays o = visualize_activations(g.gen, s, a.layer, a.top);
  if (o.clipped)
    std::fprintf(stderr, "warning: top %d exceeds the layer's %zu units; clipped\n", a.top,
                 o.overlays.size());
  guard_overwrite(a.out_dir, a.force);
  fs::create_directories(a.out_dir);
  for (size_t i = 0; i < o.overlays.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "unit_%03d.png", o.units[i]);
    write_png((fs::path(a.out_dir) / name).string(), o.overlays[i]);
  }
  std::printf("wrote %zu overlays to %s\n", o.overlays.size(), a.out_dir.c_str());
}

struct PlotArgs {
  std::string log, out, columns;
  uint64_t seed = 0;
  bool force = false;
};

void run_plot(const PlotArgs& a) {
  guard_overwrite(a.out, a.force);
  std::vector<std::string> cols;
  if (!a.columns.empty()) cols = split_list(a.columns);
  plot_losses(a.log, a.out, cols);
  std::printf("wrote %s\n", a.out.c_str());
}

struct ToyArgs {
  std::string out;
  int n = 16, categories = 2, size = 64;
  uint64_t seed = 0;
  bool force = false;
};

void run_toy(const ToyArgs& a) {
  guard_overwrite(a.out, a.force);
  generate_toy_dataset(a.n, a.categories, a.size, a.seed, a.out);
  std::printf("toy dataset with %d training images at %s\n", a.n, a.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute guided image synthesis toolkit"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the generator and critic");
  train->add_option("--data", ta.data, "dataset directory (domain.conf + train.csv)")
      ->required();
  train->add_option("--config", ta.config, "training configuration file");
  train->add_option("--steps", ta.steps, "target number of generator steps")->required();
  train->add_option("--seed", ta.seed, "run seed");
  train->add_option("--out", ta.out, "checkpoint directory")
      ->default_val(default_out_dir() + "/checkpoint");
  train->add_option("--resume", ta.resume, "checkpoint directory to continue from");
  train->add_option("--log", ta.log, "loss log CSV to append to");
  train->add_option("--parser", ta.parser, "frozen parser checkpoint (needed when lambda_p > 0)");
  train->add_flag("--force", ta.force, "overwrite existing outputs");
  static const std::vector<std::pair<std::string, std::string>> kTrainKeys = {
      {"--image-size", "image_size"},       {"--batch-size", "batch_size"},
      {"--lr", "base_lr"},                  {"--d-steps", "d_steps_per_g"},
      {"--epochs", "total_epochs"},         {"--decay-start", "decay_start_epoch"},
      {"--checkpoint-every", "checkpoint_every"}, {"--mode", "mode"},
      {"--lambda-bi", "lambda_bi"},         {"--lambda-cls", "lambda_cls"},
      {"--lambda-id", "lambda_id"},         {"--lambda-p", "lambda_p"},
      {"--lambda-gp", "lambda_gp"},         {"--gen-base", "gen_base_channels"},
      {"--latent", "gen_latent_channels"},  {"--residual", "gen_n_residual"},
      {"--disc-base", "disc_base_channels"},{"--disc-layers", "disc_n_layers"},
      {"--augment-flips", "augment_flips"},
  };
  auto values = std::make_shared<std::vector<std::string>>(kTrainKeys.size());
  for (size_t i = 0; i < kTrainKeys.size(); ++i)
    train->add_option(kTrainKeys[i].first, (*values)[i],
                      "override config key " + kTrainKeys[i].second);
  train->callback([&ta, train, values] {
    for (size_t i = 0; i < kTrainKeys.size(); ++i)
      if (train->count(kTrainKeys[i].first))
        ta.overrides.push_back({kTrainKeys[i].second, (*values)[i]});
    run_train(ta);
  });

  ParserArgs pa;
  auto* tp = app.add_subcommand("train-parser", "pretrain the face parsing network");
  tp->add_option("--data", pa.data, "dataset directory with masks_train.csv")->required();
  tp->add_option("--steps", pa.steps, "optimizer steps");
  tp->add_option("--seed", pa.seed, "run seed");
  tp->add_option("--out", pa.out, "parser checkpoint directory")
      ->default_val(default_out_dir() + "/parser");
  tp->add_option("--classes", pa.classes, "number of segmentation classes");
  tp->add_option("--base-channels", pa.base, "parser width");
  tp->add_option("--depth", pa.depth, "parser depth");
  tp->add_option("--batch-size", pa.batch, "batch size");
  tp->add_option("--lr", pa.lr, "learning rate");
  tp->add_flag("--force", pa.force, "overwrite existing outputs");
  tp->callback([&pa] { run_train_parser(pa); });

  TranslateArgs tra;
  auto* tr = app.add_subcommand("translate", "synthesize an image with target attributes");
  tr->add_option("--ckpt", tra.ckpt, "trainer checkpoint directory")->required();
  tr->add_option("--image", tra.image, "input image PNG");
  tr->add_option("--side", tra.side, "side condition PNG");
  tr->add_option("--target", tra.target, "comma-separated attribute names");
  tr->add_option("--out", tra.out, "output PNG")
      ->default_val(default_out_dir() + "/translated.png");
  tr->add_option("--side-out", tra.side_out, "output PNG for the synthesized side channel");
  tr->add_option("--seed", tra.seed, "run seed");
  tr->add_flag("--force", tra.force, "overwrite existing outputs");
  tr->callback([&tra] { run_translate(tra); });

  PoseArgs poa;
  auto* po = app.add_subcommand("pose-normalize", "refine a synthetic frontal with real texture");
  po->add_option("--ckpt", poa.ckpt, "trainer checkpoint directory")->required();
  po->add_option("--frontal", poa.frontal, "synthetic frontal PNG")->required();
  po->add_option("--profile", poa.profile, "real profile PNG")->required();
  po->add_option("--target", poa.target, "comma-separated attribute names")->required();
  po->add_option("--out", poa.out, "output PNG")
      ->default_val(default_out_dir() + "/pose_normalized.png");
  po->add_option("--seed", poa.seed, "run seed");
  po->add_flag("--force", poa.force, "overwrite existing outputs");
  po->callback([&poa] { run_pose(poa); });

  AugmentArgs aa;
  auto* au = app.add_subcommand("augment-eval", "train classifiers on real plus synthetic data");
  au->add_option("--ckpt", aa.ckpt, "trainer checkpoint directory")->required();
  au->add_option("--train-manifest", aa.train_manifest, "real training split CSV")->required();
  au->add_option("--eval-manifest", aa.eval_manifest, "held-out real split CSV")->required();
  au->add_option("--counts", aa.counts, "per-category synthetic counts, comma-separated")
      ->required();
  au->add_option("--multipliers", aa.multipliers, "plan sizes as multiples of the counts")
      ->default_val("0,1,2,4");
  au->add_option("--out", aa.out, "accuracy table CSV")
      ->default_val(default_out_dir() + "/augmentation.csv");
  au->add_option("--synth-manifest", aa.synth, "manifest to write for synthetic images");
  au->add_option("--work", aa.work, "directory for synthetic PNGs")
      ->default_val(default_out_dir() + "/augment_work");
  au->add_option("--cls-steps", aa.cls_steps, "classifier training steps");
  au->add_option("--cls-base", aa.cls_base, "classifier width");
  au->add_option("--cls-batch", aa.cls_batch, "classifier batch size");
  au->add_option("--cls-lr", aa.cls_lr, "classifier learning rate");
  au->add_option("--seeds", aa.seeds, "classifier reruns per row");
  au->add_option("--seed", aa.seed, "run seed");
  au->add_flag("--force", aa.force, "overwrite existing outputs");
  au->callback([&aa] { run_augment(aa); });

  VizArgs va;
  auto* vz = app.add_subcommand("viz-acts", "overlay the most active encoder units");
  vz->add_option("--ckpt", va.ckpt, "trainer checkpoint directory")->required();
  vz->add_option("--image", va.image, "input image PNG")->required();
  vz->add_option("--side", va.side, "side condition PNG");
  vz->add_option("--layer", va.layer, "encoder stage (0 = stem output)");
  vz->add_option("--top", va.top, "units to show");
  vz->add_option("--out-dir", va.out_dir, "directory for overlay PNGs")
      ->default_val(default_out_dir() + "/activations");
  vz->add_option("--seed", va.seed, "run seed");
  vz->add_flag("--force", va.force, "overwrite existing outputs");
  vz->callback([&va] { run_viz(va); });

  PlotArgs pla;
  auto* pl = app.add_subcommand("plot-losses", "render loss curves from a training log");
  pl->add_option("--log", pla.log, "loss log CSV")->required();
  pl->add_option("--out", pla.out, "output PNG")
      ->default_val(default_out_dir() + "/losses.png");
  pl->add_option("--columns", pla.columns, "comma-separated columns (default: critic panels)");
  pl->add_option("--seed", pla.seed, "run seed");
  pl->add_flag("--force", pla.force, "overwrite existing outputs");
  pl->callback([&pla] { run_plot(pla); });

  ToyArgs toa;
  auto* toy = app.add_subcommand("make-toy-data", "generate the procedural face dataset");
  toy->add_option("--n", toa.n, "training images");
  toy->add_option("--categories", toa.categories, "category count");
  toy->add_option("--size", toa.size, "image size");
  toy->add_option("--seed", toa.seed, "run seed");
  toy->add_option("--out", toa.out, "output directory")->default_val(default_out_dir() + "/toy");
  toy->add_flag("--force", toa.force, "overwrite existing outputs");
  toy->callback([&toa] { run_toy(toa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "ERROR %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ERROR INTERNAL: %s\n", e.what());
    return 1;
  }
  return 0;
}
