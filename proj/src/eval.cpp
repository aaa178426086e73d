#include "attrsyn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrsyn/checkpoint.hpp"
#include "attrsyn/config.hpp"
#include "attrsyn/image.hpp"
#include "attrsyn/optim.hpp"
#include "attrsyn/plot.hpp"

namespace attrsyn {

namespace fs = std::filesystem;

LoadedGenerator load_generator(const std::string& ckpt_dir) {
  Json meta;
  NamedArrays arrays = load_checkpoint(ckpt_dir, &meta);
  check(meta.value("kind", std::string()) == "trainer", "IO_ERROR",
        ckpt_dir + ": checkpoint does not hold a trainer state");

  LoadedGenerator out;
  out.domain = domain_from_config(parse_config_text(meta.at("domain").get<std::string>()));
  GeneratorSpec gs;
  const Json& g = meta.at("gen");
  gs.base_channels = g.at("base_channels").get<int>();
  gs.latent_channels = g.at("latent_channels").get<int>();
  gs.n_residual = g.at("n_residual").get<int>();
  gs.n_downsample = g.at("n_downsample").get<int>();
  gs.n_upsample = g.at("n_upsample").get<int>();
  out.gen = build_generator<float>(gs, out.domain, meta.value("seed", 0ull));
  restore_params(out.gen.params, arrays, "gen/");
  out.image_size = meta.at("image_size").get<int>();
  out.mode = meta.at("mode").get<std::string>();
  return out;
}

namespace {

Var<float> sample_input(const ConditionedSample& s, const DomainSpec& domain) {
  const auto& sh = s.image.shape();
  check(sh.size() == 3 && sh[0] == domain.image_channels, "SHAPE_MISMATCH",
        "sample image must be (" + std::to_string(domain.image_channels) + ",H,W)");
  Tensor<float> x4 = s.image.reshaped({1, sh[0], sh[1], sh[2]});
  if (domain.side_channels == 0) return constant(x4);
  check(!s.side.empty() && s.side.dim(0) == domain.side_channels, "SHAPE_MISMATCH",
        "sample side must carry " + std::to_string(domain.side_channels) + " channels");
  Tensor<float> s4 = s.side.reshaped({1, s.side.dim(0), s.side.dim(1), s.side.dim(2)});
  return concat_channels(constant(x4), constant(s4));
}

}  // namespace

Translation translate(const Generator<float>& g, const ConditionedSample& s,
                      const AttributeVector& y_target) {
  y_target.validate(g.domain);
  Var<float> z = g.encode(sample_input(s, g.domain));
  auto dec = g.decode(z, {y_target});
  Translation out;
  const auto& sh = dec.image->value.shape();
  out.image = dec.image->value.reshaped({sh[1], sh[2], sh[3]}).clone();
  if (dec.side) {
    const auto& ss = dec.side->value.shape();
    out.side = dec.side->value.reshaped({ss[1], ss[2], ss[3]}).clone();
  }
  return out;
}

Tensor<float> pose_normalize(const Generator<float>& g, const Tensor<float>& frontal,
                             const Tensor<float>& profile, const AttributeVector& y_target) {
  check(frontal.shape() == profile.shape(), "SHAPE_MISMATCH",
        "frontal " + frontal.shape_str() + " vs profile " + profile.shape_str());
  ConditionedSample s;
  s.image = frontal;
  s.side = profile;
  Translation t = translate(g, s, y_target);
  check(t.image.shape() == frontal.shape(), "INTERNAL", "output shape drifted");
  return t.image;
}

void AugmentationPlan::validate(const DomainSpec& spec) const {
  check(!spec.groups.empty(), "BAD_CONFIG",
        "augmentation needs a category group in the domain");
  check(per_category_counts.size() == spec.groups[0].size(), "BAD_CONFIG",
        "per-category counts must match the category group size");
  for (int c : per_category_counts) check(c >= 0, "BAD_CONFIG", "counts must be >= 0");
  check(!multipliers.empty(), "BAD_CONFIG", "plan has no multipliers");
  for (int m : multipliers) check(m >= 0, "BAD_CONFIG", "multipliers must be >= 0");
  check(!source_manifest.empty(), "BAD_CONFIG", "plan needs a source manifest");
}

LabeledImages load_category_images(const DatasetManifest& m, const DomainSpec& spec, int size) {
  check(!spec.groups.empty(), "BAD_CONFIG", "domain has no category group");
  const std::vector<int>& group = spec.groups[0];
  LabeledImages out;
  out.n_categories = static_cast<int>(group.size());
  for (const auto& e : m.entries) {
    std::string path = (fs::path(m.root) / e.image_path).string();
    Tensor<float> img = read_png(path, spec.image_channels);
    if (img.dim(1) != size || img.dim(2) != size) img = resize_bilinear(img, size, size);
    out.images.push_back(normalize_image(img));

    int label = -1;
    for (const auto& name : e.attribute_names) {
      int idx = spec.index_of(name);
      for (size_t k = 0; k < group.size(); ++k)
        if (group[k] == idx) {
          check(label == -1, "DATA_ERROR", e.image_path + ": more than one category label");
          label = static_cast<int>(k);
        }
    }
    check(label >= 0, "DATA_ERROR", e.image_path + ": no category label");
    out.labels.push_back(label);
  }
  return out;
}

namespace {

// conv-pool x3, global average, linear head
struct SmallClassifier {
  ParamStore<float> params;
  Conv2dLayer<float> c1, c2, c3;
  LinearLayer<float> fc;

  SmallClassifier(int in_channels, int base, int n_classes, uint64_t seed) {
    Rng rng(mix_seed(seed, 0xc1a5ull));
    c1 = Conv2dLayer<float>(params, "cls.c1", in_channels, base, 3, 1, 1, rng);
    c2 = Conv2dLayer<float>(params, "cls.c2", base, base * 2, 3, 1, 1, rng);
    c3 = Conv2dLayer<float>(params, "cls.c3", base * 2, base * 4, 3, 1, 1, rng);
    fc = LinearLayer<float>(params, "cls.fc", base * 4, n_classes, rng);
  }

  Var<float> logits(const Var<float>& x) const {
    Var<float> h = avg_pool2(relu(c1(x)));
    h = avg_pool2(relu(c2(h)));
    h = avg_pool2(relu(c3(h)));
    h = spatial_mean(h);
    int b = h->value.dim(0), c = h->value.dim(1);
    return fc(reshape(h, {b, c}));
  }
};

Tensor<float> stack_images(const std::vector<Tensor<float>>& images,
                           const std::vector<int>& idx) {
  int b = static_cast<int>(idx.size());
  int c = images[idx[0]].dim(0), h = images[idx[0]].dim(1), w = images[idx[0]].dim(2);
  Tensor<float> out = Tensor<float>::zeros({b, c, h, w});
  for (int i = 0; i < b; ++i)
    std::memcpy(out.data() + static_cast<int64_t>(i) * c * h * w, images[idx[i]].data(),
                sizeof(float) * c * h * w);
  return out;
}

int argmax_row(const Tensor<float>& logits, int row) {
  int k = logits.dim(1), best = 0;
  for (int j = 1; j < k; ++j)
    if (logits[static_cast<int64_t>(row) * k + j] > logits[static_cast<int64_t>(row) * k + best])
      best = j;
  return best;
}

}  // namespace

double classify_accuracy(const LabeledImages& train, const LabeledImages& test,
                         const ClassifierConfig& cfg, uint64_t seed) {
  check(!train.images.empty(), "DATA_ERROR", "empty classifier training split");
  check(!test.images.empty(), "DATA_ERROR", "empty classifier evaluation split");
  check(cfg.steps >= 0 && cfg.batch_size >= 1 && cfg.lr > 0, "BAD_CONFIG",
        "bad classifier settings");

  int n = static_cast<int>(train.images.size());
  int k = train.n_categories;
  int in_c = train.images[0].dim(0);
  SmallClassifier net(in_c, cfg.base_channels, k, seed);
  Adam adam;
  adam.beta1 = 0.9;
  adam.beta2 = 0.999;
  adam.init(net.params);

  int batch = std::min(cfg.batch_size, n);
  int epoch = 0, pos = 0;
  std::vector<int> order = epoch_order(n, seed, epoch);
  for (int step = 0; step < cfg.steps; ++step) {
    if (pos + batch > n) {
      ++epoch;
      pos = 0;
      order = epoch_order(n, seed, epoch);
    }
    std::vector<int> idx(order.begin() + pos, order.begin() + pos + batch);
    pos += batch;

    Tensor<float> x = stack_images(train.images, idx);
    Tensor<float> onehot = Tensor<float>::zeros({batch, k, 1, 1});
    for (int i = 0; i < batch; ++i)
      onehot[static_cast<int64_t>(i) * k + train.labels[idx[i]]] = 1.0f;

    Var<float> lg = net.logits(constant(x));
    Var<float> logp = channel_log_softmax(reshape(lg, {batch, k, 1, 1}));
    Var<float> loss =
        scalar_mul(sum_all(mask_mul(logp, onehot)), -1.0f / static_cast<float>(batch));
    check(std::isfinite(loss->value[0]), "NONFINITE_LOSS", "classifier loss is not finite");
    adam.step(net.params, backward_pass(loss), cfg.lr);
  }

  int correct = 0;
  for (size_t i = 0; i < test.images.size(); ++i) {
    std::vector<int> one = {static_cast<int>(i)};
    Tensor<float> lg = net.logits(constant(stack_images(test.images, one)))->value;
    if (argmax_row(lg, 0) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.images.size());
}

std::string augmentation_csv(const AugmentationTable& t) {
  std::ostringstream out;
  size_t seeds = t.rows.empty() ? 0 : t.rows[0].per_seed.size();
  out << "synthetic_count,accuracy_mean,accuracy_std";
  for (size_t i = 0; i < seeds; ++i) out << ",accuracy_seed" << i;
  out << '\n';
  out.precision(9);
  for (const auto& r : t.rows) {
    out << r.synthetic_count << ',' << r.mean_accuracy << ',' << r.std_accuracy;
    for (double a : r.per_seed) out << ',' << a;
    out << '\n';
  }
  return out.str();
}

AugmentationTable augment_and_classify(const AugmentationPlan& plan,
                                       const std::string& gen_ckpt_dir,
                                       const ClassifierConfig& cls, uint64_t seed,
                                       const std::string& work_dir) {
  LoadedGenerator lg = load_generator(gen_ckpt_dir);
  plan.validate(lg.domain);
  check(!cls.eval_manifest.empty(), "BAD_CONFIG", "classifier needs an eval manifest");
  check(cls.n_seeds >= 1, "BAD_CONFIG", "n_seeds must be >= 1");

  DatasetManifest src = load_manifest(plan.source_manifest, "train");
  check(!src.entries.empty(), "DATA_ERROR", "real training split is empty");
  Dataset pool(src, lg.domain, lg.image_size, lg.image_size);

  LabeledImages real = load_category_images(src, lg.domain, lg.image_size);
  LabeledImages held =
      load_category_images(load_manifest(cls.eval_manifest, "test"), lg.domain, lg.image_size);

  const std::vector<int>& group = lg.domain.groups[0];
  int n_cat = static_cast<int>(group.size());
  int max_mult = *std::max_element(plan.multipliers.begin(), plan.multipliers.end());

  // one nested synthetic pool per category, generated once at the top size
  std::vector<std::vector<Tensor<float>>> synth(n_cat);
  DatasetManifest synth_manifest;
  std::string manifest_dir = plan.output_manifest.empty()
                                 ? work_dir
                                 : fs::path(plan.output_manifest).parent_path().string();
  if (manifest_dir.empty()) manifest_dir = ".";
  synth_manifest.root = manifest_dir;
  synth_manifest.split = "synthetic";
  fs::create_directories(work_dir);

  for (int ci = 0; ci < n_cat; ++ci) {
    int total = max_mult * plan.per_category_counts[ci];
    std::vector<int> perm = epoch_order(pool.size(), mix_seed(seed, 0xa06ull, ci), 0);
    for (int j = 0; j < total; ++j) {
      ConditionedSample s = pool.load(perm[j % pool.size()]);
      AttributeVector y = s.attrs;
      for (int gi : group) y.values[gi] = 0;
      y.values[group[ci]] = 1;
      Translation t = translate(lg.gen, s, y);
      synth[ci].push_back(t.image);

      char name[64];
      std::snprintf(name, sizeof(name), "synth_c%d_%04d.png", ci, j);
      std::string path = (fs::path(work_dir) / name).string();
      write_png(path, denormalize_image(t.image));
      ManifestEntry e;
      e.image_path = fs::relative(path, manifest_dir).string();
      for (int ai = 0; ai < lg.domain.n_y(); ++ai)
        if (y.values[ai] == 1) e.attribute_names.push_back(lg.domain.attribute_names[ai]);
      synth_manifest.entries.push_back(e);
    }
  }
  if (!plan.output_manifest.empty()) save_manifest(synth_manifest, plan.output_manifest);

  AugmentationTable table;
  for (int m : plan.multipliers) {
    LabeledImages combined = real;
    int64_t count = 0;
    for (int ci = 0; ci < n_cat; ++ci) {
      int take = m * plan.per_category_counts[ci];
      for (int j = 0; j < take; ++j) {
        combined.images.push_back(synth[ci][j]);
        combined.labels.push_back(ci);
        ++count;
      }
    }
    AugmentationRow row;
    row.synthetic_count = count;
    for (int si = 0; si < cls.n_seeds; ++si)
      row.per_seed.push_back(
          classify_accuracy(combined, held, cls, mix_seed(seed, 0xaccull, si)));
    double mean = 0;
    for (double a : row.per_seed) mean += a;
    mean /= row.per_seed.size();
    double var = 0;
    for (double a : row.per_seed) var += (a - mean) * (a - mean);
    row.mean_accuracy = mean;
    row.std_accuracy = std::sqrt(var / row.per_seed.size());
    table.rows.push_back(row);
  }
  return table;
}

ActivationOverlays visualize_activations(const Generator<float>& g, const ConditionedSample& s,
                                         int layer_index, int top_k) {
  check(top_k >= 1, "BAD_ARGS", "top_k must be >= 1");
  int n_stages = static_cast<int>(g.down.size());
  check(layer_index >= 0 && layer_index <= n_stages, "BAD_ARGS",
        "layer index must lie in [0," + std::to_string(n_stages) + "]");

  Var<float> x = sample_input(s, g.domain);
  Var<float> h = relu(g.stem_n(g.stem(x)));
  for (int k = 0; k < layer_index; ++k) h = relu(g.down_n[k](g.down[k](h)));
  Tensor<float> act = h->value;  // (1,C,h,w)

  int channels = act.dim(1), ah = act.dim(2), aw = act.dim(3);
  int64_t hw = static_cast<int64_t>(ah) * aw;

  std::vector<std::pair<float, int>> ranked;
  for (int c = 0; c < channels; ++c) {
    float mx = act[c * hw];
    for (int64_t i = 1; i < hw; ++i) mx = std::max(mx, act[c * hw + i]);
    ranked.push_back({mx, c});
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  ActivationOverlays out;
  out.clipped = top_k > channels;
  int take = std::min(top_k, channels);

  int H = s.image.dim(1), W = s.image.dim(2);
  Tensor<float> base = denormalize_image(s.image);
  for (int pick = 0; pick < take; ++pick) {
    int c = ranked[pick].second;
    Tensor<float> map = Tensor<float>::zeros({1, 1, ah, aw});
    float lo = act[c * hw], hi = lo;
    for (int64_t i = 0; i < hw; ++i) {
      map[i] = act[c * hw + i];
      lo = std::min(lo, map[i]);
      hi = std::max(hi, map[i]);
    }
    float span = hi - lo;
    for (int64_t i = 0; i < hw; ++i) map[i] = span > 1e-12f ? (map[i] - lo) / span : 0.5f;

    Var<float> up = constant(map);
    while (up->value.dim(2) < H) up = upsample_nearest2(up);
    check(up->value.dim(2) == H && up->value.dim(3) == W, "INTERNAL",
          "activation map does not upsample to the input size");

    Tensor<float> overlay = Tensor<float>::zeros({3, H, W});
    int64_t plane = static_cast<int64_t>(H) * W;
    for (int64_t i = 0; i < plane; ++i) {
      float m = up->value[i];
      for (int ch = 0; ch < 3; ++ch) {
        float v = base.dim(0) == 3 ? base[ch * plane + i] : base[i];
        float tint = ch == 0 ? 255.0f : 40.0f;
        overlay[ch * plane + i] = v * (1.0f - 0.6f * m) + tint * 0.6f * m;
      }
    }
    out.overlays.push_back(overlay);
    out.units.push_back(c);
  }
  return out;
}

LossCurves load_loss_log(const std::string& csv_path) {
  std::ifstream in(csv_path);
  check(in.good(), "IO_ERROR", "cannot open loss log " + csv_path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "DATA_ERROR",
        csv_path + ": loss log is empty");
  std::vector<std::string> header = split_list(trim(line), ',');
  check(header.size() >= 2 && header[0] == "step", "DATA_ERROR",
        csv_path + ": malformed loss log header");

  LossCurves out;
  out.columns.assign(header.begin() + 1, header.end());
  out.series.resize(out.columns.size());

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<std::string> cols = split_list(t, ',');
    check(cols.size() == header.size(), "DATA_ERROR",
          csv_path + ":" + std::to_string(lineno) + ": wrong column count");
    for (size_t i = 0; i < cols.size(); ++i) {
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cols[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      check(used == cols[i].size(), "DATA_ERROR",
            csv_path + ":" + std::to_string(lineno) + ": bad number '" + cols[i] + "'");
      if (i == 0)
        out.steps.push_back(v);
      else
        out.series[i - 1].push_back(v);
    }
  }
  check(!out.steps.empty(), "DATA_ERROR", csv_path + ": loss log has no rows");
  return out;
}

const std::vector<std::string>& default_loss_panels() {
  static const std::vector<std::string> panels = {"cls_real", "d_fake_mean", "gradient_penalty",
                                                  "d_real_mean"};
  return panels;
}

void plot_losses(const std::string& csv_path, const std::string& out_png,
                 std::vector<std::string> columns) {
  LossCurves lc = load_loss_log(csv_path);
  if (columns.empty()) columns = default_loss_panels();

  std::vector<Tensor<float>> panels;
  for (const auto& name : columns) {
    auto it = std::find(lc.columns.begin(), lc.columns.end(), name);
    check(it != lc.columns.end(), "DATA_ERROR",
          "column " + name + " not in loss log " + csv_path);
    panels.push_back(
        render_line_chart(name, lc.steps, lc.series[it - lc.columns.begin()]));
  }
  write_png(out_png, tile_charts(panels, panels.size() > 1 ? 2 : 1));
}

}  // namespace attrsyn
