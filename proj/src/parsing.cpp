#include "attrsyn/parsing.hpp"

#include <filesystem>
#include <fstream>

#include "attrsyn/config.hpp"
#include "attrsyn/data.hpp"
#include "attrsyn/image.hpp"
#include "attrsyn/optim.hpp"

namespace attrsyn {

namespace fs = std::filesystem;

MaskDataset load_mask_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path);
  check(in.good(), "IO_ERROR", "cannot open manifest " + csv_path);
  MaskDataset ds;
  ds.root = fs::path(csv_path).parent_path().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (lineno == 1 && t == "image_path,mask_path") continue;
    auto cols = split_list(t, ',');
    check(cols.size() == 2, "DATA_ERROR",
          csv_path + ":" + std::to_string(lineno) + ": expected 2 columns");
    ds.pairs.push_back({trim(cols[0]), trim(cols[1])});
  }
  return ds;
}

MaskSample load_mask_sample(const MaskDataset& ds, size_t index, int n_classes,
                            int image_channels) {
  check(index < ds.pairs.size(), "DATA_ERROR", "mask sample index out of range");
  const MaskPair& pr = ds.pairs[index];
  std::string img_path = (fs::path(ds.root) / pr.image_path).string();
  std::string mask_path = (fs::path(ds.root) / pr.mask_path).string();

  MaskSample s;
  s.image = normalize_image(read_png(img_path, image_channels));
  Tensor<float> raw = read_png(mask_path, 1);
  int h = raw.dim(1), w = raw.dim(2);
  check(h == s.image.dim(1) && w == s.image.dim(2), "DATA_ERROR",
        mask_path + ": mask size does not match image size");

  s.classes = Tensor<int>::zeros({h, w});
  s.labels = Tensor<float>::zeros({n_classes, h, w});
  for (int64_t i = 0; i < raw.numel(); ++i) {
    float v = raw[i];
    int c = static_cast<int>(v);
    check(static_cast<float>(c) == v && c >= 0 && c < n_classes, "DATA_ERROR",
          mask_path + ": mask value " + std::to_string(v) + " is not a class index < " +
              std::to_string(n_classes));
    s.classes[i] = c;
    s.labels[static_cast<int64_t>(c) * h * w + i] = 1.0f;
  }
  return s;
}

Var<float> parser_ce_loss(Parser<float>& parser, const Var<float>& images,
                          const Tensor<float>& onehot) {
  Var<float> logp = channel_log_softmax(parser.logits(images));
  check(logp->value.same_shape(onehot), "SHAPE_MISMATCH",
        "label tensor must match parser output " + logp->value.shape_str());
  const auto& sh = onehot.shape();
  double denom = static_cast<double>(sh[0]) * sh[2] * sh[3];
  Var<float> picked = mask_mul(logp, onehot);
  return scalar_mul(sum_all(picked), static_cast<float>(-1.0 / denom));
}

namespace {

// Stacks the given samples into (B,C,H,W) images and (B,K,H,W) one-hot labels.
void stack_mask_batch(const std::vector<MaskSample>& samples, Tensor<float>& images,
                      Tensor<float>& onehot) {
  int b = static_cast<int>(samples.size());
  int c = samples[0].image.dim(0), h = samples[0].image.dim(1), w = samples[0].image.dim(2);
  int k = samples[0].labels.dim(0);
  images = Tensor<float>::zeros({b, c, h, w});
  onehot = Tensor<float>::zeros({b, k, h, w});
  for (int i = 0; i < b; ++i) {
    check(samples[i].image.dim(1) == h && samples[i].image.dim(2) == w, "DATA_ERROR",
          "all mask samples in a batch must share dimensions");
    std::memcpy(images.data() + static_cast<int64_t>(i) * c * h * w, samples[i].image.data(),
                sizeof(float) * c * h * w);
    std::memcpy(onehot.data() + static_cast<int64_t>(i) * k * h * w, samples[i].labels.data(),
                sizeof(float) * k * h * w);
  }
}

}  // namespace

ParserTrainResult train_parser(const MaskDataset& ds, const ParserSpec& spec,
                               const ParserTrainOptions& opt, uint64_t seed,
                               int image_channels) {
  check(opt.steps >= 0, "BAD_CONFIG", "parser training steps must be >= 0");
  check(opt.batch_size >= 1, "BAD_CONFIG", "parser batch size must be >= 1");
  check(opt.lr > 0.0, "BAD_CONFIG", "parser learning rate must be positive");

  ParserTrainResult out{build_parser<float>(spec, image_channels, seed), {}};
  if (opt.steps == 0) return out;

  check(!ds.pairs.empty(), "DATA_ERROR", "mask dataset is empty");
  int n = static_cast<int>(ds.pairs.size());
  int batch = std::min(opt.batch_size, n);

  Adam adam;
  adam.beta1 = opt.beta1;
  adam.beta2 = opt.beta2;
  adam.init(out.parser.params);

  int epoch = 0, pos = 0;
  std::vector<int> order = epoch_order(n, seed, epoch);
  for (int step = 0; step < opt.steps; ++step) {
    if (pos + batch > n) {
      ++epoch;
      pos = 0;
      order = epoch_order(n, seed, epoch);
    }
    std::vector<MaskSample> samples;
    for (int i = 0; i < batch; ++i)
      samples.push_back(
          load_mask_sample(ds, static_cast<size_t>(order[pos + i]), spec.n_classes,
                           image_channels));
    pos += batch;

    Tensor<float> images, onehot;
    stack_mask_batch(samples, images, onehot);
    Var<float> loss = parser_ce_loss(out.parser, constant(images), onehot);
    double lv = loss->value[0];
    check(std::isfinite(lv), "NONFINITE_LOSS", "parser cross-entropy is not finite");
    out.losses.push_back(lv);

    GradMap<float> grads = backward_pass(loss);
    adam.step(out.parser.params, grads, opt.lr);
  }
  return out;
}

ParserAccuracy evaluate_parser(Parser<float>& parser, const MaskDataset& ds,
                               int image_channels) {
  check(!ds.pairs.empty(), "DATA_ERROR", "mask dataset is empty");
  int k = parser.spec.n_classes;
  std::vector<int64_t> correct(k, 0), total(k, 0);
  for (size_t i = 0; i < ds.pairs.size(); ++i) {
    MaskSample s = load_mask_sample(ds, i, k, image_channels);
    int h = s.classes.dim(0), w = s.classes.dim(1);
    Tensor<float> x4 = s.image.reshaped({1, s.image.dim(0), h, w});
    Tensor<float> post = parser.posteriors(constant(x4))->value;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        int best = 0;
        float bv = post.at4(0, 0, r, c);
        for (int cc = 1; cc < k; ++cc)
          if (post.at4(0, cc, r, c) > bv) {
            bv = post.at4(0, cc, r, c);
            best = cc;
          }
        int truth = s.classes[static_cast<int64_t>(r) * w + c];
        ++total[truth];
        if (best == truth) ++correct[truth];
      }
  }
  ParserAccuracy acc;
  int64_t call = 0, tall = 0;
  int present = 0;
  double psum = 0.0;
  for (int c = 0; c < k; ++c) {
    call += correct[c];
    tall += total[c];
    if (total[c] == 0) {
      acc.per_class.push_back(-1.0);
    } else {
      double a = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
      acc.per_class.push_back(a);
      psum += a;
      ++present;
    }
  }
  acc.overall = static_cast<double>(call) / static_cast<double>(tall);
  acc.mean_present = present ? psum / present : 0.0;
  return acc;
}

void save_parser(const std::string& dir, const Parser<float>& parser, uint64_t seed) {
  Json meta;
  meta["kind"] = "parser";
  meta["n_classes"] = parser.spec.n_classes;
  meta["base_channels"] = parser.spec.base_channels;
  meta["depth"] = parser.spec.depth;
  meta["in_channels"] = parser.stem.w->value.dim(1);
  meta["seed"] = seed;
  save_checkpoint(dir, snapshot_params(parser.params, "parser/"), meta);
}

Parser<float> load_parser(const std::string& dir) {
  Json meta;
  NamedArrays arrays = load_checkpoint(dir, &meta);
  check(meta.value("kind", std::string()) == "parser", "IO_ERROR",
        dir + ": checkpoint does not hold a parser");
  ParserSpec spec;
  spec.n_classes = meta.at("n_classes").get<int>();
  spec.base_channels = meta.at("base_channels").get<int>();
  spec.depth = meta.at("depth").get<int>();
  int in_channels = meta.at("in_channels").get<int>();
  Parser<float> p = build_parser<float>(spec, in_channels, meta.value("seed", 0ull));
  restore_params(p.params, arrays, "parser/");
  return p;
}

}  // namespace attrsyn
