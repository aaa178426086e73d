#include "attrsyn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrsyn/config.hpp"
#include "attrsyn/image.hpp"

namespace fs = std::filesystem;

namespace attrsyn {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cols;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) cols.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') cols.push_back("");
  return cols;
}

LandmarkSet parse_landmarks(const std::string& field, const std::string& context) {
  LandmarkSet lm;
  if (field.empty()) return lm;
  for (const auto& pair : split_list(field, ';')) {
    size_t colon = pair.find(':');
    check(colon != std::string::npos, "DATA_ERROR",
          context + ": malformed landmark '" + pair + "' (want row:col)");
    try {
      float r = std::stof(pair.substr(0, colon));
      float c = std::stof(pair.substr(colon + 1));
      lm.points.emplace_back(r, c);
    } catch (const std::exception&) {
      fail("DATA_ERROR", context + ": malformed landmark '" + pair + "'");
    }
  }
  return lm;
}

std::string format_landmarks(const LandmarkSet& lm) {
  std::string out;
  char buf[64];
  for (size_t i = 0; i < lm.points.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g:%.9g", lm.points[i].first, lm.points[i].second);
    out += (i ? ";" : "") + std::string(buf);
  }
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::string& csv_path, const std::string& split) {
  std::ifstream in(csv_path);
  check(in.good(), "IO_ERROR", "cannot open manifest " + csv_path);
  DatasetManifest m;
  m.root = fs::path(csv_path).parent_path().string();
  m.split = split;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    if (first) {
      first = false;
      if (t == "image_path,landmarks,attributes") continue;
    }
    auto cols = split_csv_row(t);
    check(cols.size() == 3, "DATA_ERROR",
          csv_path + ": row needs 3 columns, got " + std::to_string(cols.size()));
    ManifestEntry e;
    e.image_path = cols[0];
    check(!e.image_path.empty(), "DATA_ERROR", csv_path + ": empty image path");
    e.landmarks = parse_landmarks(cols[1], e.image_path);
    e.attribute_names = split_list(cols[2], ';');
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& csv_path) {
  std::ofstream out(csv_path);
  check(out.good(), "IO_ERROR", "cannot write manifest " + csv_path);
  out << "image_path,landmarks,attributes\n";
  for (const auto& e : m.entries) {
    std::string attrs;
    for (size_t i = 0; i < e.attribute_names.size(); ++i)
      attrs += (i ? ";" : "") + e.attribute_names[i];
    out << e.image_path << "," << format_landmarks(e.landmarks) << "," << attrs << "\n";
  }
}

Tensor<float> make_landmark_heatmap(const LandmarkSet& lm, int h, int w, float sigma) {
  check(sigma > 0, "BAD_ARGS", "heatmap sigma must be positive");
  for (const auto& [r, c] : lm.points)
    check(r >= 0 && r < h && c >= 0 && c < w, "DATA_ERROR",
          "landmark (" + std::to_string(r) + "," + std::to_string(c) + ") outside " +
              std::to_string(h) + "x" + std::to_string(w));
  Tensor<float> out = Tensor<float>::zeros({1, h, w});
  float inv = 1.0f / (2.0f * sigma * sigma);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      float best = 0.0f;
      for (const auto& [r, c] : lm.points) {
        float d2 = (i - r) * (i - r) + (j - c) * (j - c);
        best = std::max(best, std::exp(-d2 * inv));
      }
      out[static_cast<int64_t>(i) * w + j] = 2.0f * best - 1.0f;
    }
  return out;
}

Dataset::Dataset(DatasetManifest manifest, DomainSpec spec, int target_h, int target_w)
    : manifest_(std::move(manifest)), spec_(std::move(spec)), th_(target_h), tw_(target_w) {
  spec_.validate();
  check(th_ > 0 && tw_ > 0 && th_ % 16 == 0 && tw_ % 16 == 0, "BAD_CONFIG",
        "target size must be positive and divisible by 16");
  sigma_ = 2.0f * static_cast<float>(th_) / 128.0f;
}

ConditionedSample Dataset::load(int index) const {
  check(index >= 0 && index < size(), "DATA_ERROR", "sample index out of range");
  const ManifestEntry& e = manifest_.entries[index];
  std::string path = (fs::path(manifest_.root) / e.image_path).string();
  try {
    ConditionedSample s;
    Tensor<float> img = read_png(path, spec_.image_channels);
    int sh = img.dim(1), sw = img.dim(2);
    for (const auto& [r, c] : e.landmarks.points)
      check(r >= 0 && r < sh && c >= 0 && c < sw, "DATA_ERROR",
            "landmark outside source image bounds");
    s.image = normalize_image(resize_bilinear(img, th_, tw_));
    if (spec_.side_channels > 0) {
      if (!e.landmarks.points.empty()) {
        check(spec_.side_channels == 1, "BAD_CONFIG",
              "landmark side input requires side_channels = 1");
        LandmarkSet scaled;
        for (const auto& [r, c] : e.landmarks.points)
          scaled.points.emplace_back((r + 0.5f) * th_ / sh - 0.5f,
                                     (c + 0.5f) * tw_ / sw - 0.5f);
        s.side = make_landmark_heatmap(scaled, th_, tw_, sigma_);
      } else {
        fs::path p(path);
        std::string side_path = (p.parent_path() / (p.stem().string() + "_side.png")).string();
        Tensor<float> side = read_png(side_path, spec_.side_channels);
        s.side = normalize_image(resize_bilinear(side, th_, tw_));
      }
    }
    s.attrs = encode_attributes(e.attribute_names, spec_);
    s.attrs.validate(spec_);
    return s;
  } catch (const Error& err) {
    fail("DATA_ERROR", e.image_path + ": " + err.what());
  }
}

Dataset load_dataset(const DatasetManifest& manifest, const DomainSpec& spec, int target_h,
                     int target_w) {
  return Dataset(manifest, spec, target_h, target_w);
}

namespace {

Tensor<float> flip_cols(const Tensor<float>& chw) {
  Tensor<float> out = Tensor<float>::zeros(chw.shape());
  int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h; ++i) {
      const float* src = chw.data() + (static_cast<int64_t>(k) * h + i) * w;
      float* dst = out.data() + (static_cast<int64_t>(k) * h + i) * w;
      for (int j = 0; j < w; ++j) dst[j] = src[w - 1 - j];
    }
  return out;
}

}  // namespace

ConditionedSample augment_flip(const ConditionedSample& s, bool coin) {
  if (!coin) return s;
  ConditionedSample out;
  out.image = flip_cols(s.image);
  if (!s.side.empty()) out.side = flip_cols(s.side);
  out.attrs = s.attrs;
  return out;
}

std::vector<int> epoch_order(int n, uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, static_cast<uint64_t>(epoch), 0x0bdeull));
  for (int i = n - 1; i > 0; --i) {
    int j = rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }
  return order;
}

std::vector<AttributeVector> sample_target_attributes(
    const std::vector<AttributeVector>& batch_source_y, const DomainSpec& spec, Rng& rng) {
  std::vector<int> in_group(spec.n_y(), 0);
  for (const auto& g : spec.groups)
    for (int idx : g) in_group[idx] = 1;
  std::vector<AttributeVector> out;
  out.reserve(batch_source_y.size());
  for (size_t b = 0; b < batch_source_y.size(); ++b) {
    AttributeVector y;
    y.values.assign(spec.n_y(), 0);
    for (const auto& g : spec.groups) y.values[g[rng.uniform_int(static_cast<int>(g.size()))]] = 1;
    for (int i = 0; i < spec.n_y(); ++i)
      if (!in_group[i]) y.values[i] = rng.bernoulli() ? 1 : 0;
    y.validate(spec);
    out.push_back(std::move(y));
  }
  return out;
}

// ---------------------------------------------------------------------------
// toy data
// ---------------------------------------------------------------------------

namespace {

struct ToyFace {
  Tensor<float> image;  // (3,N,N) 0..255
  Tensor<float> mask;   // (1,N,N) class ids
  LandmarkSet landmarks;
};

ToyFace render_toy_face(int size, int category, int n_categories, uint64_t seed,
                        int64_t index) {
  Rng rng(mix_seed(seed, static_cast<uint64_t>(index), 0xfaceull));
  const float n = static_cast<float>(size);

  float cy = n * 0.5f + static_cast<float>(rng.uniform(-n / 32, n / 32));
  float cx = n * 0.5f + static_cast<float>(rng.uniform(-n / 32, n / 32));
  float ax = n * 0.34f + static_cast<float>(rng.uniform(-n / 64, n / 64));  // vertical semi-axis
  float bx = n * 0.26f + static_cast<float>(rng.uniform(-n / 64, n / 64));

  float skin[3] = {205 + static_cast<float>(rng.uniform(-15, 15)),
                   165 + static_cast<float>(rng.uniform(-15, 15)),
                   135 + static_cast<float>(rng.uniform(-15, 15))};
  float bg[3] = {35 + static_cast<float>(rng.uniform(-10, 10)),
                 40 + static_cast<float>(rng.uniform(-10, 10)),
                 50 + static_cast<float>(rng.uniform(-10, 10))};
  float eye_col[3] = {30 + static_cast<float>(rng.uniform(-8, 8)),
                      30 + static_cast<float>(rng.uniform(-8, 8)),
                      35 + static_cast<float>(rng.uniform(-8, 8))};
  float lip_col[3] = {185 + static_cast<float>(rng.uniform(-12, 12)),
                      45 + static_cast<float>(rng.uniform(-8, 8)),
                      60 + static_cast<float>(rng.uniform(-8, 8))};

  float eye_dy = -0.10f * n, eye_dx = 0.11f * n;
  float eye_r = 0.045f * n + static_cast<float>(rng.uniform(-n / 256, n / 256));
  float my = cy + 0.16f * n;
  float mw = 0.14f * n;
  float thick = std::max(1.5f, 0.03f * n);

  // mouth-end vertical offset encodes the category
  float u = n_categories > 1
                ? 2.0f * static_cast<float>(category) / (n_categories - 1) - 1.0f
                : 0.0f;
  float offset = u * 0.07f * n;
  float curv = offset / (mw * mw);

  // coverage ramp over ~3px keeps edges band-limited
  auto soft = [](float d) { return std::min(1.0f, std::max(0.0f, 0.5f - d / 3.0f)); };

  ToyFace f;
  f.image = Tensor<float>::zeros({3, size, size});
  f.mask = Tensor<float>::zeros({1, size, size});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      float dy = (i - cy) / ax, dx = (j - cx) / bx;
      float r = std::sqrt(dy * dy + dx * dx);
      float grad = std::sqrt(dy * dy / (ax * ax) + dx * dx / (bx * bx)) / std::max(r, 1e-6f);
      float a_face = soft((r - 1.0f) / std::max(grad, 1e-6f));

      float el = std::hypot(i - (cy + eye_dy), j - (cx - eye_dx));
      float er = std::hypot(i - (cy + eye_dy), j - (cx + eye_dx));
      float a_eye = soft(std::min(el, er) - eye_r);

      float mdx = j - cx;
      float d_mouth = std::max(std::abs(i - (my + curv * mdx * mdx)) - thick,
                               std::abs(mdx) - mw);
      float a_mouth = soft(d_mouth);

      int cls = a_face > 0.5f ? 1 : 0;
      if (a_eye > 0.5f) cls = 2;
      if (a_mouth > 0.5f) cls = 3;
      for (int k = 0; k < 3; ++k) {
        float v = bg[k] + a_face * (skin[k] - bg[k]);
        v += a_eye * (eye_col[k] - v);
        v += a_mouth * (lip_col[k] - v);
        v = std::min(255.0f, std::max(0.0f, v));
        f.image[(static_cast<int64_t>(k) * size + i) * size + j] = v;
      }
      f.mask[static_cast<int64_t>(i) * size + j] = static_cast<float>(cls);
    }

  f.landmarks.points = {{cy + eye_dy, cx - eye_dx},
                        {cy + eye_dy, cx + eye_dx},
                        {my + offset, cx - mw},
                        {my + offset, cx + mw}};
  for (auto& [r, c] : f.landmarks.points) {
    r = std::min(n - 1, std::max(0.0f, r));
    c = std::min(n - 1, std::max(0.0f, c));
  }
  return f;
}

}  // namespace

void generate_toy_dataset(int n_images, int n_categories, int size, uint64_t seed,
                          const std::string& out_dir) {
  check(n_images >= 1, "BAD_ARGS", "need at least one image");
  check(n_categories >= 1 && n_categories <= 8, "BAD_ARGS", "categories must be in [1,8]");
  check(size >= 32, "BAD_ARGS", "toy image size must be >= 32");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  DomainSpec spec;
  for (int c = 0; c < n_categories; ++c) spec.attribute_names.push_back("cat" + std::to_string(c));
  std::vector<int> g(n_categories);
  for (int c = 0; c < n_categories; ++c) g[c] = c;
  spec.groups.push_back(g);
  spec.image_channels = 3;
  spec.side_channels = 1;
  spec.validate();
  {
    std::ofstream conf(fs::path(out_dir) / "domain.conf");
    check(conf.good(), "IO_ERROR", "cannot write domain.conf in " + out_dir);
    conf << domain_to_config(spec);
  }

  int n_test = std::max(1, n_images / 4);
  DatasetManifest train, test;
  train.root = test.root = out_dir;
  train.split = "train";
  test.split = "test";
  std::ofstream mtrain(fs::path(out_dir) / "masks_train.csv");
  std::ofstream mtest(fs::path(out_dir) / "masks_test.csv");
  check(mtrain.good() && mtest.good(), "IO_ERROR", "cannot write mask manifests in " + out_dir);
  mtrain << "image_path,mask_path\n";
  mtest << "image_path,mask_path\n";

  char name[64];
  for (int i = 0; i < n_images + n_test; ++i) {
    int category = i % n_categories;
    ToyFace f = render_toy_face(size, category, n_categories, seed, i);
    std::snprintf(name, sizeof(name), "images/img_%04d.png", i);
    std::string img_rel = name;
    std::snprintf(name, sizeof(name), "masks/mask_%04d.png", i);
    std::string mask_rel = name;
    write_png((fs::path(out_dir) / img_rel).string(), f.image);
    write_png((fs::path(out_dir) / mask_rel).string(), f.mask);

    ManifestEntry e;
    e.image_path = img_rel;
    e.landmarks = f.landmarks;
    e.attribute_names = {"cat" + std::to_string(category)};
    bool is_train = i < n_images;
    (is_train ? train : test).entries.push_back(e);
    (is_train ? mtrain : mtest) << img_rel << "," << mask_rel << "\n";
  }
  save_manifest(train, (fs::path(out_dir) / "train.csv").string());
  save_manifest(test, (fs::path(out_dir) / "test.csv").string());
}

}  // namespace attrsyn
