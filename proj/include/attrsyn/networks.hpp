#pragma once

#include "attrsyn/domain.hpp"
#include "attrsyn/nn.hpp"

namespace attrsyn {

struct GeneratorSpec {
  int base_channels = 64;
  int n_downsample = 4;  // stride-2 stages after the stride-1 stem conv
  int n_residual = 6;
  int n_upsample = 4;
  int latent_channels = 256;

  void validate() const {
    check(base_channels >= 1 && latent_channels >= 1, "BAD_CONFIG",
          "generator channel counts must be positive");
    check(n_downsample >= 1, "BAD_CONFIG", "n_downsample must be >= 1");
    check((1 << n_downsample) == 16, "BAD_CONFIG",
          "encoder must contract spatially by exactly 16");
    check((1 << n_upsample) == 16, "BAD_CONFIG",
          "decoder must expand spatially by exactly 16");
    check(n_residual >= 0, "BAD_CONFIG", "n_residual must be >= 0");
  }
};

struct DiscriminatorSpec {
  int base_channels = 64;
  int n_layers = 6;  // stride-2 convs; patch map is input_size / 2^n_layers
  int input_channels = 4;
  int input_size = 128;

  void validate() const {
    check(base_channels >= 1 && input_channels >= 1, "BAD_CONFIG",
          "discriminator channel counts must be positive");
    check(n_layers >= 3, "BAD_CONFIG", "discriminator needs at least 3 layers");
    check(input_size >= (1 << n_layers) && input_size % (1 << n_layers) == 0, "BAD_CONFIG",
          "input_size must be a positive multiple of 2^n_layers");
  }
};

struct ParserSpec {
  int n_classes = 4;  // background + skin + eyes + lips
  int base_channels = 16;
  int depth = 3;

  void validate() const {
    check(n_classes >= 2, "BAD_CONFIG", "parser needs at least 2 classes");
    check(base_channels >= 1, "BAD_CONFIG", "parser base_channels must be positive");
    check(depth >= 1, "BAD_CONFIG", "parser depth must be >= 1");
  }
};

template <typename S>
struct ResBlock {
  Conv2dLayer<S> c1, c2;
  InstanceNormLayer<S> n1, n2;

  ResBlock() = default;
  ResBlock(ParamStore<S>& ps, const std::string& prefix, int ch, Rng& rng) {
    c1 = Conv2dLayer<S>(ps, prefix + ".c1", ch, ch, 3, 1, 1, rng);
    n1 = InstanceNormLayer<S>(ps, prefix + ".n1", ch);
    c2 = Conv2dLayer<S>(ps, prefix + ".c2", ch, ch, 3, 1, 1, rng);
    n2 = InstanceNormLayer<S>(ps, prefix + ".n2", ch);
  }

  Var<S> operator()(const Var<S>& x) const { return add(x, n2(c2(relu(n1(c1(x)))))); }
};

// Encoder: stride-1 7x7 stem then four stride-2 3x3 convs down to the latent.
// Decoder: attribute-fused conv, residual stack, four sub-pixel x2 stages,
// split tanh heads for the image and the side output.
template <typename S>
struct Generator {
  GeneratorSpec spec;
  DomainSpec domain;
  ParamStore<S> params;

  Conv2dLayer<S> stem;
  InstanceNormLayer<S> stem_n;
  std::vector<Conv2dLayer<S>> down;
  std::vector<InstanceNormLayer<S>> down_n;
  Conv2dLayer<S> fuse;
  InstanceNormLayer<S> fuse_n;
  std::vector<ResBlock<S>> res;
  std::vector<Conv2dLayer<S>> up;
  std::vector<InstanceNormLayer<S>> up_n;
  Conv2dLayer<S> head_img, head_side;

  int encoder_input_channels() const { return domain.image_channels + domain.side_channels; }

  Var<S> encode(const Var<S>& x) const {
    const auto& sh = x->value.shape();
    check(sh.size() == 4, "SHAPE_MISMATCH", "encoder input must be 4D");
    check(sh[1] == encoder_input_channels(), "SHAPE_MISMATCH",
          "encoder expects " + std::to_string(encoder_input_channels()) + " channels, got " +
              std::to_string(sh[1]));
    check(sh[2] % 16 == 0 && sh[3] % 16 == 0, "SHAPE_MISMATCH",
          "encoder input dims must be divisible by 16, got " + std::to_string(sh[2]) + "x" +
              std::to_string(sh[3]));
    Var<S> h = relu(stem_n(stem(x)));
    for (size_t k = 0; k < down.size(); ++k) h = relu(down_n[k](down[k](h)));
    return h;
  }

  struct Decoded {
    Var<S> image;
    Var<S> side;  // null when side_channels == 0
  };

  Decoded decode(const Var<S>& z, const std::vector<AttributeVector>& ys) const {
    const auto& sh = z->value.shape();
    check(sh.size() == 4 && sh[1] == spec.latent_channels, "SHAPE_MISMATCH",
          "latent expects " + std::to_string(spec.latent_channels) + " channels, got " +
              std::to_string(sh.size() == 4 ? sh[1] : -1));
    check(static_cast<int>(ys.size()) == sh[0], "SHAPE_MISMATCH",
          "attribute batch size vs latent batch size");
    for (const auto& y : ys)
      check(static_cast<int>(y.values.size()) == domain.n_y(), "SHAPE_MISMATCH",
            "attribute length vs n_y");
    Var<S> ymap = constant(replicate_attributes_batch<S>(ys, sh[2], sh[3]));
    Var<S> h = relu(fuse_n(fuse(concat_channels(z, ymap))));
    for (const auto& r : res) h = r(h);
    for (size_t k = 0; k < up.size(); ++k)
      h = relu(up_n[k](pixel_shuffle(up[k](h), 2)));
    Decoded out;
    out.image = tanh_v(head_img(h));
    if (domain.side_channels > 0) out.side = tanh_v(head_side(h));
    return out;
  }
};

template <typename S>
Generator<S> build_generator(const GeneratorSpec& gs, const DomainSpec& domain,
                             uint64_t seed) {
  gs.validate();
  domain.validate();
  Generator<S> g;
  g.spec = gs;
  g.domain = domain;
  Rng rng(mix_seed(seed, 0x9e4ull));

  int in_c = g.encoder_input_channels();
  g.stem = Conv2dLayer<S>(g.params, "enc.stem", in_c, gs.base_channels, 7, 1, 3, rng);
  g.stem_n = InstanceNormLayer<S>(g.params, "enc.stem_n", gs.base_channels);
  int ch = gs.base_channels;
  for (int k = 0; k < gs.n_downsample; ++k) {
    int out_c = (k == gs.n_downsample - 1) ? gs.latent_channels : ch * 2;
    g.down.push_back(
        Conv2dLayer<S>(g.params, "enc.down" + std::to_string(k), ch, out_c, 3, 2, 1, rng));
    g.down_n.push_back(
        InstanceNormLayer<S>(g.params, "enc.down" + std::to_string(k) + "_n", out_c));
    ch = out_c;
  }

  g.fuse = Conv2dLayer<S>(g.params, "dec.fuse", gs.latent_channels + domain.n_y(),
                          gs.latent_channels, 3, 1, 1, rng);
  g.fuse_n = InstanceNormLayer<S>(g.params, "dec.fuse_n", gs.latent_channels);
  for (int k = 0; k < gs.n_residual; ++k)
    g.res.push_back(ResBlock<S>(g.params, "dec.res" + std::to_string(k), gs.latent_channels, rng));
  ch = gs.latent_channels;
  for (int k = 0; k < gs.n_upsample; ++k) {
    int out_c = std::max(8, ch / 2);
    g.up.push_back(
        Conv2dLayer<S>(g.params, "dec.up" + std::to_string(k), ch, 4 * out_c, 3, 1, 1, rng));
    g.up_n.push_back(
        InstanceNormLayer<S>(g.params, "dec.up" + std::to_string(k) + "_n", out_c));
    ch = out_c;
  }
  g.head_img = Conv2dLayer<S>(g.params, "dec.head_img", ch, domain.image_channels, 7, 1, 3, rng);
  if (domain.side_channels > 0)
    g.head_side =
        Conv2dLayer<S>(g.params, "dec.head_side", ch, domain.side_channels, 7, 1, 3, rng);
  return g;
}

// Patch critic: stride-2 conv stack with leaky activations and no
// normalization; unbounded per-patch score map plus an FC attribute head.
template <typename S>
struct Discriminator {
  DiscriminatorSpec spec;
  int n_y = 0;
  ParamStore<S> params;

  std::vector<Conv2dLayer<S>> layers;
  Conv2dLayer<S> src_head;
  LinearLayer<S> cls_head;

  struct Scores {
    Var<S> src;  // (B, 1, s, s)
    Var<S> cls;  // (B, n_y)
  };

  Scores forward(const Var<S>& x) const {
    const auto& sh = x->value.shape();
    check(sh.size() == 4, "SHAPE_MISMATCH", "critic input must be 4D");
    check(sh[1] == spec.input_channels, "SHAPE_MISMATCH",
          "critic expects " + std::to_string(spec.input_channels) + " channels, got " +
              std::to_string(sh[1]));
    check(sh[2] == spec.input_size && sh[3] == spec.input_size, "SHAPE_MISMATCH",
          "critic expects " + std::to_string(spec.input_size) + "x" +
              std::to_string(spec.input_size) + " input, got " + std::to_string(sh[2]) + "x" +
              std::to_string(sh[3]));
    Var<S> h = x;
    for (const auto& l : layers) h = leaky_relu(l(h), S(0.01));
    Scores out;
    out.src = src_head(h);
    const auto& fs = h->value.shape();
    out.cls = cls_head(reshape(h, {fs[0], fs[1] * fs[2] * fs[3]}));
    return out;
  }
};

template <typename S>
Discriminator<S> build_discriminator(const DiscriminatorSpec& ds, int n_y, uint64_t seed) {
  ds.validate();
  check(n_y >= 1, "BAD_CONFIG", "n_y must be >= 1");
  Discriminator<S> d;
  d.spec = ds;
  d.n_y = n_y;
  Rng rng(mix_seed(seed, 0xd15ull));
  int ch = ds.input_channels;
  for (int k = 0; k < ds.n_layers; ++k) {
    int out_c = std::min(ds.base_channels << k, 512);
    d.layers.push_back(
        Conv2dLayer<S>(d.params, "d.conv" + std::to_string(k), ch, out_c, 4, 2, 1, rng));
    ch = out_c;
  }
  d.src_head = Conv2dLayer<S>(d.params, "d.src", ch, 1, 3, 1, 1, rng);
  int s = ds.input_size >> ds.n_layers;
  d.cls_head = LinearLayer<S>(d.params, "d.cls", ch * s * s, n_y, rng);
  return d;
}

// U-shaped parser from depthwise-separable blocks; skip connections keep the
// output at input resolution.
template <typename S>
struct Parser {
  ParserSpec spec;
  ParamStore<S> params;

  Conv2dLayer<S> stem;
  std::vector<SeparableBlock<S>> down;
  SeparableBlock<S> mid;
  std::vector<SeparableBlock<S>> up;
  Conv2dLayer<S> head;

  Var<S> logits(const Var<S>& x) const {
    const auto& sh = x->value.shape();
    check(sh.size() == 4, "SHAPE_MISMATCH", "parser input must be 4D");
    int div = 1 << spec.depth;
    check(sh[2] % div == 0 && sh[3] % div == 0, "SHAPE_MISMATCH",
          "parser input dims must be divisible by " + std::to_string(div));
    Var<S> h = relu(stem(x));
    std::vector<Var<S>> skips;
    for (const auto& blk : down) {
      h = blk(h);
      skips.push_back(h);
      h = avg_pool2(h);
    }
    h = mid(h);
    for (size_t k = 0; k < up.size(); ++k) {
      h = upsample_nearest2(h);
      h = up[k](concat_channels(h, skips[skips.size() - 1 - k]));
    }
    return head(h);
  }

  Var<S> posteriors(const Var<S>& x) const { return channel_softmax(logits(x)); }
};

template <typename S>
Parser<S> build_parser(const ParserSpec& ps, int in_channels, uint64_t seed) {
  ps.validate();
  check(in_channels >= 1, "BAD_CONFIG", "parser input channels must be positive");
  Parser<S> p;
  p.spec = ps;
  Rng rng(mix_seed(seed, 0xa75ull));
  p.stem = Conv2dLayer<S>(p.params, "p.stem", in_channels, ps.base_channels, 3, 1, 1, rng);
  int ch = ps.base_channels;
  for (int k = 0; k < ps.depth; ++k) {
    p.down.push_back(SeparableBlock<S>(p.params, "p.down" + std::to_string(k), ch, ch * 2, rng));
    ch *= 2;
  }
  p.mid = SeparableBlock<S>(p.params, "p.mid", ch, ch, rng);
  for (int k = 0; k < ps.depth; ++k) {
    // input: upsampled ch + skip ch
    p.up.push_back(SeparableBlock<S>(p.params, "p.up" + std::to_string(k), ch * 2, ch / 2, rng));
    ch /= 2;
  }
  p.head = Conv2dLayer<S>(p.params, "p.head", ch, ps.n_classes, 1, 1, 0, rng);
  return p;
}

// ---------------------------------------------------------------------------
// tensor-level wrappers (inference convenience)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> attach_side(const Tensor<S>& image, const Tensor<S>& side) {
  if (side.empty()) return image;
  Var<S> cat = concat_channels(constant(image), constant(side));
  return cat->value;
}

template <typename S>
LatentCode encode_latent(const Generator<S>& g, const Tensor<S>& x4d) {
  static_assert(std::is_same_v<S, float>);
  LatentCode z;
  z.data = g.encode(constant(x4d))->value;
  return z;
}

template <typename S>
std::pair<ImageBatch, ImageBatch> decode_latent(const Generator<S>& g, const LatentCode& z,
                                                const std::vector<AttributeVector>& ys) {
  static_assert(std::is_same_v<S, float>);
  auto out = g.decode(constant(z.data), ys);
  ImageBatch img, side;
  img.data = out.image->value;
  if (out.side) side.data = out.side->value;
  return {img, side};
}

}  // namespace attrsyn
