#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "attrsyn/checkpoint.hpp"
#include "attrsyn/networks.hpp"

using namespace attrsyn;
namespace fs = std::filesystem;

namespace {

DomainSpec toy_domain() {
  DomainSpec d;
  d.attribute_names = {"cat0", "cat1"};
  d.groups = {{0, 1}};
  d.image_channels = 3;
  d.side_channels = 1;
  d.validate();
  return d;
}

GeneratorSpec small_gen() {
  GeneratorSpec g;
  g.base_channels = 8;
  g.n_residual = 1;
  g.latent_channels = 16;
  return g;
}

Tensor<float> unit_noise(std::vector<int> shape, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform(-0.9, 0.9));
  return t;
}

}  // namespace

TEST_CASE("generator build is seed-deterministic") {
  auto g1 = build_generator<float>(small_gen(), toy_domain(), 1);
  auto g2 = build_generator<float>(small_gen(), toy_domain(), 1);
  auto g3 = build_generator<float>(small_gen(), toy_domain(), 2);
  REQUIRE(g1.params.entries().size() == g2.params.entries().size());
  bool any_diff = false;
  for (size_t i = 0; i < g1.params.entries().size(); ++i) {
    const auto& a = g1.params.entries()[i].var->value;
    const auto& b = g2.params.entries()[i].var->value;
    const auto& c = g3.params.entries()[i].var->value;
    REQUIRE(a.numel() == b.numel());
    for (int64_t k = 0; k < a.numel(); ++k) CHECK(a[k] == b[k]);
    for (int64_t k = 0; k < a.numel(); ++k)
      if (a[k] != c[k]) any_diff = true;
  }
  CHECK(any_diff);  // a different seed actually changes something
}

TEST_CASE("encoder contracts by 16 and decoder expands by 16") {
  DomainSpec d = toy_domain();
  auto g = build_generator<float>(small_gen(), d, 3);
  for (int size : {64, 128}) {
    auto x = constant(unit_noise({1, 4, size, size}, 7));
    auto z = g.encode(x);
    CHECK(z->value.shape() == std::vector<int>{1, 16, size / 16, size / 16});
    auto out = g.decode(z, {encode_attributes({"cat1"}, d)});
    CHECK(out.image->value.shape() == std::vector<int>{1, 3, size, size});
    REQUIRE(out.side);
    CHECK(out.side->value.shape() == std::vector<int>{1, 1, size, size});
    for (int64_t i = 0; i < out.image->value.numel(); ++i) {
      CHECK(out.image->value[i] >= -1.0f);
      CHECK(out.image->value[i] <= 1.0f);
    }
  }
}

TEST_CASE("encoder rejects bad inputs by name") {
  auto g = build_generator<float>(small_gen(), toy_domain(), 3);
  try {
    g.encode(constant(unit_noise({1, 4, 112, 127}, 1)));
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == "SHAPE_MISMATCH");
    CHECK(std::string(e.what()).find("divisible by 16") != std::string::npos);
  }
  CHECK_THROWS_AS(g.encode(constant(unit_noise({1, 3, 64, 64}, 1))), Error);
}

TEST_CASE("no-side domain omits the side output") {
  DomainSpec d;
  d.attribute_names = {"a", "b"};
  d.side_channels = 0;
  d.validate();
  auto g = build_generator<float>(small_gen(), d, 5);
  auto z = g.encode(constant(unit_noise({2, 3, 64, 64}, 9)));
  auto out = g.decode(z, {encode_attributes({"a"}, d), encode_attributes({"b"}, d)});
  CHECK(out.image->value.dim(0) == 2);
  CHECK(!out.side);
}

TEST_CASE("decode validates latent channels and attribute lengths") {
  DomainSpec d = toy_domain();
  auto g = build_generator<float>(small_gen(), d, 3);
  CHECK_THROWS_AS(g.decode(constant(unit_noise({1, 7, 4, 4}, 1)), {encode_attributes({}, d)}),
                  Error);
  AttributeVector tooshort{{1}};
  CHECK_THROWS_AS(g.decode(constant(unit_noise({1, 16, 4, 4}, 1)), {tooshort}), Error);
}

TEST_CASE("forward passes are deterministic") {
  auto g = build_generator<float>(small_gen(), toy_domain(), 11);
  auto x = constant(unit_noise({1, 4, 64, 64}, 13));
  auto z1 = g.encode(x);
  auto z2 = g.encode(x);
  for (int64_t i = 0; i < z1->value.numel(); ++i) CHECK(z1->value[i] == z2->value[i]);
}

TEST_CASE("critic yields a patch map and attribute logits") {
  DiscriminatorSpec ds;
  ds.base_channels = 8;
  ds.n_layers = 3;
  ds.input_channels = 4;
  ds.input_size = 64;
  auto d = build_discriminator<float>(ds, 2, 21);
  auto s1 = d.forward(constant(unit_noise({1, 4, 64, 64}, 3)));
  CHECK(s1.src->value.shape() == std::vector<int>{1, 1, 8, 8});
  CHECK(s1.cls->value.shape() == std::vector<int>{1, 2});
  auto s2 = d.forward(constant(unit_noise({2, 4, 64, 64}, 3)));
  CHECK(s2.src->value.dim(0) == 2);
  CHECK(s2.cls->value.dim(0) == 2);
  CHECK_THROWS_AS(d.forward(constant(unit_noise({1, 4, 32, 32}, 3))), Error);
  CHECK_THROWS_AS(d.forward(constant(unit_noise({1, 3, 64, 64}, 3))), Error);
}

TEST_CASE("critic patches depend only on local input") {
  DiscriminatorSpec ds;
  ds.base_channels = 8;
  ds.n_layers = 3;
  ds.input_channels = 3;
  ds.input_size = 64;
  auto d = build_discriminator<float>(ds, 2, 23);
  Tensor<float> x = unit_noise({1, 3, 64, 64}, 31);
  Tensor<float> x2 = x.clone();
  x2.at4(0, 0, 63, 63) += 0.5f;  // far corner
  auto a = d.forward(constant(x));
  auto b = d.forward(constant(x2));
  // receptive field of the (0,0) patch never reaches the opposite corner
  CHECK(a.src->value.at4(0, 0, 0, 0) == b.src->value.at4(0, 0, 0, 0));
  // but the perturbation is visible somewhere
  bool diff = false;
  for (int64_t i = 0; i < a.src->value.numel(); ++i)
    if (a.src->value[i] != b.src->value[i]) diff = true;
  CHECK(diff);
}

TEST_CASE("parser posteriors are simplex-valued at input resolution") {
  ParserSpec ps;
  ps.base_channels = 8;
  ps.depth = 2;
  auto p = build_parser<float>(ps, 3, 5);
  auto post = p.posteriors(constant(unit_noise({2, 3, 32, 32}, 17)));
  CHECK(post->value.shape() == std::vector<int>{2, 4, 32, 32});
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        float s = 0;
        for (int c = 0; c < 4; ++c) s += post->value.at4(b, c, i, j);
        CHECK(std::abs(s - 1.0f) < 1e-6f);
      }
}

TEST_CASE("zeroed parser head gives uniform posteriors") {
  ParserSpec ps;
  ps.base_channels = 8;
  ps.depth = 2;
  auto p = build_parser<float>(ps, 3, 5);
  for (auto t : {p.head.w, p.head.b})
    for (int64_t i = 0; i < t->value.numel(); ++i) t->value[i] = 0.0f;
  auto post = p.posteriors(constant(unit_noise({1, 3, 16, 16}, 3)));
  for (int64_t i = 0; i < post->value.numel(); ++i)
    CHECK(post->value[i] == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("checkpoint round trip restores forwards bitwise") {
  std::string dir = (fs::temp_directory_path() / "attrsyn_ckpt_rt").string();
  fs::remove_all(dir);
  DomainSpec d = toy_domain();
  auto g = build_generator<float>(small_gen(), d, 41);
  Json meta;
  meta["seed"] = 41;
  save_checkpoint(dir, snapshot_params(g.params, "gen/"), meta);

  auto g2 = build_generator<float>(small_gen(), d, 999);  // different init
  Json meta_in;
  auto arrays = load_checkpoint(dir, &meta_in);
  CHECK(meta_in["seed"] == 41);
  restore_params(g2.params, arrays, "gen/");

  auto x = constant(unit_noise({1, 4, 64, 64}, 8));
  auto z1 = g.encode(x)->value;
  auto z2 = g2.encode(x)->value;
  for (int64_t i = 0; i < z1.numel(); ++i) CHECK(z1[i] == z2[i]);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint errors are specific") {
  try {
    load_checkpoint("/nonexistent/ckpt");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == "CKPT_NOT_FOUND");
  }

  std::string dir = (fs::temp_directory_path() / "attrsyn_ckpt_err").string();
  fs::remove_all(dir);
  DomainSpec d = toy_domain();
  auto g = build_generator<float>(small_gen(), d, 1);
  save_checkpoint(dir, snapshot_params(g.params, "gen/"), Json::object());
  auto arrays = load_checkpoint(dir);

  GeneratorSpec other = small_gen();
  other.latent_channels = 32;
  auto gbad = build_generator<float>(other, d, 1);
  try {
    restore_params(gbad.params, arrays, "gen/");
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == "SHAPE_MISMATCH");
  }
  try {
    restore_params(gbad.params, arrays, "wrong/");
    FAIL("expected missing array");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("wrong/") != std::string::npos);
  }
  fs::remove_all(dir);
}
