#include "attrsyn/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace attrsyn {

namespace {

std::string array_file_name(const std::string& name) {
  std::string f;
  for (char c : name) f += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return f + ".f32";
}

}  // namespace

void save_checkpoint(const std::string& dir, const NamedArrays& arrays, const Json& meta) {
  fs::create_directories(dir);
  Json manifest;
  manifest["format"] = 1;
  manifest["meta"] = meta;
  manifest["arrays"] = Json::array();
  for (const auto& [name, t] : arrays) {
    std::string file = array_file_name(name);
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    check(out.good(), "IO_ERROR", "cannot write " + file + " in " + dir);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    check(out.good(), "IO_ERROR", "short write of " + file);
    Json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["file"] = file;
    entry["offset"] = 0;
    manifest["arrays"].push_back(entry);
  }
  std::ofstream mout(fs::path(dir) / "manifest.json");
  check(mout.good(), "IO_ERROR", "cannot write manifest.json in " + dir);
  mout << manifest.dump(2) << "\n";
}

static Json read_manifest(const std::string& dir) {
  fs::path mp = fs::path(dir) / "manifest.json";
  std::ifstream in(mp);
  check(in.good(), "CKPT_NOT_FOUND", "no checkpoint manifest at " + mp.string());
  Json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    fail("IO_ERROR", "corrupt manifest in " + dir + ": " + e.what());
  }
  check(manifest.contains("arrays") && manifest["arrays"].is_array(), "IO_ERROR",
        "manifest in " + dir + " has no array table");
  return manifest;
}

Json load_checkpoint_meta(const std::string& dir) {
  Json manifest = read_manifest(dir);
  return manifest.value("meta", Json::object());
}

NamedArrays load_checkpoint(const std::string& dir, Json* meta_out) {
  Json manifest = read_manifest(dir);
  if (meta_out) *meta_out = manifest.value("meta", Json::object());
  NamedArrays arrays;
  for (const auto& entry : manifest["arrays"]) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    std::string file = entry.at("file").get<std::string>();
    int64_t offset = entry.value("offset", 0);
    Tensor<float> t = Tensor<float>::zeros(shape);
    std::ifstream in(fs::path(dir) / file, std::ios::binary);
    check(in.good(), "IO_ERROR", "checkpoint array file missing: " + file);
    in.seekg(offset);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    check(in.gcount() == static_cast<std::streamsize>(t.numel() * sizeof(float)), "IO_ERROR",
          "array " + name + " shorter than manifest shape " + t.shape_str());
    arrays.emplace_back(name, std::move(t));
  }
  return arrays;
}

const Tensor<float>& find_array(const NamedArrays& arrays, const std::string& name) {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  fail("IO_ERROR", "checkpoint is missing array " + name);
}

NamedArrays snapshot_params(const ParamStore<float>& ps, const std::string& prefix) {
  NamedArrays out;
  for (const auto& e : ps.entries()) out.emplace_back(prefix + e.name, e.var->value.clone());
  return out;
}

void restore_params(ParamStore<float>& ps, const NamedArrays& arrays,
                    const std::string& prefix) {
  for (const auto& e : ps.entries()) {
    const Tensor<float>& src = find_array(arrays, prefix + e.name);
    check(src.shape() == e.var->value.shape(), "SHAPE_MISMATCH",
          "checkpoint array " + prefix + e.name + " has shape " + src.shape_str() +
              ", expected " + e.var->value.shape_str());
    std::memcpy(e.var->value.data(), src.data(), sizeof(float) * src.numel());
  }
}

}  // namespace attrsyn
