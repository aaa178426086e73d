#include "attrsyn/config.hpp"

#include <fstream>
#include <sstream>

namespace attrsyn {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& csv, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, sep)) {
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    check(eq != std::string::npos, "BAD_CONFIG",
          "line " + std::to_string(lineno) + " is not key = value: " + t);
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    check(!key.empty(), "BAD_CONFIG", "empty key on line " + std::to_string(lineno));
    c[key] = val;
  }
  return c;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "IO_ERROR", "cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

bool config_has(const ConfigMap& c, const std::string& key) { return c.count(key) > 0; }

std::string config_str(const ConfigMap& c, const std::string& key,
                       const std::string& fallback) {
  auto it = c.find(key);
  return it == c.end() ? fallback : it->second;
}

int config_int(const ConfigMap& c, const std::string& key, int fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  try {
    size_t pos = 0;
    int v = std::stoi(it->second, &pos);
    check(pos == it->second.size(), "BAD_CONFIG", "");
    return v;
  } catch (...) {
    fail("BAD_CONFIG", "key " + key + " is not an integer: " + it->second);
  }
}

double config_double(const ConfigMap& c, const std::string& key, double fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    check(pos == it->second.size(), "BAD_CONFIG", "");
    return v;
  } catch (...) {
    fail("BAD_CONFIG", "key " + key + " is not a number: " + it->second);
  }
}

DomainSpec domain_from_config(const ConfigMap& c) {
  DomainSpec spec;
  check(config_has(c, "attributes"), "BAD_CONFIG", "missing key: attributes");
  spec.attribute_names = split_list(c.at("attributes"));
  spec.image_channels = config_int(c, "image_channels", 3);
  spec.side_channels = config_int(c, "side_channels", 0);
  if (config_has(c, "groups")) {
    for (const auto& g : split_list(c.at("groups"))) {
      std::vector<int> idx;
      for (const auto& name : split_list(g, '|')) idx.push_back(spec.index_of(name));
      spec.groups.push_back(std::move(idx));
    }
  }
  spec.validate();
  return spec;
}

std::string domain_to_config(const DomainSpec& spec) {
  std::ostringstream out;
  out << "attributes = ";
  for (size_t i = 0; i < spec.attribute_names.size(); ++i)
    out << (i ? ", " : "") << spec.attribute_names[i];
  out << "\n";
  if (!spec.groups.empty()) {
    out << "groups = ";
    for (size_t gi = 0; gi < spec.groups.size(); ++gi) {
      if (gi) out << ", ";
      for (size_t k = 0; k < spec.groups[gi].size(); ++k)
        out << (k ? "|" : "") << spec.attribute_names[spec.groups[gi][k]];
    }
    out << "\n";
  }
  out << "image_channels = " << spec.image_channels << "\n";
  out << "side_channels = " << spec.side_channels << "\n";
  return out.str();
}

}  // namespace attrsyn
