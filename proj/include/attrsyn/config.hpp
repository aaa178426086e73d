#pragma once

#include <map>
#include <string>
#include <vector>

#include "attrsyn/domain.hpp"

namespace attrsyn {

// key = value lines, '#' comments, lists comma-separated, groups as
// name|name pipes inside a list entry.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::string& path);

std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& csv, char sep = ',');

bool config_has(const ConfigMap& c, const std::string& key);
std::string config_str(const ConfigMap& c, const std::string& key, const std::string& fallback);
int config_int(const ConfigMap& c, const std::string& key, int fallback);
double config_double(const ConfigMap& c, const std::string& key, double fallback);

DomainSpec domain_from_config(const ConfigMap& c);
std::string domain_to_config(const DomainSpec& spec);

}  // namespace attrsyn
