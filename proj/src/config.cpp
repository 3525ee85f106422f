#include "psfr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace psfr {

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

IniDocument IniDocument::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  IniDocument doc;
  for (const auto& [name, node] : tree) {
    if (node.empty() && !node.data().empty()) throw ConfigError("config key '" + name + "' must be inside a [section]");
    auto& sec = doc.sections[name];
    for (const auto& [key, value] : node) sec[key] = value.get_value<std::string>();
  }
  return doc;
}

IniDocument IniDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string IniDocument::to_string() const {
  std::ostringstream out;
  for (const auto& [name, kv] : sections) {
    out << '[' << name << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  }
  return out.str();
}

const KeyValues& IniDocument::section(const std::string& name) const {
  static const KeyValues kEmpty;
  auto it = sections.find(name);
  return it == sections.end() ? kEmpty : it->second;
}

void IniDocument::require_sections(const std::set<std::string>& allowed) const {
  for (const auto& [name, kv] : sections) {
    if (!allowed.contains(name)) throw ConfigError("unknown config section [" + name + "]");
  }
}

KeyReader::KeyReader(const KeyValues& kv, std::string section) : kv_(kv), section_(std::move(section)) {}

const std::string* KeyReader::find(const std::string& key) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyReader::fail(const std::string& key, const std::string& why) const {
  throw ConfigError("[" + section_ + "] " + key + ": " + why);
}

namespace {

template <class T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

void KeyReader::get(const std::string& key, int64_t& out) {
  if (const auto* v = find(key); v && !parse_number(*v, out)) fail(key, "expected an integer, got '" + *v + "'");
}

void KeyReader::get(const std::string& key, int& out) {
  if (const auto* v = find(key); v && !parse_number(*v, out)) fail(key, "expected an integer, got '" + *v + "'");
}

void KeyReader::get(const std::string& key, uint64_t& out) {
  if (const auto* v = find(key); v && !parse_number(*v, out)) fail(key, "expected a non-negative integer, got '" + *v + "'");
}

void KeyReader::get(const std::string& key, double& out) {
  if (const auto* v = find(key); v && !parse_number(*v, out)) fail(key, "expected a number, got '" + *v + "'");
}

void KeyReader::get(const std::string& key, bool& out) {
  const auto* v = find(key);
  if (!v) return;
  if (*v == "true" || *v == "1") {
    out = true;
  } else if (*v == "false" || *v == "0") {
    out = false;
  } else {
    fail(key, "expected true/false, got '" + *v + "'");
  }
}

void KeyReader::get(const std::string& key, std::string& out) {
  if (const auto* v = find(key)) out = *v;
}

void KeyReader::get(const std::string& key, std::vector<int64_t>& out) {
  const auto* v = find(key);
  if (!v) return;
  std::vector<int64_t> values;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    int64_t x = 0;
    if (b == std::string::npos || !parse_number(item.substr(b, e - b + 1), x)) {
      fail(key, "expected a comma-separated integer list, got '" + *v + "'");
    }
    values.push_back(x);
  }
  out = std::move(values);
}

void KeyReader::finish() const {
  for (const auto& [key, value] : kv_) {
    if (!used_.contains(key)) fail(key, "unknown key");
  }
}

std::string join_ints(const std::vector<int64_t>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace psfr
