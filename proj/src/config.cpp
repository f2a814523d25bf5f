#include "ehd/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace ehd {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string env_to_key(const std::string& name) {
  // EHD_MTPP_INTERVAL_SCALE -> mtpp.interval_scale
  std::string rest = name.substr(4);
  std::string key;
  size_t us = rest.find('_');
  for (size_t i = 0; i < rest.size(); ++i) {
    char c = rest[i];
    key += i == us ? '.' : static_cast<char>(std::tolower(c));
  }
  return key;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key");
    cfg.kv_[key] = val;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  Config cfg = parse(buf.str());
  cfg.apply_env_overrides();
  return cfg;
}

void Config::apply_env_overrides() {
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    if (entry.rfind("EHD_", 0) != 0) continue;
    size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = env_to_key(entry.substr(0, eq));
    if (key.empty() || key.front() == '.' || key.back() == '.') continue;
    kv_[key] = entry.substr(eq + 1);
  }
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::string Config::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end())
    throw std::runtime_error("missing config key: " + key);
  return it->second;
}

std::string Config::get_str(const std::string& key,
                            const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    size_t pos = 0;
    std::int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not an integer (" +
                             it->second + ")");
  }
}

double Config::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not a number (" +
                             it->second + ")");
  }
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    size_t pos = 0;
    std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key +
                             ": not an unsigned integer (" + it->second + ")");
  }
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config key " + key + ": not a boolean (" +
                           it->second + ")");
}

std::string Config::resolved_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

std::string Config::digest() const {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : resolved_text()) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void Config::write_resolved(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write resolved config: " + path);
  os << "# resolved config, digest " << digest() << "\n" << resolved_text();
}

}  // namespace ehd
