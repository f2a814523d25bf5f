#pragma once

// Flat key=value run configuration with dotted namespaces (mtpp.layers,
// distiller.alpha). Values are strings until queried. Environment variables
// override file values: EHD_MTPP_LAYERS maps to mtpp.layers (the first
// underscore separates the namespace, the rest stay underscores).

#include <cstdint>
#include <map>
#include <string>

namespace ehd {

class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);  // file + env overrides
  void apply_env_overrides();

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_str(const std::string& key) const;  // throws if missing
  std::string get_str(const std::string& key, const std::string& dflt) const;
  std::int64_t get_int(const std::string& key, std::int64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

  // canonical sorted key=value rendering of the fully-resolved config
  std::string resolved_text() const;
  std::string digest() const;  // FNV-1a 64 over resolved_text, hex
  void write_resolved(const std::string& path) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace ehd
