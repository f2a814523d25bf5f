#include "ehd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ehd {

namespace {

constexpr char kMagic[8] = {'E', 'H', 'D', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
  std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  write_u64(os, v);
}

double read_f64(std::istream& is) {
  std::uint64_t v = read_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os.write(kMagic, 8);
  write_u64(os, ckpt.config.size());
  for (const auto& [k, v] : ckpt.config) {
    write_str(os, k);
    write_str(os, v);
  }
  write_u64(os, ckpt.params.size());
  for (const auto& [name, m] : ckpt.params) {
    write_str(os, name);
    write_u64(os, static_cast<std::uint64_t>(m.rows()));
    write_u64(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  Checkpoint ckpt;
  std::uint64_t nc = read_u64(is);
  for (std::uint64_t i = 0; i < nc; ++i) {
    std::string k = read_str(is);
    ckpt.config[k] = read_str(is);
  }
  std::uint64_t np = read_u64(is);
  for (std::uint64_t i = 0; i < np; ++i) {
    std::string name = read_str(is);
    auto rows = static_cast<Eigen::Index>(read_u64(is));
    auto cols = static_cast<Eigen::Index>(read_u64(is));
    ad::Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_f64(is);
    ckpt.params[name] = std::move(m);
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

void load_into_store(const Checkpoint& ckpt, ParamStore& store) {
  for (const auto& [name, leaf] : store.all()) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end())
      throw std::runtime_error("checkpoint missing parameter: " + name);
    if (it->second.rows() != leaf->rows() || it->second.cols() != leaf->cols()) {
      std::ostringstream os;
      os << "checkpoint shape mismatch for " << name << ": expected "
         << leaf->rows() << "x" << leaf->cols() << ", got "
         << it->second.rows() << "x" << it->second.cols();
      throw std::runtime_error(os.str());
    }
    leaf->val = it->second;
  }
}

Checkpoint snapshot_store(const ParamStore& store,
                          std::map<std::string, std::string> config) {
  Checkpoint ckpt;
  ckpt.config = std::move(config);
  for (const auto& [name, leaf] : store.all()) ckpt.params[name] = leaf->val;
  return ckpt;
}

}  // namespace ehd
