// Checkpoint file: magic "ASRF0001", then records until EOF, each
//   u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | f64 payload[prod(dims)]
// all little-endian. Records are ParamStore blocks named "<store>/<block>".
#pragma once

#include "asrf/diffcore/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace asrf::diffcore {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'R', 'F', '0', '0', '0', '1'};

struct Record {
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

class CheckpointWriter {
 public:
  explicit CheckpointWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write checkpoint " + path);
    out_.write(kCheckpointMagic, 8);
  }

  void write(const std::string& name, const std::vector<std::uint64_t>& shape, const std::vector<double>& data) {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    require(n == data.size(), "checkpoint: record '" + name + "' size does not match its shape");
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    out_.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(d);
    out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

  template <class S>
  void write_store(const std::string& store_name, const ParamStore<S>& store) {
    for (const auto& b : store) {
      std::vector<std::uint64_t> shape(b.shape.begin(), b.shape.end());
      write(store_name + "/" + b.name, shape, std::vector<double>(b.value.begin(), b.value.end()));
    }
  }

 private:
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  std::string path_;
  std::ofstream out_;
};

inline std::map<std::string, Record> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ValidationError(path + ": not an ASRF0001 checkpoint");
  std::map<std::string, Record> records;
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return static_cast<bool>(in);
  };
  while (true) {
    std::uint32_t name_len = 0;
    if (!get(name_len)) break;
    if (name_len > 4096) throw ValidationError(path + ": corrupt record name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t ndim = 0;
    if (!in || !get(ndim) || ndim > 8) throw ValidationError(path + ": truncated record header");
    Record r;
    r.shape.resize(ndim);
    std::uint64_t n = 1;
    for (auto& d : r.shape) {
      if (!get(d)) throw ValidationError(path + ": truncated shape for " + name);
      n *= d;
    }
    if (n > (std::uint64_t{1} << 32)) throw ValidationError(path + ": implausible record size for " + name);
    r.data.resize(n);
    in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ValidationError(path + ": truncated payload for " + name);
    records.emplace(std::move(name), std::move(r));
  }
  return records;
}

/// Fills every block of `store` from records "<store_name>/<block>"; shapes must match.
template <class S>
void load_store(const std::map<std::string, Record>& records, const std::string& store_name, ParamStore<S>& store) {
  for (auto& b : store) {
    const std::string key = store_name + "/" + b.name;
    auto it = records.find(key);
    if (it == records.end()) throw ValidationError("checkpoint is missing '" + key + "'");
    const std::vector<std::uint64_t> want(b.shape.begin(), b.shape.end());
    if (it->second.shape != want) throw ValidationError("checkpoint shape mismatch for '" + key + "'");
    for (std::size_t k = 0; k < b.size(); ++k) b.value[k] = static_cast<S>(it->second.data[k]);
  }
}

}  // namespace asrf::diffcore
