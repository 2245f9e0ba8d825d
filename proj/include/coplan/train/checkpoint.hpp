#pragma once

// Versioned binary checkpoints: config echo, named parameter tensors with
// shapes, Adam moments, RNG state, and a stage marker.  Payload is explicit
// little-endian float64, so round trips are bit-exact.

#include <cstring>
#include <fstream>
#include <sstream>

#include "coplan/nn.hpp"
#include "coplan/sim/io.hpp"

namespace coplan {

constexpr uint32_t kCheckpointMagic = 0x43504c4e;  // "CPLN"
constexpr uint32_t kCheckpointVersion = 1;

namespace detail_ckpt {

inline bool host_little_endian() {
  uint16_t x = 1;
  uint8_t b;
  std::memcpy(&b, &x, 1);
  return b == 1;
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (!host_little_endian()) {
    auto* p = reinterpret_cast<uint8_t*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint truncated");
  if (!host_little_endian()) {
    auto* p = reinterpret_cast<uint8_t*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  uint64_t n = read_pod<uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("checkpoint truncated");
  return s;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) write_pod<int64_t>(os, d);
  for (double x : t.v) write_pod<double>(os, x);
}

inline Tensor read_tensor(std::istream& is) {
  uint32_t rank = read_pod<uint32_t>(is);
  Shape s(rank);
  for (uint32_t i = 0; i < rank; ++i)
    s[i] = static_cast<int>(read_pod<int64_t>(is));
  Tensor t(s);
  for (double& x : t.v) x = read_pod<double>(is);
  return t;
}

}  // namespace detail_ckpt

struct CheckpointMeta {
  std::string config_json;  // echo of the run configuration
  int stage = 0;
  std::string rng_state;    // serialized mt19937_64 stream state
};

inline void save_checkpoint(const ParamStore& store, const CheckpointMeta& meta,
                            const std::string& path) {
  using namespace detail_ckpt;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  write_pod<uint32_t>(os, kCheckpointMagic);
  write_pod<uint32_t>(os, kCheckpointVersion);
  write_string(os, meta.config_json);
  write_pod<int32_t>(os, meta.stage);
  write_string(os, meta.rng_state);
  write_pod<uint64_t>(os, store.all().size());
  for (const auto& [name, p] : store.all()) {
    write_string(os, name);
    write_tensor(os, p.var.val());
    write_tensor(os, p.adam_m);
    write_tensor(os, p.adam_v);
    write_pod<int64_t>(os, p.step_count);
  }
  if (!os) throw DataError("write failure on checkpoint: " + path);
}

// Loads into an existing store: parameters must already be registered with
// matching shapes (the model constructor defines the architecture).
inline CheckpointMeta load_checkpoint(ParamStore& store, const std::string& path) {
  using namespace detail_ckpt;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read checkpoint: " + path);
  if (read_pod<uint32_t>(is) != kCheckpointMagic)
    throw DataError("not a checkpoint file: " + path);
  uint32_t ver = read_pod<uint32_t>(is);
  if (ver != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(ver) + " unsupported");
  CheckpointMeta meta;
  meta.config_json = read_string(is);
  meta.stage = static_cast<int>(read_pod<int32_t>(is));
  meta.rng_state = read_string(is);
  uint64_t count = read_pod<uint64_t>(is);
  if (count != store.all().size())
    throw DataError("checkpoint has " + std::to_string(count) +
                    " parameters, model expects " +
                    std::to_string(store.all().size()));
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    if (!store.contains(name))
      throw DataError("checkpoint parameter '" + name + "' unknown to model");
    Param& p = store.at(name);
    Tensor val = read_tensor(is);
    if (val.shape != p.var.shape())
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      shape_str(val.shape) + ", model expects " +
                      shape_str(p.var.shape()));
    p.var.node()->val = std::move(val);
    p.adam_m = read_tensor(is);
    p.adam_v = read_tensor(is);
    p.step_count = read_pod<int64_t>(is);
  }
  return meta;
}

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream ss(s);
  ss >> rng;
  if (ss.fail()) throw DataError("bad RNG state in checkpoint");
  return rng;
}

}  // namespace coplan
