#pragma once

#include <fstream>
#include <string>

#include "resample/adam.hpp"
#include "resample/errors.hpp"
#include "resample/mlp.hpp"
#include "resample/rng.hpp"
#include "resample/serial.hpp"

namespace resample {

// Versioned binary container shared by all checkpoints. Doubles go through
// raw bit copies, so a save/load cycle is bit-exact.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_mlp(BinWriter& w, const Mlp& net) {
  w.i32_array(net.layer_sizes());
  w.f64_array(net.params());
}

inline Mlp read_mlp(BinReader& r) {
  std::vector<int> sizes = r.i32_array();
  Mlp net(sizes);
  std::vector<double> params = r.f64_array();
  if (params.size() != net.param_count())
    throw FormatError("parameter count does not match layer sizes", r.offset());
  net.params() = std::move(params);
  return net;
}

inline void write_adam(BinWriter& w, const AdamState& st) {
  const AdamConfig& c = st.config();
  w.f64(c.lr);
  w.f64(c.beta1);
  w.f64(c.beta2);
  w.f64(c.eps);
  w.f64(c.weight_decay);
  w.u64(st.step_count());
  w.f64_array(st.m());
  w.f64_array(st.v());
}

inline AdamState read_adam(BinReader& r) {
  AdamConfig c;
  c.lr = r.f64();
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.eps = r.f64();
  c.weight_decay = r.f64();
  const std::uint64_t step = r.u64();
  std::vector<double> m = r.f64_array();
  std::vector<double> v = r.f64_array();
  if (m.size() != v.size()) throw FormatError("adam moment size mismatch", r.offset());
  AdamState st(m.size(), c);
  st.restore(std::move(m), std::move(v), step);
  return st;
}

inline void write_rng(BinWriter& w, const Rng& rng) { w.str(rng.serialize()); }
inline Rng read_rng(BinReader& r) { return Rng::deserialize(r.str()); }

inline void write_magic(BinWriter& w, const char (&magic)[5]) {
  for (int i = 0; i < 4; ++i) w.u8(static_cast<std::uint8_t>(magic[i]));
  w.u32(kCheckpointVersion);
}

inline void expect_magic(BinReader& r, const char (&magic)[5], const std::string& kind) {
  char got[4];
  for (auto& c : got) c = static_cast<char>(r.u8());
  if (!std::equal(got, got + 4, magic))
    throw FormatError("not a " + kind + " file (bad magic)", r.offset());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(kind + " version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")",
                      r.offset());
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_for_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for reading: " + path);
  return f;
}

}  // namespace resample
