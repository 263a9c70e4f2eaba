// Binary/file IO: little-endian primitives, the versioned checkpoint
// container, PPM image output and content hashing. x86-64 is little-endian;
// raw writes below rely on that (checked at startup by tests).
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "aif/core/nn.hpp"
#include "aif/core/rng.hpp"
#include "aif/core/tensor.hpp"

namespace aif {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <class T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  AIF_CHECK(is.good(), "unexpected end of file");
}
template <class T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}
inline std::string read_str(std::istream& is) {
  const auto n = read_pod<uint32_t>(is);
  std::string s(n, '\0');
  if (n) read_bytes(is, s.data(), n);
  return s;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  AIF_CHECK(f.good(), "cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto n = static_cast<size_t>(f.tellg());
  f.seekg(0);
  std::vector<unsigned char> buf(n);
  if (n) read_bytes(f, buf.data(), n);
  return buf;
}

inline uint64_t hash_file(const std::string& path) {
  const auto b = read_file_bytes(path);
  return fnv1a64(b.data(), b.size());
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- checkpoint container -------------------------------------------------
// Layout (all integers little-endian):
//   magic "AIFCKPT1", u32 version, u64 seed, u64 step,
//   config echo string, u32 n_params,
//   per param: name string, u32 ndim, i32 dims..., f32 data...

constexpr char kCkptMagic[8] = {'A', 'I', 'F', 'C', 'K', 'P', 'T', '1'};

struct CheckpointMeta {
  uint64_t seed = 0;
  uint64_t step = 0;
  std::string config_echo;
};

inline void save_checkpoint(const std::string& path, const ParamSet<float>& ps, const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  AIF_CHECK(f.good(), "cannot write " + path);
  write_bytes(f, kCkptMagic, 8);
  write_pod<uint32_t>(f, 1);
  write_pod<uint64_t>(f, meta.seed);
  write_pod<uint64_t>(f, meta.step);
  write_str(f, meta.config_echo);
  write_pod<uint32_t>(f, static_cast<uint32_t>(ps.entries.size()));
  for (const auto& e : ps.entries) {
    write_str(f, e.name);
    write_pod<uint32_t>(f, static_cast<uint32_t>(e.value.shape.size()));
    for (int d : e.value.shape) write_pod<int32_t>(f, d);
    write_bytes(f, e.value.ptr(), sizeof(float) * static_cast<size_t>(e.value.size()));
  }
  AIF_CHECK(f.good(), "write failed for " + path);
}

// Loads into an already-built ParamSet; names and shapes must match exactly.
inline CheckpointMeta load_checkpoint(const std::string& path, ParamSet<float>& ps) {
  std::ifstream f(path, std::ios::binary);
  AIF_CHECK(f.good(), "cannot open checkpoint " + path);
  char magic[8];
  read_bytes(f, magic, 8);
  AIF_CHECK(std::equal(magic, magic + 8, kCkptMagic), "bad checkpoint magic in " + path);
  const auto version = read_pod<uint32_t>(f);
  AIF_CHECK(version == 1, "unsupported checkpoint version");
  CheckpointMeta meta;
  meta.seed = read_pod<uint64_t>(f);
  meta.step = read_pod<uint64_t>(f);
  meta.config_echo = read_str(f);
  const auto n = read_pod<uint32_t>(f);
  AIF_CHECK(n == ps.entries.size(), "checkpoint parameter count mismatch in " + path);
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = read_str(f);
    AIF_CHECK(name == ps.entries[i].name,
              "checkpoint parameter order mismatch: " + name + " vs " + ps.entries[i].name);
    const auto ndim = read_pod<uint32_t>(f);
    Shape s(ndim);
    for (auto& d : s) d = read_pod<int32_t>(f);
    AIF_CHECK(s == ps.entries[i].value.shape, "checkpoint shape mismatch for " + name);
    read_bytes(f, ps.entries[i].value.ptr(), sizeof(float) * static_cast<size_t>(ps.entries[i].value.size()));
  }
  return meta;
}

// ---- images ---------------------------------------------------------------

// u8 RGB rows, H*W*3 bytes, written as binary PPM.
inline void write_ppm(const std::string& path, const unsigned char* rgb, int H, int W) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  AIF_CHECK(f.good(), "cannot write " + path);
  f << "P6\n" << W << " " << H << "\n255\n";
  write_bytes(f, rgb, static_cast<size_t>(H) * W * 3);
}

inline void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

}  // namespace aif
