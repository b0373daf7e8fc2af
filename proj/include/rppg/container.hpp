#pragma once

// Little-endian binary container of named tensors plus scalar metadata.
// Layout (all integers little-endian):
//   char[4]  magic "RTNS"
//   u32      version (1)
//   u32      meta count,   then per entry: u32 key length, key bytes, f64 value
//   u32      tensor count, then per entry: u32 name length, name bytes,
//            u8 dtype (0 = f64, 1 = f32), u32 ndim, u64 dims..., raw values
// Model checkpoints, video cubes and binary waveforms all use this format.

#include "rppg/core.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace rppg {

enum class DType : std::uint8_t { F64 = 0, F32 = 1 };

template <class S>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<S, double>)
    return DType::F64;
  else
    return DType::F32;
}

inline std::size_t dtype_size(DType d) { return d == DType::F64 ? 8 : 4; }

struct ContainerEntry {
  std::string name;
  DType dtype = DType::F64;
  Shape shape;
  std::vector<unsigned char> raw;

  Index count() const { return numel(shape); }

  template <class S>
  static ContainerEntry make(std::string name, Shape shape, const ArrayX<S>& values) {
    if (numel(shape) != values.size())
      throw ShapeError("container: shape " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    ContainerEntry e;
    e.name = std::move(name);
    e.dtype = dtype_of<S>();
    e.shape = std::move(shape);
    e.raw.resize(static_cast<std::size_t>(values.size()) * sizeof(S));
    std::memcpy(e.raw.data(), values.data(), e.raw.size());
    return e;
  }

  template <class S>
  ArrayX<S> values() const {
    const Index n = count();
    ArrayX<S> out(n);
    if (dtype == dtype_of<S>()) {
      std::memcpy(out.data(), raw.data(), raw.size());
    } else if (dtype == DType::F64) {
      const double* p = reinterpret_cast<const double*>(raw.data());
      for (Index i = 0; i < n; ++i) out[i] = static_cast<S>(p[i]);
    } else {
      const float* p = reinterpret_cast<const float*>(raw.data());
      for (Index i = 0; i < n; ++i) out[i] = static_cast<S>(p[i]);
    }
    return out;
  }
};

class Container {
 public:
  static constexpr char kMagic[4] = {'R', 'T', 'N', 'S'};
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, double> meta;
  std::vector<ContainerEntry> tensors;

  bool has(const std::string& name) const {
    for (const ContainerEntry& t : tensors)
      if (t.name == name) return true;
    return false;
  }

  const ContainerEntry& at(const std::string& name) const {
    for (const ContainerEntry& t : tensors)
      if (t.name == name) return t;
    throw IoError("container: no tensor named '" + name + "'");
  }

  double meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("container: no metadata key '" + key + "'");
    return it->second;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("container: cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
      write_str(os, k);
      os.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const ContainerEntry& t : tensors) {
      write_str(os, t.name);
      const std::uint8_t d = static_cast<std::uint8_t>(t.dtype);
      os.write(reinterpret_cast<const char*>(&d), 1);
      write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
      for (Index dim : t.shape) {
        const std::uint64_t u = static_cast<std::uint64_t>(dim);
        os.write(reinterpret_cast<const char*>(&u), sizeof(u));
      }
      os.write(reinterpret_cast<const char*>(t.raw.data()), static_cast<std::streamsize>(t.raw.size()));
    }
    if (!os) throw IoError("container: write failed: " + path.string());
  }

  static Container load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("container: cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
      throw IoError("container: bad magic in " + path.string());
    if (read_u32(is) != kVersion) throw IoError("container: unsupported version in " + path.string());

    Container c;
    const std::uint32_t n_meta = read_u32(is);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      const std::string key = read_str(is);
      double v = 0;
      is.read(reinterpret_cast<char*>(&v), sizeof(double));
      c.meta[key] = v;
    }
    const std::uint32_t n_tensors = read_u32(is);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      ContainerEntry t;
      t.name = read_str(is);
      std::uint8_t d = 0;
      is.read(reinterpret_cast<char*>(&d), 1);
      if (d > 1) throw IoError("container: unknown dtype in " + path.string());
      t.dtype = static_cast<DType>(d);
      const std::uint32_t ndim = read_u32(is);
      t.shape.resize(ndim);
      for (std::uint32_t j = 0; j < ndim; ++j) {
        std::uint64_t u = 0;
        is.read(reinterpret_cast<char*>(&u), sizeof(u));
        t.shape[j] = static_cast<Index>(u);
      }
      t.raw.resize(static_cast<std::size_t>(t.count()) * dtype_size(t.dtype));
      is.read(reinterpret_cast<char*>(t.raw.data()), static_cast<std::streamsize>(t.raw.size()));
      c.tensors.push_back(std::move(t));
    }
    if (!is) throw IoError("container: truncated file: " + path.string());
    return c;
  }

 private:
  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::string read_str(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    if (n > (1u << 20)) throw IoError("container: implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
  }
};

}  // namespace rppg
