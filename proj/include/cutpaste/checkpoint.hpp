#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cutpaste/optim.hpp"
#include "cutpaste/tensor.hpp"

namespace cutpaste {
namespace ckpt {

// Little-endian binary primitives (x86 layout written as-is).

inline void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_i64(std::ostream& os, int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_floats(std::ostream& os, const std::vector<float>& v) {
  put_u32(os, static_cast<uint32_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline uint32_t get_u32(std::istream& is) {
  uint32_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file (u32)");
  return v;
}
inline uint64_t get_u64(std::istream& is) {
  uint64_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file (u64)");
  return v;
}
inline int64_t get_i64(std::istream& is) {
  int64_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file (i64)");
  return v;
}
inline std::string get_string(std::istream& is) {
  const uint32_t n = get_u32(is);
  if (n > (1u << 26)) throw std::runtime_error("checkpoint: implausible string size");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated file (string)");
  return s;
}
inline std::vector<float> get_floats(std::istream& is) {
  const uint32_t n = get_u32(is);
  if (n > (1u << 28)) throw std::runtime_error("checkpoint: implausible array size");
  std::vector<float> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw std::runtime_error("checkpoint: truncated file (floats)");
  return v;
}

// Parameters stream in lexicographic identifier order (the map order).
inline void put_params(std::ostream& os, const ParamSet& params) {
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put_string(os, name);
    put_u32(os, static_cast<uint32_t>(p.shape().size()));
    for (int d : p.shape()) put_u32(os, static_cast<uint32_t>(d));
    put_floats(os, p.values());
  }
}

inline ParamSet get_params(std::istream& is) {
  ParamSet params;
  const uint32_t count = get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(is);
    const uint32_t rank = get_u32(is);
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank");
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(get_u32(is));
    std::vector<float> values = get_floats(is);
    add_param(params, name, Tensor::from(shape, std::move(values)));
  }
  return params;
}

inline void put_adam(std::ostream& os, const AdamState& st) {
  put_i64(os, st.t);
  put_u32(os, static_cast<uint32_t>(st.moments.size()));
  for (const auto& [name, mom] : st.moments) {
    put_string(os, name);
    put_floats(os, mom.m);
    put_floats(os, mom.v);
  }
}

inline AdamState get_adam(std::istream& is) {
  AdamState st;
  st.t = get_i64(is);
  const uint32_t count = get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(is);
    auto& mom = st.moments[name];
    mom.m = get_floats(is);
    mom.v = get_floats(is);
  }
  return st;
}

}  // namespace ckpt
}  // namespace cutpaste
