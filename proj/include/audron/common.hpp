#ifndef AUDRON_COMMON_HPP
#define AUDRON_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace audron {

// Error taxonomy. The CLI maps these onto exit codes, so every throw site
// should pick the class that matches the failure, not just runtime_error.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument or configuration value (CLI exit 2).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Filesystem / stream failure (CLI exit 3).
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad input data: labels, splits, malformed manifests (CLI exit 4).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed binary container (WAV, checkpoint) (CLI exit 4).
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Incompatible tensor shapes (CLI exit 4).
class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf or other numeric contract violation (CLI exit 5).
class NumericError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

// FNV-1a 64-bit. Used for parameter-name stream derivation and as the
// checkpoint content checksum.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace audron

#endif  // AUDRON_COMMON_HPP
