#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "gwpk/common.hpp"

namespace gwpk {

// GWPK1 binary container: "GWPK1", u32 version, u8 dtype (0=f64, 1=c128),
// u8 rank, u64 dims[rank], little-endian payload in row-major order.
struct Array {
  enum class DType : std::uint8_t { f64 = 0, c128 = 1 };
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  RVec real;   // used when dtype == f64
  CVec cdata;  // used when dtype == c128

  std::size_t count() const;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_array(const std::string& path, const std::vector<std::uint64_t>& dims, const RVec& data);
void write_array(const std::string& path, const std::vector<std::uint64_t>& dims, const CVec& data);
void write_array(const std::string& path, const Array& a);
Array read_array(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace gwpk
