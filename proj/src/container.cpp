#include "gwpk/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gwpk {

namespace {

constexpr char kMagic[5] = {'G', 'W', 'P', 'K', '1'};

template <class T>
void put(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorCode::io, "GWPK1: truncated file");
  if constexpr (std::endian::native == std::endian::big) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
  }
  return v;
}

std::size_t product(const std::vector<std::uint64_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

std::size_t Array::count() const { return product(dims); }

void write_array(const std::string& path, const Array& a) {
  if (a.dims.size() > 255) fail(ErrorCode::invalid_argument, "GWPK1: rank too large");
  const std::size_t n = a.count();
  if ((a.dtype == Array::DType::f64 ? a.real.size() : a.cdata.size()) != n)
    fail(ErrorCode::invalid_argument, "GWPK1: payload size does not match dims");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::io, "GWPK1: cannot open " + path + " for writing");
  os.write(kMagic, 5);
  put<std::uint32_t>(os, kContainerVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(a.dtype));
  put<std::uint8_t>(os, static_cast<std::uint8_t>(a.dims.size()));
  for (auto d : a.dims) put<std::uint64_t>(os, d);
  if (a.dtype == Array::DType::f64) {
    for (double v : a.real) put<double>(os, v);
  } else {
    for (const auto& c : a.cdata) {
      put<double>(os, c.real());
      put<double>(os, c.imag());
    }
  }
  if (!os) fail(ErrorCode::io, "GWPK1: write failed for " + path);
}

void write_array(const std::string& path, const std::vector<std::uint64_t>& dims, const RVec& data) {
  Array a;
  a.dtype = Array::DType::f64;
  a.dims = dims;
  a.real = data;
  write_array(path, a);
}

void write_array(const std::string& path, const std::vector<std::uint64_t>& dims, const CVec& data) {
  Array a;
  a.dtype = Array::DType::c128;
  a.dims = dims;
  a.cdata = data;
  write_array(path, a);
}

Array read_array(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "GWPK1: cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0) fail(ErrorCode::io, "GWPK1: bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kContainerVersion) fail(ErrorCode::io, "GWPK1: unsupported version " + std::to_string(version));
  Array a;
  const auto code = get<std::uint8_t>(is);
  if (code > 1) fail(ErrorCode::io, "GWPK1: unknown dtype code " + std::to_string(code));
  a.dtype = static_cast<Array::DType>(code);
  const auto rank = get<std::uint8_t>(is);
  for (int i = 0; i < rank; ++i) a.dims.push_back(get<std::uint64_t>(is));
  const std::size_t n = a.count();
  if (a.dtype == Array::DType::f64) {
    a.real.resize(n);
    for (auto& v : a.real) v = get<double>(is);
  } else {
    a.cdata.resize(n);
    for (auto& c : a.cdata) {
      const double re = get<double>(is);
      const double im = get<double>(is);
      c = {re, im};
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) fail(ErrorCode::io, "GWPK1: trailing bytes in " + path);
  return a;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::io, "cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, path + ": " + e.what());
  }
}

}  // namespace gwpk
