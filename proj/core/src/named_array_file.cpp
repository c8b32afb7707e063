#include "umr/named_array_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "umr/error.hpp"

namespace umr {
namespace {

static_assert(std::endian::native == std::endian::little, "named array files assume a little-endian host");

constexpr char kMagic[8] = {'U', 'M', 'R', 'A', 'R', 'R', 'A', 'Y'};

std::size_t dtype_bytes(DType t) {
  switch (t) {
    case DType::F64: return 8;
    case DType::F32: return 4;
    case DType::F16: return 2;
    case DType::U8: return 1;
  }
  return 0;
}

DType dtype_from(const std::string& s) {
  if (s == "f64") return DType::F64;
  if (s == "f32") return DType::F32;
  if (s == "f16") return DType::F16;
  if (s == "u8") return DType::U8;
  fail(ErrorCode::SchemaViolation, "unknown dtype '" + s + "'");
}

void encode(const NamedArray& a, std::string& out) {
  const std::size_t start = out.size();
  out.resize(start + a.data.size() * dtype_bytes(a.dtype));
  char* dst = out.data() + start;
  for (double v : a.data) {
    switch (a.dtype) {
      case DType::F64: std::memcpy(dst, &v, 8); dst += 8; break;
      case DType::F32: {
        const auto f = static_cast<float>(v);
        std::memcpy(dst, &f, 4);
        dst += 4;
        break;
      }
      case DType::F16: {
        const std::uint16_t h = half_from_double(v);
        std::memcpy(dst, &h, 2);
        dst += 2;
        break;
      }
      case DType::U8: *dst++ = static_cast<char>(static_cast<std::uint8_t>(v)); break;
    }
  }
}

void decode(const char* src, NamedArray& a, std::size_t count) {
  a.data.resize(count);
  for (double& v : a.data) {
    switch (a.dtype) {
      case DType::F64: std::memcpy(&v, src, 8); src += 8; break;
      case DType::F32: {
        float f;
        std::memcpy(&f, src, 4);
        v = f;
        src += 4;
        break;
      }
      case DType::F16: {
        std::uint16_t h;
        std::memcpy(&h, src, 2);
        v = double_from_half(h);
        src += 2;
        break;
      }
      case DType::U8: v = static_cast<std::uint8_t>(*src++); break;
    }
  }
}

}  // namespace

const char* to_string(DType t) {
  switch (t) {
    case DType::F64: return "f64";
    case DType::F32: return "f32";
    case DType::F16: return "f16";
    case DType::U8: return "u8";
  }
  return "?";
}

std::uint16_t half_from_double(double v) {
  const auto f = static_cast<float>(v);
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t exp = (x >> 23) & 0xffu;
  std::uint32_t mant = x & 0x7fffffu;
  if (exp == 0xffu) return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into the exponent, which is correct
  return static_cast<std::uint16_t>(sign | half);
}

double double_from_half(std::uint16_t h) {
  const int sign = (h & 0x8000) ? -1 : 1;
  const int exp = (h >> 10) & 0x1f;
  const int mant = h & 0x3ff;
  if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
  if (exp == 0x1f) return mant ? std::nan("") : sign * INFINITY;
  return sign * std::ldexp(static_cast<double>(mant | 0x400), exp - 25);
}

std::size_t NamedArray::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void NamedArrayFile::put(NamedArray array) {
  require(!array.name.empty(), "named array: empty name");
  require(array.axes.size() == array.shape.size(),
          "named array '" + array.name + "': axes labels do not match rank");
  require(array.data.size() == array.numel() * (array.complex ? 2 : 1),
          "named array '" + array.name + "': data size does not match shape");
  const std::string key = array.name;
  arrays_.insert_or_assign(key, std::move(array));
}

bool NamedArrayFile::has(std::string_view name) const { return arrays_.find(name) != arrays_.end(); }

const NamedArray& NamedArrayFile::get(std::string_view name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) fail(ErrorCode::MissingDataset, "missing dataset '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> NamedArrayFile::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : arrays_) out.push_back(k);
  return out;
}

void NamedArrayFile::set_attr(const std::string& name, std::vector<double> values) {
  attrs_.insert_or_assign(name, std::move(values));
}

void NamedArrayFile::set_text(const std::string& name, std::string value) {
  texts_.insert_or_assign(name, std::move(value));
}

bool NamedArrayFile::has_attr(std::string_view name) const {
  return attrs_.find(name) != attrs_.end() || texts_.find(name) != texts_.end();
}

const std::vector<double>& NamedArrayFile::attr(std::string_view name) const {
  auto it = attrs_.find(name);
  if (it == attrs_.end()) fail(ErrorCode::MissingAttribute, "missing attribute '" + std::string(name) + "'");
  return it->second;
}

double NamedArrayFile::attr_scalar(std::string_view name) const {
  const auto& v = attr(name);
  if (v.size() != 1) fail(ErrorCode::SchemaViolation, "attribute '" + std::string(name) + "' is not a scalar");
  return v[0];
}

const std::string& NamedArrayFile::text(std::string_view name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) fail(ErrorCode::MissingAttribute, "missing attribute '" + std::string(name) + "'");
  return it->second;
}

void NamedArrayFile::write(const std::string& path) const {
  nlohmann::json index;
  index["arrays"] = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, a] : arrays_) {
    const std::size_t offset = payload.size();
    encode(a, payload);
    index["arrays"].push_back({{"name", name},
                               {"dtype", to_string(a.dtype)},
                               {"complex", a.complex},
                               {"shape", a.shape},
                               {"axes", a.axes},
                               {"offset", offset},
                               {"nbytes", payload.size() - offset}});
  }
  index["attrs"] = nlohmann::json::object();
  for (const auto& [name, v] : attrs_) index["attrs"][name] = v;
  index["text"] = nlohmann::json::object();
  for (const auto& [name, v] : texts_) index["text"][name] = v;
  const std::string idx = index.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const std::uint32_t version = kVersion, reserved = 0;
  const std::uint64_t len = idx.size();
  f.write(kMagic, 8);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&reserved), 4);
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(idx.data(), static_cast<std::streamsize>(idx.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

NamedArrayFile NamedArrayFile::read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = 24;
  if (bytes.size() < header) fail(ErrorCode::TruncatedFile, "'" + path + "': header truncated");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) {
    fail(ErrorCode::SchemaViolation, "'" + path + "' is not a named array file");
  }
  std::uint32_t version;
  std::uint64_t len;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&len, bytes.data() + 16, 8);
  if (version != kVersion) {
    fail(ErrorCode::VersionMismatch, "'" + path + "': format version " + std::to_string(version) +
                                         ", expected " + std::to_string(kVersion));
  }
  if (bytes.size() - header < len) fail(ErrorCode::TruncatedFile, "'" + path + "': index truncated");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(bytes.begin() + header, bytes.begin() + static_cast<std::ptrdiff_t>(header + len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + path + "': malformed index: " + e.what());
  }
  const std::size_t payload = header + len;
  NamedArrayFile out;
  try {
    for (const auto& e : index.at("arrays")) {
      NamedArray a;
      a.name = e.at("name").get<std::string>();
      a.dtype = dtype_from(e.at("dtype").get<std::string>());
      a.complex = e.at("complex").get<bool>();
      a.shape = e.at("shape").get<std::vector<std::size_t>>();
      a.axes = e.at("axes").get<std::vector<std::string>>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("nbytes").get<std::size_t>();
      if (a.axes.size() != a.shape.size()) {
        fail(ErrorCode::SchemaViolation, "'" + path + "': array '" + a.name + "' axes do not match its rank");
      }
      const std::size_t count = a.numel() * (a.complex ? 2 : 1);
      if (count * dtype_bytes(a.dtype) != nbytes) {
        fail(ErrorCode::SchemaViolation, "'" + path + "': array '" + a.name + "' size disagrees with its shape");
      }
      if (payload + offset + nbytes > bytes.size()) {
        fail(ErrorCode::TruncatedFile, "'" + path + "': payload of '" + a.name + "' truncated");
      }
      decode(bytes.data() + payload + offset, a, count);
      out.arrays_.insert_or_assign(a.name, std::move(a));
    }
    for (const auto& [k, v] : index.at("attrs").items()) out.attrs_[k] = v.get<std::vector<double>>();
    for (const auto& [k, v] : index.at("text").items()) out.texts_[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + path + "': malformed index: " + e.what());
  }
  return out;
}

}  // namespace umr
