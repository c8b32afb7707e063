#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace umr {

enum class DType { F64, F32, F16, U8 };

const char* to_string(DType t);

/// IEEE binary16 conversions, round to nearest even.
std::uint16_t half_from_double(double v);
double double_from_half(std::uint16_t h);

/// One stored array. Values are held in double regardless of the on-disk
/// dtype; complex arrays hold 2·numel values, all real parts first.
struct NamedArray {
  std::string name;
  DType dtype = DType::F64;
  bool complex = false;
  std::vector<std::size_t> shape;
  std::vector<std::string> axes;  // one label per dimension
  std::vector<double> data;

  std::size_t numel() const;
};

/// Little-endian binary file: 8-byte magic, u32 version, u32 reserved,
/// u64 index length, JSON index, then the raw array payload.
class NamedArrayFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(NamedArray array);
  bool has(std::string_view name) const;
  /// Throws MissingDataset.
  const NamedArray& get(std::string_view name) const;
  std::vector<std::string> names() const;

  void set_attr(const std::string& name, std::vector<double> values);
  void set_attr(const std::string& name, double value) { set_attr(name, std::vector<double>{value}); }
  void set_text(const std::string& name, std::string value);
  bool has_attr(std::string_view name) const;
  /// Throws MissingAttribute.
  const std::vector<double>& attr(std::string_view name) const;
  double attr_scalar(std::string_view name) const;
  const std::string& text(std::string_view name) const;

  void write(const std::string& path) const;
  /// Throws Io, VersionMismatch, TruncatedFile or SchemaViolation.
  static NamedArrayFile read(const std::string& path);

 private:
  std::map<std::string, NamedArray, std::less<>> arrays_;
  std::map<std::string, std::vector<double>, std::less<>> attrs_;
  std::map<std::string, std::string, std::less<>> texts_;
};

}  // namespace umr
