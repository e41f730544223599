#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hlseg::io {

// Weight file magic and frozen format version.
inline constexpr std::string_view kWeightMagic = "HLNW";
inline constexpr std::uint32_t kWeightVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const noexcept;
};

// Named tensors in insertion order. Order is preserved through save/load so
// a load followed by a save reproduces the original bytes.
class WeightStore {
 public:
  // Throws FormatError on a duplicate name, ParamError on a bad rank or a
  // data length that disagrees with dims.
  void add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data);

  bool contains(std::string_view name) const;
  // nullptr when absent.
  const NamedTensor* find(std::string_view name) const;
  // Throws LoadError naming the missing tensor.
  const NamedTensor& get(std::string_view name) const;

  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }
  auto begin() const noexcept { return tensors_.begin(); }
  auto end() const noexcept { return tensors_.end(); }

  // Drops a tensor; returns false when it was absent.
  bool remove(std::string_view name);

  friend bool operator==(const WeightStore& a, const WeightStore& b) {
    return a.tensors_ == b.tensors_;
  }

 private:
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline bool operator==(const NamedTensor& a, const NamedTensor& b) {
  return a.name == b.name && a.dims == b.dims && a.data == b.data;
}

std::vector<std::uint8_t> serialize(const WeightStore& store);
WeightStore deserialize(std::span<const std::uint8_t> bytes);

void save(const WeightStore& store, const std::filesystem::path& path);
WeightStore load(const std::filesystem::path& path);

// One "name dims" line per tensor, e.g. "stage1.conv.weight 3x3x3x32".
std::string manifest(const WeightStore& store);

// Whole-file helpers shared with the forest format.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Little-endian primitive writer/reader. The reader never reads past the
// buffer and reports truncation as CorruptionError.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::span<const std::uint8_t> data);
  void raw(std::string_view text);

  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view text(std::size_t n);

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace hlseg::io
