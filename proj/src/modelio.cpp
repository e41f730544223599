#include "hlseg/modelio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hlseg/errors.hpp"

namespace hlseg::io {

std::size_t NamedTensor::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void WeightStore::add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data) {
  if (dims.empty() || dims.size() > 4) {
    throw ParamError("tensor '" + name + "' has rank " + std::to_string(dims.size()) +
                     ", expected 1..4");
  }
  if (name.size() > 0xFFFF) throw ParamError("tensor name longer than 65535 bytes");
  NamedTensor t{std::move(name), std::move(dims), std::move(data)};
  if (t.data.size() != t.element_count()) {
    throw ParamError("tensor '" + t.name + "' holds " + std::to_string(t.data.size()) +
                     " values but its dims describe " + std::to_string(t.element_count()));
  }
  if (index_.count(t.name) != 0) throw FormatError("duplicate tensor name '" + t.name + "'");
  index_.emplace(t.name, tensors_.size());
  tensors_.push_back(std::move(t));
}

bool WeightStore::contains(std::string_view name) const { return find(name) != nullptr; }

const NamedTensor* WeightStore::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

const NamedTensor& WeightStore::get(std::string_view name) const {
  const NamedTensor* t = find(name);
  if (t == nullptr) throw LoadError("weight store has no tensor '" + std::string(name) + "'");
  return *t;
}

bool WeightStore::remove(std::string_view name) {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return false;
  tensors_.erase(tensors_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < tensors_.size(); ++i) index_.emplace(tensors_[i].name, i);
  return true;
}

void ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::raw(std::span<const std::uint8_t> data) {
  bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteWriter::raw(std::string_view text) { bytes_.insert(bytes_.end(), text.begin(), text.end()); }

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) {
    throw CorruptionError("unexpected end of data at byte " + std::to_string(pos_) + " (need " +
                          std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string_view ByteReader::text(std::size_t n) {
  need(n);
  std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> serialize(const WeightStore& store) {
  ByteWriter w;
  w.raw(kWeightMagic);
  w.u32(kWeightVersion);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const NamedTensor& t : store) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  return std::move(w.bytes());
}

WeightStore deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kWeightMagic.size() || r.text(kWeightMagic.size()) != kWeightMagic) {
    throw FormatError("not a weight file: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kWeightVersion) {
    throw FormatError("unsupported weight file version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name(r.text(name_len));
    const std::uint8_t rank = r.u8();
    if (rank < 1 || rank > 4) {
      throw FormatError("tensor '" + name + "' declares rank " + std::to_string(rank));
    }
    std::vector<std::uint32_t> dims(rank);
    std::uint64_t elements = 1;
    for (auto& d : dims) {
      d = r.u32();
      elements *= d;
      // Cap before multiplying further so a hostile header cannot overflow.
      if (elements > r.remaining() / 4 + 1) {
        throw CorruptionError("tensor '" + name + "' declares more data than the file holds");
      }
    }
    if (elements * 4 > r.remaining()) {
      throw CorruptionError("tensor '" + name + "' declares " + std::to_string(elements) +
                            " values but only " + std::to_string(r.remaining()) +
                            " bytes remain");
    }
    std::vector<float> data(static_cast<std::size_t>(elements));
    for (float& v : data) v = r.f32();
    if (store.contains(name)) throw FormatError("duplicate tensor name '" + name + "'");
    store.add(std::move(name), std::move(dims), std::move(data));
  }
  if (r.remaining() != 0) {
    throw CorruptionError(std::to_string(r.remaining()) + " trailing bytes after last tensor");
  }
  return store;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

void save(const WeightStore& store, const std::filesystem::path& path) {
  write_file(path, serialize(store));
}

WeightStore load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string manifest(const WeightStore& store) {
  std::ostringstream os;
  for (const NamedTensor& t : store) {
    os << t.name << ' ';
    for (std::size_t i = 0; i < t.dims.size(); ++i) os << (i ? "x" : "") << t.dims[i];
    os << '\n';
  }
  return os.str();
}

}  // namespace hlseg::io
