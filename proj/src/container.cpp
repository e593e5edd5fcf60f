#include "mvf/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mvf {

void TensorFile::set_meta(const std::string& key, std::string value) {
  for (auto& [k, v] : meta)
    if (k == key) {
      v = std::move(value);
      return;
    }
  meta.emplace_back(key, std::move(value));
}

const std::string& TensorFile::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw FormatError("missing metadata key '" + key + "'");
}

bool TensorFile::has_meta(const std::string& key) const {
  for (const auto& kv : meta)
    if (kv.first == key) return true;
  return false;
}

void TensorFile::add(std::string name, Tensor t) {
  if (has_tensor(name)) throw FormatError("duplicate tensor name '" + name + "'");
  tensors.emplace_back(std::move(name), std::move(t));
}

const Tensor& TensorFile::tensor(const std::string& name) const {
  for (const auto& [k, t] : tensors)
    if (k == name) return t;
  throw FormatError("missing tensor '" + name + "'");
}

bool TensorFile::has_tensor(const std::string& name) const {
  for (const auto& kv : tensors)
    if (kv.first == name) return true;
  return false;
}

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr char kMagic[4] = {'M', 'V', 'F', 'T'};

template <class T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated tensor file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensor_file(const TensorFile& file, Precision storage) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, TensorFile::kVersion);
  put<std::uint32_t>(out, storage == Precision::F32 ? 32u : 64u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.meta.size()));
  for (const auto& [k, v] : file.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
  }
  std::string payload;
  for (const auto& [name, t] : file.tensors)
    for (double v : t.data()) {
      if (storage == Precision::F32)
        put<std::uint32_t>(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        put<std::uint64_t>(payload, std::bit_cast<std::uint64_t>(v));
    }
  out += payload;
  put<std::uint32_t>(out, crc32_of(payload));
  return out;
}

TensorFile decode_tensor_file(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string(kMagic, 4)) throw FormatError("bad magic: not an MVFT tensor file");
  const auto version = in.get<std::uint32_t>();
  if (version != TensorFile::kVersion) throw FormatError("unsupported tensor file version " + std::to_string(version));
  const auto bits = in.get<std::uint32_t>();
  if (bits != 32 && bits != 64) throw FormatError("unsupported float width " + std::to_string(bits));

  TensorFile file;
  const auto n_meta = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = in.get_string();
    auto v = in.get_string();
    file.meta.emplace_back(std::move(k), std::move(v));
  }
  const auto n_tensors = in.get<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> table;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = in.get_string();
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    total += shape_size(shape);
    table.emplace_back(std::move(name), std::move(shape));
  }
  const std::size_t width = bits / 8;
  if (in.remaining() != total * width + 4) throw FormatError("payload size does not match the tensor table");
  const std::string payload = in.take(total * width);
  const auto crc = in.get<std::uint32_t>();
  if (crc != crc32_of(payload)) throw FormatError("payload CRC mismatch");

  Reader p(payload);
  for (auto& [name, shape] : table) {
    std::vector<double> data(shape_size(shape));
    for (auto& v : data)
      v = bits == 32 ? static_cast<double>(std::bit_cast<float>(p.get<std::uint32_t>()))
                     : std::bit_cast<double>(p.get<std::uint64_t>());
    file.tensors.emplace_back(name, Tensor(shape, std::move(data)));
  }
  return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file, Precision storage) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_tensor_file(file, storage);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_tensor_file(ss.str());
}

}  // namespace mvf
