#include "mgnn/io/archive.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace mgnn::io {

namespace {

constexpr std::string_view kMagic = "MGNNCKPT";
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) throw CorruptArchive("checkpoint truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos + n > bytes.size()) throw CorruptArchive("checkpoint truncated");
    const auto s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::string archive_encode(const Archive& a) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.size()));
  for (const auto& [name, t] : a) {
    if (name.size() > 0xFFFF) throw Error("checkpoint key too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    const auto n = element_count(t.dims);
    switch (t.dtype) {
      case Tensor::DType::F32:
        if (t.f32.size() != n) throw ShapeMismatch(name + ": payload does not match dims");
        for (float f : t.f32) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
        break;
      case Tensor::DType::I64:
        if (t.i64.size() != n) throw ShapeMismatch(name + ": payload does not match dims");
        for (auto v : t.i64) put<std::uint64_t>(out, static_cast<std::uint64_t>(v));
        break;
      case Tensor::DType::F64:
        if (t.f64.size() != n) throw ShapeMismatch(name + ": payload does not match dims");
        for (double f : t.f64) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(f));
        break;
      case Tensor::DType::Utf8:
        if (t.text.size() != n) throw ShapeMismatch(name + ": payload does not match dims");
        out += t.text;
        break;
    }
  }
  return out;
}

Archive archive_decode(std::string_view bytes) {
  Reader r{bytes};
  if (bytes.size() < kMagic.size() || r.take(kMagic.size()) != kMagic) throw CorruptArchive("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw CorruptArchive("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Archive a;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name(r.take(r.get<std::uint16_t>()));
    Tensor t;
    const auto tag = r.get<std::uint8_t>();
    if (tag > 3) throw CorruptArchive(name + ": unknown dtype " + std::to_string(tag));
    t.dtype = static_cast<Tensor::DType>(tag);
    const auto rank = r.get<std::uint8_t>();
    for (int i = 0; i < rank; ++i) t.dims.push_back(r.get<std::uint64_t>());
    const auto n = element_count(t.dims);
    if (n > bytes.size()) throw CorruptArchive(name + ": implausible size");
    switch (t.dtype) {
      case Tensor::DType::F32:
        t.f32.resize(n);
        for (auto& f : t.f32) f = std::bit_cast<float>(r.get<std::uint32_t>());
        break;
      case Tensor::DType::I64:
        t.i64.resize(n);
        for (auto& v : t.i64) v = static_cast<std::int64_t>(r.get<std::uint64_t>());
        break;
      case Tensor::DType::F64:
        t.f64.resize(n);
        for (auto& f : t.f64) f = std::bit_cast<double>(r.get<std::uint64_t>());
        break;
      case Tensor::DType::Utf8:
        t.text = std::string(r.take(n));
        break;
    }
    if (!a.emplace(std::move(name), std::move(t)).second) throw CorruptArchive("duplicate checkpoint key");
  }
  if (r.pos != bytes.size()) throw CorruptArchive("trailing bytes after checkpoint entries");
  return a;
}

void archive_write(const std::filesystem::path& path, const Archive& a) {
  const auto bytes = archive_encode(a);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Archive archive_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return archive_decode(ss.str());
}

const Tensor& archive_get(const Archive& a, const std::string& key) {
  const auto it = a.find(key);
  if (it == a.end()) throw CorruptArchive("checkpoint has no entry " + key);
  return it->second;
}

}  // namespace mgnn::io
