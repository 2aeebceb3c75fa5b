#include "jdm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace jdm {

namespace {

constexpr char kMagic[4] = {'J', 'D', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("checkpoint: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32le(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

float get_f32le(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
  nlohmann::json manifest = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    manifest[name] = {{"shape", t.shape()}, {"offset", offset}};
    offset += static_cast<std::uint64_t>(t.size()) * 4;
  }
  const std::string mtext = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(mtext.size()));
  os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& [name, t] : params) {
    const Array& d = t.data();
    for (std::int64_t i = 0; i < d.size(); ++i) put_f32le(os, static_cast<float>(d[i]));
  }
  if (!os) throw IoError("checkpoint: write failure on " + path);
}

ParamMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t mlen = get_u32(is);
  std::string mtext(mlen, '\0');
  is.read(mtext.data(), mlen);
  if (!is) throw IoError("checkpoint: truncated manifest in " + path);
  nlohmann::json manifest = nlohmann::json::parse(mtext, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw IoError("checkpoint: malformed manifest in " + path);
  }
  std::vector<unsigned char> payload(std::istreambuf_iterator<char>(is), {});

  ParamMap out;
  for (const auto& [name, entry] : manifest.items()) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::int64_t n = numel(shape);
    if (offset + static_cast<std::uint64_t>(n) * 4 > payload.size()) {
      throw IoError("checkpoint: truncated payload for parameter " + name);
    }
    Array d(n);
    for (std::int64_t i = 0; i < n; ++i) {
      d[i] = static_cast<double>(get_f32le(payload.data() + offset + static_cast<std::uint64_t>(i) * 4));
    }
    out.emplace(name, Tensor::from_array(std::move(shape), std::move(d), true));
  }
  return out;
}

void assign_params(ParamMap& dst, const ParamMap& src) {
  for (auto& [name, t] : dst) {
    auto it = src.find(name);
    if (it == src.end()) throw IoError("checkpoint: missing parameter " + name);
    if (it->second.shape() != t.shape()) {
      throw ShapeError("checkpoint: shape mismatch for " + name + ": expected " +
                       shape_str(t.shape()) + ", got " + shape_str(it->second.shape()));
    }
    t.raw() = it->second.data();
  }
}

}  // namespace jdm
