#include "jdm/scube.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace jdm {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'U', 'B'};
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
  if (!is) throw IoError("scube: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_payload(std::ostream& os, const Array& values) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(values.size()) * 4);
  for (std::int64_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    buf[static_cast<std::size_t>(i) * 4] = static_cast<unsigned char>(u & 0xff);
    buf[static_cast<std::size_t>(i) * 4 + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
    buf[static_cast<std::size_t>(i) * 4 + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
    buf[static_cast<std::size_t>(i) * 4 + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_payload(std::istream& is, Array& values, std::int64_t count, const std::string& path) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(count) * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw IoError("scube: truncated payload in " + path);
  }
  values.resize(count);
  for (std::int64_t i = 0; i < count; ++i) {
    std::uint32_t u = static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4]) |
                      (static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 1]) << 8) |
                      (static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 2]) << 16) |
                      (static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i) * 4 + 3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    values[i] = static_cast<double>(f);
  }
}

void write_scube_file(const std::string& path, const nlohmann::json& header,
                      const Array& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("scube: cannot open " + path + " for writing");
  const std::string htext = header.dump();
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(htext.size()));
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  write_payload(os, values);
  if (!os) throw IoError("scube: write failure on " + path);
}

nlohmann::json read_scube_header(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("scube: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw IoError("scube: unsupported version " + std::to_string(version) + " in " + path);
  }
  const std::uint32_t hlen = get_u32(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), hlen);
  if (!is) throw IoError("scube: truncated JSON header in " + path);
  nlohmann::json h = nlohmann::json::parse(htext, nullptr, false);
  if (h.is_discarded() || !h.is_object()) throw IoError("scube: malformed header in " + path);
  if (h.value("dtype", "") != "f32le" || h.value("layout", "") != "hwc-row-major") {
    throw IoError("scube: unsupported dtype/layout in " + path);
  }
  return h;
}

}  // namespace

void write_cube(const SpectralCube& cube, const std::string& path) {
  nlohmann::json h = {{"height", cube.height},
                      {"width", cube.width},
                      {"channels", cube.channels()},
                      {"wavelengths_nm", std::vector<double>(cube.wavelengths_nm.begin(),
                                                             cube.wavelengths_nm.end())},
                      {"dtype", "f32le"},
                      {"layout", "hwc-row-major"}};
  write_scube_file(path, h, cube.values);
}

SpectralCube read_cube(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("scube: cannot open " + path);
  nlohmann::json h = read_scube_header(is, path);
  const int height = h.at("height").get<int>();
  const int width = h.at("width").get<int>();
  const int channels = h.at("channels").get<int>();
  auto wl = h.at("wavelengths_nm").get<std::vector<double>>();
  if (static_cast<int>(wl.size()) != channels) {
    throw IoError("scube: wavelength count " + std::to_string(wl.size()) +
                  " != channel count " + std::to_string(channels) + " in " + path);
  }
  for (std::size_t i = 1; i < wl.size(); ++i) {
    if (wl[i] <= wl[i - 1]) throw IoError("scube: non-monotone wavelengths in " + path);
  }
  SpectralCube cube;
  cube.height = height;
  cube.width = width;
  cube.wavelengths_nm = Eigen::Map<const Eigen::VectorXd>(wl.data(), static_cast<Eigen::Index>(wl.size()));
  read_payload(is, cube.values, static_cast<std::int64_t>(height) * width * channels, path);
  return cube;
}

ScubeHeader read_cube_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("scube: cannot open " + path);
  nlohmann::json h = read_scube_header(is, path);
  ScubeHeader out;
  out.height = h.at("height").get<int>();
  out.width = h.at("width").get<int>();
  out.channels = h.at("channels").get<int>();
  out.wavelengths_nm = h.at("wavelengths_nm").get<std::vector<double>>();
  if (static_cast<int>(out.wavelengths_nm.size()) != out.channels) {
    throw IoError("scube: wavelength count mismatch in " + path);
  }
  return out;
}

void write_msi(const LrMsi& msi, const std::string& path) {
  std::vector<double> mids;
  std::vector<std::vector<double>> ranges;
  for (const auto& [lo, hi] : msi.band_ranges_nm) {
    mids.push_back(0.5 * (lo + hi));
    ranges.push_back({lo, hi});
  }
  nlohmann::json h = {{"height", msi.height},
                      {"width", msi.width},
                      {"channels", msi.bands()},
                      {"wavelengths_nm", mids},
                      {"band_ranges_nm", ranges},
                      {"dtype", "f32le"},
                      {"layout", "hwc-row-major"}};
  write_scube_file(path, h, msi.values);
}

LrMsi read_msi(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("scube: cannot open " + path);
  nlohmann::json h = read_scube_header(is, path);
  LrMsi msi;
  msi.height = h.at("height").get<int>();
  msi.width = h.at("width").get<int>();
  const int channels = h.at("channels").get<int>();
  if (h.contains("band_ranges_nm")) {
    for (const auto& r : h.at("band_ranges_nm")) {
      msi.band_ranges_nm.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
    }
  } else {
    msi.band_ranges_nm = default_band_ranges(channels);
  }
  if (static_cast<int>(msi.band_ranges_nm.size()) != channels) {
    throw IoError("scube: band range count mismatch in " + path);
  }
  read_payload(is, msi.values, static_cast<std::int64_t>(msi.height) * msi.width * channels,
               path);
  return msi;
}

}  // namespace jdm
