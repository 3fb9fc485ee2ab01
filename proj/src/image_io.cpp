#include "maskcert/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "maskcert/errors.hpp"

namespace maskcert {
namespace fs = std::filesystem;
namespace {

std::string lower_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Image from_bytes(const std::vector<std::uint8_t>& samples, std::size_t width, std::size_t height,
                 std::size_t channels, std::size_t maxval) {
  Image img{Tensor({height, width, channels})};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    img.pixels[i] = static_cast<float>(samples[i]) / static_cast<float>(maxval);
  }
  return img;
}

Image read_pnm(const fs::path& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t.push_back(c);
        ++pos;
      }
    }
    if (t.empty()) throw ImageIoError("'" + path.string() + "': truncated PNM header");
    return t;
  };
  const std::string magic = token();
  std::size_t channels;
  bool ascii;
  if (magic == "P6") {
    channels = 3, ascii = false;
  } else if (magic == "P5") {
    channels = 1, ascii = false;
  } else if (magic == "P3") {
    channels = 3, ascii = true;
  } else if (magic == "P2") {
    channels = 1, ascii = true;
  } else {
    throw ImageIoError("'" + path.string() + "': unsupported PNM type " + magic);
  }
  std::size_t width, height, maxval;
  try {
    width = std::stoul(token());
    height = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::logic_error&) {
    throw ImageIoError("'" + path.string() + "': malformed PNM header");
  }
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
    throw ImageIoError("'" + path.string() + "': only 8-bit PNM images are supported");
  }
  const std::size_t count = width * height * channels;
  std::vector<std::uint8_t> samples;
  samples.reserve(count);
  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      samples.push_back(static_cast<std::uint8_t>(std::stoul(token())));
    }
  } else {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + count) throw ImageIoError("'" + path.string() + "': truncated pixel data");
    samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
  }
  return from_bytes(samples, width, height, channels, maxval);
}

Image read_png(const fs::path& path, std::size_t want_channels) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot open '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("libpng initialisation failed");
  }
  // Everything with a destructor must exist before setjmp.
  std::vector<std::uint8_t> samples;
  std::vector<png_bytep> rows;
  std::size_t width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("'" + path.string() + "': corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  const png_byte color = png_get_color_type(png, info);
  const bool gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (want_channels == 3 && gray) png_set_gray_to_rgb(png);
  if (want_channels == 1 && !gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  samples.resize(rowbytes * height);
  rows.resize(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = samples.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  const std::size_t channels = rowbytes / width;
  return from_bytes(samples, width, height, channels, 255);
}

}  // namespace

bool is_image_file(const fs::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".ppm" || ext == ".pnm" || ext == ".pgm" || ext == ".png" || ext == ".f32";
}

Image read_raw(const fs::path& path, std::size_t width, std::size_t height, std::size_t channels) {
  const auto bytes = slurp(path);
  const std::size_t count = width * height * channels;
  if (bytes.size() != count * 4) {
    throw ImageIoError("'" + path.string() + "': raw tensor has " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(count * 4));
  }
  Image img{Tensor({height, width, channels})};
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
    img.pixels[i] = std::bit_cast<float>(bits);
  }
  return img;
}

Image read_image(const fs::path& path, std::size_t width, std::size_t height,
                 std::size_t channels) {
  const std::string ext = lower_ext(path);
  if (ext == ".f32") return read_raw(path, width, height, channels);
  Image img;
  if (ext == ".png") {
    img = read_png(path, channels);
  } else if (ext == ".ppm" || ext == ".pnm" || ext == ".pgm") {
    img = read_pnm(path);
  } else {
    throw ImageIoError("'" + path.string() + "': unsupported image format");
  }
  if (img.width() != width || img.height() != height || img.channels() != channels) {
    throw GeometryError("'" + path.string() + "' is " + shape_to_string(img.pixels.shape()) +
                       " (HxWxC), model expects " +
                       shape_to_string({height, width, channels}));
  }
  return img;
}

Image read_image(const fs::path& path, const ModelConfig& config) {
  return read_image(path, config.image_width, config.image_height, config.channels);
}

void write_ppm(const Image& image, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ImageIoError("cannot open '" + path.string() + "' for writing");
  f << (image.channels() == 1 ? "P5" : "P6") << "\n"
    << image.width() << " " << image.height() << "\n255\n";
  if (image.channels() != 1 && image.channels() != 3) {
    throw ImageIoError("PPM output needs 1 or 3 channels");
  }
  for (float v : image.pixels.data()) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    f.put(static_cast<char>(byte));
  }
}

void write_raw(const Tensor& tensor, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ImageIoError("cannot open '" + path.string() + "' for writing");
  for (float v : tensor.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) f.put(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

void write_raw(const Image& image, const fs::path& path) { write_raw(image.pixels, path); }

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw ImageIoError("cannot open manifest '" + manifest.string() + "'");
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::vector<ManifestEntry> entries;

  if (lower_ext(manifest) == ".json") {
    try {
      const auto j = nlohmann::json::parse(f);
      for (const auto& item : j) {
        const long long label = item.at("label").get<long long>();
        if (label < 0) throw ImageIoError("negative label");
        entries.push_back({resolve(item.at("path").get<std::string>()),
                           static_cast<std::size_t>(label)});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ImageIoError("manifest '" + manifest.string() + "': " + e.what());
    }
    return entries;
  }

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "path,label") {
        throw ImageIoError("manifest '" + manifest.string() + "': expected header 'path,label'");
      }
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ImageIoError("manifest '" + manifest.string() + "' line " + std::to_string(lineno) +
                         ": expected 'path,label'");
    }
    std::size_t label;
    try {
      std::size_t used = 0;
      const std::string field = line.substr(comma + 1);
      if (!field.empty() && field[0] == '-') throw std::invalid_argument("negative");
      label = std::stoul(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ImageIoError("manifest '" + manifest.string() + "' line " + std::to_string(lineno) +
                         ": bad label");
    }
    entries.push_back({resolve(line.substr(0, comma)), label});
  }
  return entries;
}

}  // namespace maskcert
