#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskcert/model.hpp"

namespace maskcert {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decodes by extension: .ppm/.pnm (binary P6 or ASCII P3, maxval <= 255),
// .png, or .f32 (raw little-endian float32 [H, W, C], shape taken from the
// expected geometry). 8-bit samples map to v / 255. A decoded image whose
// extents differ from the expected ones throws GeometryError.
Image read_image(const std::filesystem::path& path, std::size_t expected_width,
                 std::size_t expected_height, std::size_t expected_channels);
Image read_image(const std::filesystem::path& path, const ModelConfig& config);

// Raw little-endian float32 [H, W, C] regardless of extension.
Image read_raw(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::size_t channels);

// Binary P6 for 3 channels, P5 for 1; values are clamped and rounded to 8 bits.
void write_ppm(const Image& image, const std::filesystem::path& path);
void write_raw(const Image& image, const std::filesystem::path& path);
void write_raw(const Tensor& tensor, const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);

// Image files directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct ManifestEntry {
  std::filesystem::path path;
  std::size_t label = 0;
};

// CSV with header `path,label`, or a JSON array of {"path", "label"}
// objects (chosen by the .json extension). Relative paths resolve against
// the manifest's directory. Throws ImageIoError on malformed input.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

}  // namespace maskcert
