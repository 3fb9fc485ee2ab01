#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "maskcert/tensor.hpp"

namespace maskcert {

struct ModelConfig;

// Image and patch extents in pixels; the patch grid derives from them.
struct GridGeometry {
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::size_t patch_size = 0;

  static GridGeometry of(const ModelConfig& config);
  std::size_t grid_width() const { return image_width / patch_size; }
  std::size_t grid_height() const { return image_height / patch_size; }
  // Throws GeometryError if the image is not tiled exactly by patches.
  void validate() const;
};

// Upper bound on the adversarial rectangle, in pixels.
struct AdversaryGeometry {
  std::size_t width = 0;
  std::size_t height = 0;
};

// Extent of a mask in patch cells.
struct CellExtent {
  std::size_t cols = 0;
  std::size_t rows = 0;
  friend bool operator==(const CellExtent&, const CellExtent&) = default;
};

// Rectangle of patch cells, [col, col + cols) x [row, row + rows).
struct CellRect {
  std::size_t col = 0;
  std::size_t row = 0;
  std::size_t cols = 0;
  std::size_t rows = 0;

  std::size_t count() const { return cols * rows; }
  bool contains(const CellRect& other) const {
    return col <= other.col && row <= other.row && other.col + other.cols <= col + cols &&
           other.row + other.rows <= row + rows;
  }
  friend bool operator==(const CellRect&, const CellRect&) = default;
};

using MaskSpec = CellRect;

struct PixelRect {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Stride-1 family of equal-sized masks over the patch grid, ordered
// row-major by origin.
struct MaskPlan {
  std::size_t grid_width = 0;
  std::size_t grid_height = 0;
  CellExtent extent;
  std::vector<MaskSpec> masks;

  std::size_t k() const { return masks.size(); }
};

// Cells a W_adv x H_adv rectangle can touch in the worst placement:
// (ceil(W_adv / P) + 1) x (ceil(H_adv / P) + 1).
CellExtent required_extent(const AdversaryGeometry& adv, std::size_t patch_size);

// (n_w - N_W + 1) * (n_h - N_H + 1), or 0 when the extent does not fit.
std::size_t mask_count(const GridGeometry& geometry, const CellExtent& extent);

// Throws GeometryError when the adversary exceeds the image or the required
// mask extent exceeds the patch grid.
MaskPlan build_plan(const GridGeometry& geometry, const AdversaryGeometry& adv);
MaskPlan build_plan(const ModelConfig& config, const AdversaryGeometry& adv);

// Plan with an explicit extent (no adversary bound check). Used to build
// deliberately undersized plans in mutation tests.
MaskPlan plan_with_extent(const GridGeometry& geometry, const CellExtent& extent);

// Allowed-token vector with the mask's cells disallowed. Throws
// InvalidMaskError when the mask covers the whole grid.
AttentionBias mask_to_bias(const MaskSpec& mask, std::size_t grid_width, std::size_t grid_height);

// Cells intersected by a pixel rectangle. Throws GeometryError when the
// rectangle leaves the image or is empty.
CellRect tainted_cells(const PixelRect& placement, const GridGeometry& geometry);

struct CoverageResult {
  bool covered = true;
  std::size_t placements_checked = 0;
  std::optional<PixelRect> counterexample;
};

// Exhaustive check over every pixel placement of the adversary rectangle:
// passes iff some mask in `plan` contains each placement's tainted cells.
CoverageResult verify_coverage(const GridGeometry& geometry, const AdversaryGeometry& adv,
                               const MaskPlan& plan);

}  // namespace maskcert
