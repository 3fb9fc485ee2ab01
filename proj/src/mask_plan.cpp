#include "maskcert/mask_plan.hpp"

#include <string>

#include "maskcert/errors.hpp"
#include "maskcert/model.hpp"

namespace maskcert {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::string dims(std::size_t w, std::size_t h) {
  return std::to_string(w) + "x" + std::to_string(h);
}

}  // namespace

GridGeometry GridGeometry::of(const ModelConfig& config) {
  return {config.image_width, config.image_height, config.patch_size};
}

void GridGeometry::validate() const {
  if (patch_size == 0 || image_width == 0 || image_height == 0) {
    throw GeometryError("image and patch extents must be >= 1");
  }
  if (image_width % patch_size != 0 || image_height % patch_size != 0) {
    throw GeometryError("image " + dims(image_width, image_height) +
                        " is not a multiple of patch size " + std::to_string(patch_size));
  }
}

CellExtent required_extent(const AdversaryGeometry& adv, std::size_t patch_size) {
  return {ceil_div(adv.width, patch_size) + 1, ceil_div(adv.height, patch_size) + 1};
}

std::size_t mask_count(const GridGeometry& geometry, const CellExtent& extent) {
  const std::size_t gw = geometry.grid_width(), gh = geometry.grid_height();
  if (extent.cols == 0 || extent.rows == 0 || extent.cols > gw || extent.rows > gh) return 0;
  return (gw - extent.cols + 1) * (gh - extent.rows + 1);
}

MaskPlan plan_with_extent(const GridGeometry& geometry, const CellExtent& extent) {
  geometry.validate();
  const std::size_t gw = geometry.grid_width(), gh = geometry.grid_height();
  if (extent.cols == 0 || extent.rows == 0 || extent.cols > gw || extent.rows > gh) {
    throw GeometryError("mask extent " + dims(extent.cols, extent.rows) +
                        " does not fit the " + dims(gw, gh) + " patch grid");
  }
  MaskPlan plan{gw, gh, extent, {}};
  plan.masks.reserve(mask_count(geometry, extent));
  for (std::size_t row = 0; row + extent.rows <= gh; ++row) {
    for (std::size_t col = 0; col + extent.cols <= gw; ++col) {
      plan.masks.push_back({col, row, extent.cols, extent.rows});
    }
  }
  return plan;
}

MaskPlan build_plan(const GridGeometry& geometry, const AdversaryGeometry& adv) {
  geometry.validate();
  if (adv.width == 0 || adv.height == 0 || adv.width > geometry.image_width ||
      adv.height > geometry.image_height) {
    throw GeometryError("adversary " + dims(adv.width, adv.height) + " does not fit the " +
                        dims(geometry.image_width, geometry.image_height) + " image");
  }
  const CellExtent extent = required_extent(adv, geometry.patch_size);
  if (extent.cols > geometry.grid_width() || extent.rows > geometry.grid_height()) {
    throw GeometryError("patch too large to certify with this backbone: needs a " +
                        dims(extent.cols, extent.rows) + " mask on a " +
                        dims(geometry.grid_width(), geometry.grid_height()) + " patch grid");
  }
  return plan_with_extent(geometry, extent);
}

MaskPlan build_plan(const ModelConfig& config, const AdversaryGeometry& adv) {
  return build_plan(GridGeometry::of(config), adv);
}

AttentionBias mask_to_bias(const MaskSpec& mask, std::size_t grid_width, std::size_t grid_height) {
  if (mask.col + mask.cols > grid_width || mask.row + mask.rows > grid_height) {
    throw GeometryError("mask lies outside the patch grid");
  }
  std::vector<bool> allowed(grid_width * grid_height + 1, true);
  for (std::size_t r = mask.row; r < mask.row + mask.rows; ++r) {
    for (std::size_t c = mask.col; c < mask.col + mask.cols; ++c) {
      allowed[1 + r * grid_width + c] = false;
    }
  }
  return AttentionBias(std::move(allowed));
}

CellRect tainted_cells(const PixelRect& p, const GridGeometry& geometry) {
  if (p.width == 0 || p.height == 0 || p.x + p.width > geometry.image_width ||
      p.y + p.height > geometry.image_height) {
    throw GeometryError("placement " + dims(p.width, p.height) + " at (" + std::to_string(p.x) +
                        "," + std::to_string(p.y) + ") is outside the image");
  }
  const std::size_t ps = geometry.patch_size;
  const std::size_t c0 = p.x / ps, c1 = (p.x + p.width - 1) / ps;
  const std::size_t r0 = p.y / ps, r1 = (p.y + p.height - 1) / ps;
  return {c0, r0, c1 - c0 + 1, r1 - r0 + 1};
}

CoverageResult verify_coverage(const GridGeometry& geometry, const AdversaryGeometry& adv,
                               const MaskPlan& plan) {
  CoverageResult result;
  for (std::size_t y = 0; y + adv.height <= geometry.image_height; ++y) {
    for (std::size_t x = 0; x + adv.width <= geometry.image_width; ++x) {
      const PixelRect placement{x, y, adv.width, adv.height};
      const CellRect taint = tainted_cells(placement, geometry);
      ++result.placements_checked;
      bool hit = false;
      for (const MaskSpec& m : plan.masks) {
        if (m.contains(taint)) {
          hit = true;
          break;
        }
      }
      if (!hit) {
        result.covered = false;
        result.counterexample = placement;
        return result;
      }
    }
  }
  return result;
}

}  // namespace maskcert
