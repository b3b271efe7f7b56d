#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wsod/png_io.hpp"
#include "wsod/proposal.hpp"

namespace wsod {

// One training/eval image with weak labels; gt boxes are kept for evaluation
// only and never shown to the model.
struct SceneRecord {
  std::string id;
  GrayImage image;
  std::size_t count = 0;
  std::vector<std::string> classes;
  std::vector<BBox> gt_boxes;  // image space
};

struct SceneSpec {
  std::size_t size = 64;
  std::size_t count_min = 1;
  std::size_t count_max = 4;
  double radius_min = 7.0;
  double radius_max = 9.0;
  double noise = 0.12;  // background noise amplitude, fraction of full scale
  std::string class_label = "crater";
};

// Rimmed disks (bright ring, dark bowl) on smoothed noise. Deterministic per
// seed; throws DataError when the requested disks cannot be placed.
SceneRecord generate_synthetic_scene(std::uint64_t seed, const SceneSpec& spec);

// ---------------------------------------------------------------------------
// Catalog ingestion (CSV: id,x,y,diameter_km with a units comment line)
// ---------------------------------------------------------------------------

enum class CatalogUnits { Meters, Degrees, Pixels };

struct CatalogEntry {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double diameter_km = 0.0;
};

struct Catalog {
  std::vector<CatalogEntry> entries;
  CatalogUnits units = CatalogUnits::Meters;
  // (line number, reason) for rows that failed validation
  std::vector<std::pair<std::size_t, std::string>> rejected;
};

Catalog ingest_catalog(const std::string& path);
void write_catalog(const std::string& path, const Catalog& catalog);

// Ground-sample distance used to convert metric catalogs to pixels.
constexpr double kMetersPerPixel = 100.0;

// ---------------------------------------------------------------------------
// Spatial index over catalog circles (uniform grid buckets)
// ---------------------------------------------------------------------------

struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

class SpatialIndex {
 public:
  explicit SpatialIndex(std::vector<Circle> circles);

  // Indices (ascending) of circles intersecting [x0,x1) x [y0,y1).
  std::vector<std::size_t> query(double x0, double y0, double x1, double y1) const;
  const std::vector<Circle>& circles() const { return circles_; }

 private:
  std::vector<Circle> circles_;
  double cell_ = 1.0;
  double min_x_ = 0.0, min_y_ = 0.0;
  std::size_t cols_ = 0, rows_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;
};

bool circle_intersects_window(const Circle& c, double x0, double y0, double x1, double y1);
bool circle_inside_window(const Circle& c, double x0, double y0, double x1, double y1);

// ---------------------------------------------------------------------------
// Scene clipping from a raster + catalog
// ---------------------------------------------------------------------------

struct ClipResult {
  std::vector<SceneRecord> scenes;
  std::size_t discarded_partial = 0;  // scenes dropped for boundary objects
  bool budget_exhausted = false;
};

// Uniform random scene origins; a scene containing any boundary-straddling
// catalog object is discarded and resampled. Catalog coordinates must be
// metric or pixel; degree catalogs are not projected here.
ClipResult clip_scenes(const GrayImage& raster, const Catalog& catalog, std::size_t scene_size,
                       std::size_t samples, std::uint64_t seed,
                       const std::string& class_label = "crater");

// ---------------------------------------------------------------------------
// Dataset on disk: one PNG per scene + a JSONL manifest
// ---------------------------------------------------------------------------

// Writes <dir>/<id>.png per scene and <dir>/manifest.jsonl; returns the
// manifest path.
std::string save_dataset(const std::string& dir, const std::vector<SceneRecord>& scenes);
std::vector<SceneRecord> load_dataset(const std::string& manifest_path);

}  // namespace wsod
