#include "wsod/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "wsod/common.hpp"
#include "wsod/rng.hpp"

namespace wsod {

namespace {

// Two box-blur passes, radius 1; enough to give the noise spatial structure.
void smooth(std::vector<double>& img, std::size_t size) {
  std::vector<double> tmp(img.size());
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        double acc = 0.0;
        int n = 0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const long rr = (long)r + dr, cc = (long)c + dc;
            if (rr < 0 || cc < 0 || rr >= (long)size || cc >= (long)size) continue;
            acc += img[rr * size + cc];
            ++n;
          }
        }
        tmp[r * size + c] = acc / n;
      }
    }
    img.swap(tmp);
  }
}

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

SceneRecord generate_synthetic_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (spec.radius_min <= 0.0 || spec.radius_max < spec.radius_min) {
    throw std::invalid_argument("SceneSpec: bad radius range");
  }
  if (spec.count_max < spec.count_min) throw std::invalid_argument("SceneSpec: bad count range");
  const double margin = spec.radius_max + 1.0;
  if (2.0 * margin >= static_cast<double>(spec.size)) {
    throw std::invalid_argument("SceneSpec: radius range does not fit the scene with margin");
  }

  Rng rng(seed);
  const std::size_t S = spec.size;

  // Background: mid-gray noise field.
  std::vector<double> canvas(S * S);
  const double base = 120.0;
  for (double& v : canvas) v = base + rng.uniform(-1.0, 1.0) * spec.noise * 255.0;
  smooth(canvas, S);

  const std::size_t count =
      static_cast<std::size_t>(rng.uniform_int((int)spec.count_min, (int)spec.count_max));

  struct Disk {
    double cx, cy, r;
  };
  std::vector<Disk> disks;
  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      Disk d;
      d.r = rng.uniform(spec.radius_min, spec.radius_max);
      d.cx = rng.uniform(d.r + 1.0, (double)S - d.r - 1.0);
      d.cy = rng.uniform(d.r + 1.0, (double)S - d.r - 1.0);
      bool clear = true;
      for (const Disk& other : disks) {
        const double dist = std::hypot(d.cx - other.cx, d.cy - other.cy);
        if (dist < d.r + other.r + 2.0) {
          clear = false;
          break;
        }
      }
      if (clear) {
        disks.push_back(d);
        placed = true;
      }
    }
    if (!placed) {
      throw DataError("generate_synthetic_scene: could not place disk " + std::to_string(i + 1) +
                      " of " + std::to_string(count) + " (seed " + std::to_string(seed) + ")");
    }
  }

  SceneRecord scene;
  scene.count = disks.size();
  for (const Disk& d : disks) {
    const double ring = std::max(1.5, d.r * 0.3);
    const double rim_level = 225.0 + rng.uniform(-10.0, 10.0);
    const double bowl_level = 45.0 + rng.uniform(-10.0, 10.0);
    const long lo_r = (long)std::floor(d.cy - d.r - 1.0), hi_r = (long)std::ceil(d.cy + d.r + 1.0);
    const long lo_c = (long)std::floor(d.cx - d.r - 1.0), hi_c = (long)std::ceil(d.cx + d.r + 1.0);
    for (long r = std::max(0L, lo_r); r <= std::min((long)S - 1, hi_r); ++r) {
      for (long c = std::max(0L, lo_c); c <= std::min((long)S - 1, hi_c); ++c) {
        const double dist = std::hypot((double)c + 0.5 - d.cx, (double)r + 0.5 - d.cy);
        if (dist > d.r) continue;
        const double inner = d.r - ring;
        double level;
        if (dist >= inner) {
          level = rim_level;
        } else {
          // bowl brightens slightly toward the rim
          level = bowl_level + (rim_level - bowl_level) * 0.25 * (dist / std::max(inner, 1e-9));
        }
        // soften the outer edge over the last half pixel
        const double edge = std::clamp((d.r - dist) / 0.5, 0.0, 1.0);
        double& px = canvas[r * S + c];
        px = px * (1.0 - edge) + level * edge;
      }
    }
    scene.gt_boxes.push_back(BBox{d.cx, d.cy, 2.0 * d.r, 2.0 * d.r, BoxSpace::Image});
  }

  scene.image.width = S;
  scene.image.height = S;
  scene.image.pixels.resize(S * S);
  for (std::size_t i = 0; i < canvas.size(); ++i) scene.image.pixels[i] = clamp_u8(canvas[i]);
  if (scene.count > 0) scene.classes.push_back(spec.class_label);
  return scene;
}

// ---------------------------------------------------------------------------
// Catalog CSV
// ---------------------------------------------------------------------------

namespace {
std::string units_to_string(CatalogUnits u) {
  switch (u) {
    case CatalogUnits::Meters: return "meters";
    case CatalogUnits::Degrees: return "degrees";
    case CatalogUnits::Pixels: return "pixels";
  }
  return "?";
}

CatalogUnits units_from_string(const std::string& s) {
  if (s == "meters") return CatalogUnits::Meters;
  if (s == "degrees") return CatalogUnits::Degrees;
  if (s == "pixels") return CatalogUnits::Pixels;
  throw DataError("catalog: unknown units '" + s + "' (meters|degrees|pixels)");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}
}  // namespace

Catalog ingest_catalog(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("catalog: cannot open " + path);

  Catalog cat;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("units:");
      if (pos != std::string::npos) {
        std::string u = line.substr(pos + 6);
        u.erase(0, u.find_first_not_of(" \t"));
        u.erase(u.find_last_not_of(" \t") + 1);
        cat.units = units_from_string(u);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "id,x,y,diameter_km") {
        throw DataError("catalog: expected header 'id,x,y,diameter_km', got '" + line + "' at line " +
                        std::to_string(line_no));
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 4) {
      cat.rejected.emplace_back(line_no, "expected 4 columns, got " + std::to_string(fields.size()));
      continue;
    }
    CatalogEntry e;
    e.id = fields[0];
    try {
      e.x = std::stod(fields[1]);
      e.y = std::stod(fields[2]);
      e.diameter_km = std::stod(fields[3]);
    } catch (const std::exception&) {
      cat.rejected.emplace_back(line_no, "non-numeric coordinate or diameter");
      continue;
    }
    if (!(e.diameter_km > 0.0)) {
      cat.rejected.emplace_back(line_no, "non-positive diameter " + fields[3]);
      continue;
    }
    cat.entries.push_back(std::move(e));
  }
  if (!header_seen) throw DataError("catalog: missing header in " + path);
  for (const auto& [ln, why] : cat.rejected) {
    std::cerr << "[wsod] catalog " << path << ": rejected line " << ln << ": " << why << "\n";
  }
  return cat;
}

void write_catalog(const std::string& path, const Catalog& catalog) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("catalog: cannot open for writing: " + path);
  os << "# units: " << units_to_string(catalog.units) << "\n";
  os << "id,x,y,diameter_km\n";
  os.precision(17);
  for (const auto& e : catalog.entries) {
    os << e.id << "," << e.x << "," << e.y << "," << e.diameter_km << "\n";
  }
}

// ---------------------------------------------------------------------------
// Spatial index
// ---------------------------------------------------------------------------

SpatialIndex::SpatialIndex(std::vector<Circle> circles) : circles_(std::move(circles)) {
  if (circles_.empty()) {
    cols_ = rows_ = 1;
    buckets_.resize(1);
    return;
  }
  double max_d = 1.0;
  double min_x = circles_[0].cx, max_x = circles_[0].cx;
  double min_y = circles_[0].cy, max_y = circles_[0].cy;
  for (const Circle& c : circles_) {
    max_d = std::max(max_d, 2.0 * c.radius);
    min_x = std::min(min_x, c.cx - c.radius);
    max_x = std::max(max_x, c.cx + c.radius);
    min_y = std::min(min_y, c.cy - c.radius);
    max_y = std::max(max_y, c.cy + c.radius);
  }
  cell_ = max_d;  // bucket edge = largest object diameter
  min_x_ = min_x;
  min_y_ = min_y;
  cols_ = static_cast<std::size_t>((max_x - min_x) / cell_) + 1;
  rows_ = static_cast<std::size_t>((max_y - min_y) / cell_) + 1;
  buckets_.assign(cols_ * rows_, {});
  for (std::size_t i = 0; i < circles_.size(); ++i) {
    const Circle& c = circles_[i];
    const auto c0 = static_cast<std::size_t>((c.cx - c.radius - min_x_) / cell_);
    const auto c1 = static_cast<std::size_t>((c.cx + c.radius - min_x_) / cell_);
    const auto r0 = static_cast<std::size_t>((c.cy - c.radius - min_y_) / cell_);
    const auto r1 = static_cast<std::size_t>((c.cy + c.radius - min_y_) / cell_);
    for (std::size_t r = r0; r <= r1 && r < rows_; ++r) {
      for (std::size_t col = c0; col <= c1 && col < cols_; ++col) {
        buckets_[r * cols_ + col].push_back(i);
      }
    }
  }
}

bool circle_intersects_window(const Circle& c, double x0, double y0, double x1, double y1) {
  const double nx = std::clamp(c.cx, x0, x1);
  const double ny = std::clamp(c.cy, y0, y1);
  const double dx = c.cx - nx, dy = c.cy - ny;
  return dx * dx + dy * dy <= c.radius * c.radius;
}

bool circle_inside_window(const Circle& c, double x0, double y0, double x1, double y1) {
  return c.cx - c.radius >= x0 && c.cx + c.radius <= x1 && c.cy - c.radius >= y0 &&
         c.cy + c.radius <= y1;
}

std::vector<std::size_t> SpatialIndex::query(double x0, double y0, double x1, double y1) const {
  if (circles_.empty() || x1 <= x0 || y1 <= y0) return {};
  const auto clamp_col = [&](double x) {
    return std::clamp<long>(static_cast<long>(std::floor((x - min_x_) / cell_)), 0, (long)cols_ - 1);
  };
  const auto clamp_row = [&](double y) {
    return std::clamp<long>(static_cast<long>(std::floor((y - min_y_) / cell_)), 0, (long)rows_ - 1);
  };
  const long c0 = clamp_col(x0), c1 = clamp_col(x1);
  const long r0 = clamp_row(y0), r1 = clamp_row(y1);
  std::vector<std::size_t> hits;
  for (long r = r0; r <= r1; ++r) {
    for (long c = c0; c <= c1; ++c) {
      for (std::size_t i : buckets_[r * (long)cols_ + c]) {
        if (circle_intersects_window(circles_[i], x0, y0, x1, y1)) hits.push_back(i);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits;
}

// ---------------------------------------------------------------------------
// Clipping
// ---------------------------------------------------------------------------

ClipResult clip_scenes(const GrayImage& raster, const Catalog& catalog, std::size_t scene_size,
                       std::size_t samples, std::uint64_t seed, const std::string& class_label) {
  if (raster.width < scene_size || raster.height < scene_size) {
    throw std::invalid_argument("clip_scenes: raster smaller than scene size");
  }
  if (catalog.units == CatalogUnits::Degrees) {
    throw DataError(
        "clip_scenes: degree-unit catalogs need reprojection, which this tool does not do; "
        "provide meters or pixels");
  }
  // Metric catalogs: positions in meters, diameters in km. Pixel catalogs
  // carry both directly in pixels.
  const bool metric = catalog.units == CatalogUnits::Meters;
  const double pos_scale = metric ? 1.0 / kMetersPerPixel : 1.0;
  const double dia_scale = metric ? 1000.0 / kMetersPerPixel : 1.0;

  std::vector<Circle> circles;
  circles.reserve(catalog.entries.size());
  for (const auto& e : catalog.entries) {
    circles.push_back(
        Circle{e.x * pos_scale, e.y * pos_scale, e.diameter_km * dia_scale / 2.0});
  }
  SpatialIndex index(circles);

  Rng rng(seed);
  ClipResult result;
  const std::size_t budget = samples * 200 + 200;
  std::size_t attempts = 0;
  while (result.scenes.size() < samples && attempts < budget) {
    ++attempts;
    const std::size_t x0 =
        (std::size_t)rng.uniform_int(0, (int)(raster.width - scene_size));
    const std::size_t y0 =
        (std::size_t)rng.uniform_int(0, (int)(raster.height - scene_size));
    const double wx0 = (double)x0, wy0 = (double)y0;
    const double wx1 = wx0 + (double)scene_size, wy1 = wy0 + (double)scene_size;

    const auto hits = index.query(wx0, wy0, wx1, wy1);
    bool partial = false;
    std::vector<std::size_t> contained;
    for (std::size_t i : hits) {
      if (circle_inside_window(circles[i], wx0, wy0, wx1, wy1)) {
        contained.push_back(i);
      } else {
        partial = true;  // straddles the boundary
        break;
      }
    }
    if (partial) {
      ++result.discarded_partial;
      continue;
    }

    SceneRecord scene;
    scene.id = "clip_" + std::to_string(result.scenes.size());
    scene.image.width = scene_size;
    scene.image.height = scene_size;
    scene.image.pixels.resize(scene_size * scene_size);
    for (std::size_t r = 0; r < scene_size; ++r) {
      const std::uint8_t* src = raster.pixels.data() + (y0 + r) * raster.width + x0;
      std::copy(src, src + scene_size, scene.image.pixels.data() + r * scene_size);
    }
    for (std::size_t i : contained) {
      const Circle& c = circles[i];
      scene.gt_boxes.push_back(BBox{c.cx - wx0, c.cy - wy0, 2.0 * c.radius, 2.0 * c.radius,
                                    BoxSpace::Image});
    }
    scene.count = scene.gt_boxes.size();
    if (scene.count > 0) scene.classes.push_back(class_label);
    result.scenes.push_back(std::move(scene));
  }
  if (result.scenes.size() < samples) {
    result.budget_exhausted = true;
    std::cerr << "[wsod] clip_scenes: sampling budget exhausted, produced "
              << result.scenes.size() << "/" << samples << " scenes\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Dataset serialization
// ---------------------------------------------------------------------------

std::string save_dataset(const std::string& dir, const std::vector<SceneRecord>& scenes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("save_dataset: cannot create " + dir + ": " + ec.message());

  const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw DataError("save_dataset: cannot open " + manifest_path);

  for (const SceneRecord& scene : scenes) {
    const std::string png_name = scene.id + ".png";
    write_png((fs::path(dir) / png_name).string(), scene.image);

    nlohmann::json j;
    j["id"] = scene.id;
    j["image"] = png_name;
    j["count"] = scene.count;
    j["classes"] = scene.classes;
    nlohmann::json boxes = nlohmann::json::array();
    for (const BBox& b : scene.gt_boxes) {
      boxes.push_back({{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}});
    }
    j["gt_boxes"] = boxes;
    manifest << j.dump() << "\n";
  }
  if (!manifest) throw DataError("save_dataset: write failed for " + manifest_path);
  return manifest_path;
}

std::vector<SceneRecord> load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw DataError("load_dataset: cannot open " + manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();

  std::vector<SceneRecord> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("load_dataset: bad JSON at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    SceneRecord scene;
    try {
      scene.id = j.at("id").get<std::string>();
      scene.count = j.at("count").get<std::size_t>();
      scene.classes = j.at("classes").get<std::vector<std::string>>();
      for (const auto& b : j.at("gt_boxes")) {
        scene.gt_boxes.push_back(BBox{b.at("cx").get<double>(), b.at("cy").get<double>(),
                                      b.at("w").get<double>(), b.at("h").get<double>(),
                                      BoxSpace::Image});
      }
      scene.image = read_png_gray((dir / j.at("image").get<std::string>()).string());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("load_dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
    if (scene.count != scene.gt_boxes.size()) {
      throw DataError("load_dataset: count/gt mismatch for scene " + scene.id);
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace wsod
