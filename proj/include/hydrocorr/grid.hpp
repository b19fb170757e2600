#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hydrocorr/dates.hpp"

namespace hydrocorr {

// Well-known band names.
inline constexpr const char* kBandVV = "VV";
inline constexpr const char* kBandVH = "VH";
inline constexpr const char* kBandDTM = "DTM";
inline constexpr const char* kBandMNDWI = "MNDWI";
inline constexpr const char* kBandCloud = "CLOUD";
inline constexpr const char* kBandRefWater = "REF_WATER";
inline constexpr const char* kBandContingency = "CONTINGENCY";

// Single-band 2-D float32 raster, row-major.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  std::optional<float> nodata;

  static Grid filled(int h, int w, float v);

  float& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
  float at(int r, int c) const {
    return values[static_cast<size_t>(r) * width + c];
  }
  std::size_t size() const { return values.size(); }
  bool is_nodata(float v) const { return nodata && v == *nodata; }

  void validate() const;  // throws InvalidInput on shape/length mismatch
};

// Named multi-band raster for one acquisition date. Bands are kept (and
// serialized) in name order so file round-trips are canonical.
struct GridStack {
  std::map<std::string, Grid> bands;
  Date date;
  std::string crs_note;

  bool has(const std::string& name) const { return bands.count(name) != 0; }
  const Grid& band(const std::string& name) const;  // throws if missing
  int height() const;
  int width() const;

  // All bands share one shape; `require_sar` additionally demands VV and VH.
  void validate(bool require_sar = false) const;
};

struct GaugeEntry {
  Date date;
  double elevation_m = 0.0;  // metres above gauge zero
};

struct GaugeSeries {
  std::vector<GaugeEntry> entries;  // strictly increasing dates
  double gauge_zero = 0.0;          // metres above sea level

  void validate() const;
};

struct ScenePairing {
  int scene_index = 0;
  int gauge_index = 0;
};

// Time-ordered scenes with their matched gauge observations.
struct SceneSeries {
  std::vector<GridStack> scenes;
  GaugeSeries gauge;
  std::vector<ScenePairing> pairing;  // one entry per scene

  double elevation_of_scene(int scene_index) const;
  std::vector<double> elevations() const;  // aligned with scenes

  void validate() const;
};

// 0/1 raster; 1 labels water.
struct BinaryMask {
  Grid values;

  static BinaryMask filled(int h, int w, float v);
  int height() const { return values.height; }
  int width() const { return values.width; }
  void validate() const;  // only 0/1 entries
};

}  // namespace hydrocorr
