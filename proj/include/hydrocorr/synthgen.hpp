#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydrocorr/grid.hpp"

namespace hydrocorr {

enum class ValleyShape { V, U };

struct FloodSpike {
  int date_index = 0;
  double magnitude_m = 0.0;
};

// Deterministic synthetic study site: a valley DTM, a seasonal gauge series,
// exact flood masks, speckled dual-pol backscatter, and an MNDWI-like
// optical band. Water area is monotone in elevation by construction (the
// flood mask is DTM thresholding).
struct SiteSpec {
  int height = 64;
  int width = 64;
  ValleyShape valley_shape = ValleyShape::V;
  double bank_slope = 0.27;    // metres of relief per pixel off the channel
  int river_half_width = 5;    // pixels; >= 2
  double channel_depth = 1.0;  // metres below gauge zero inside the channel
  double along_tilt = 0.0;     // metres per row of downstream tilt
  double gauge_zero = 100.0;   // metres above sea level
  int n_dates = 40;
  double seasonal_amplitude = 6.0;  // metres
  std::vector<FloodSpike> flood_spikes;
  int speckle_looks = 5;
  double water_db_mean = -20.0;
  double land_db_mean = -8.0;
  double vh_offset_db = -6.0;
  double optical_contrast = 0.45;
  double optical_noise = 0.08;
  Date start_date = Date{17897};  // 2019-01-01
  int cadence_days = 6;
  std::uint64_t seed = 1234;

  void validate() const;
  std::string to_json() const;
  static SiteSpec from_json(const std::string& text);
};

struct Site {
  SceneSeries series;  // bands VV, VH, MNDWI, REF_WATER per scene
  Grid dtm;
  SiteSpec spec;
};

Site generate_site(const SiteSpec& spec);

// Elevation series used by generate_site (exposed for tests).
std::vector<double> elevation_series(const SiteSpec& spec);

enum class ConfounderKind { wind_roughening, ice_cover, bare_fields };
ConfounderKind confounder_from_string(const std::string& name);

// Re-renders the SAR bands of the listed dates with a failure mode:
//   wind_roughening  water backscatter raised toward land level
//   ice_cover        a frozen extent (flood mask at the median elevation)
//                    rendered brighter than land; open water disappears
//   bare_fields      random land patches darkened toward water level
// REF_WATER and MNDWI are untouched.
Site inject_confounders(const Site& site, ConfounderKind kind,
                        const std::vector<int>& dates, std::uint64_t seed);

}  // namespace hydrocorr
