#include "hydrocorr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "hydrocorr/error.hpp"
#include "hydrocorr/rng.hpp"

namespace hydrocorr {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

double relief_of(const SiteSpec& spec, int row, int col) {
  const double center = (spec.width - 1) / 2.0;
  const double off = std::abs(col - center) - spec.river_half_width;
  // channel bed sits below gauge zero so the river carries water at stage 0
  if (off <= 0.0) return -spec.channel_depth + spec.along_tilt * row;
  double relief = 0.0;
  switch (spec.valley_shape) {
    case ValleyShape::V: relief = spec.bank_slope * off; break;
    case ValleyShape::U: relief = spec.bank_slope * off * off / 8.0; break;
  }
  return relief + spec.along_tilt * row;
}

// Multiplicative speckle with unit mean: Gamma(L, 1/L).
double speckle(Rng& rng, int looks) {
  return rng.gamma(static_cast<double>(looks)) / static_cast<double>(looks);
}

enum BandSalt { kSaltVV = 1, kSaltVH = 2, kSaltOptical = 3 };

// marker value inside confounder class-mean maps
constexpr double kBareField = 1e9;

Grid render_sar_band(const std::vector<double>& db_mean_map, int h, int w,
                     int looks, Rng rng) {
  Grid g = Grid::filled(h, w, 0.0f);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double power = std::pow(10.0, db_mean_map[i] / 10.0);
    g.values[i] = static_cast<float>(power * speckle(rng, looks));
  }
  return g;
}

}  // namespace

void SiteSpec::validate() const {
  if (height < 16 || width < 16)
    throw InvalidInput("site spec: height and width must be >= 16");
  if (!(water_db_mean < land_db_mean))
    throw InvalidInput(
        "site spec: water_db_mean must be below land_db_mean (water is the "
        "darker class)");
  if (river_half_width < 2)
    throw InvalidInput("site spec: river half-width must be >= 2 pixels");
  if (n_dates < 2) throw InvalidInput("site spec: n_dates must be >= 2");
  if (bank_slope <= 0.0) throw InvalidInput("site spec: bank_slope must be > 0");
  if (channel_depth <= 0.0)
    throw InvalidInput("site spec: channel_depth must be > 0");
  if (speckle_looks < 1)
    throw InvalidInput("site spec: speckle_looks must be >= 1");
  if (seasonal_amplitude < 0.0)
    throw InvalidInput("site spec: seasonal_amplitude must be >= 0");
  if (cadence_days < 1)
    throw InvalidInput("site spec: cadence_days must be >= 1");
  if (!(optical_contrast > 0.0 && optical_contrast <= 1.0))
    throw InvalidInput("site spec: optical_contrast must lie in (0,1]");
  for (const auto& s : flood_spikes)
    if (s.date_index < 0 || s.date_index >= n_dates)
      throw InvalidInput("site spec: flood spike outside the date range");
}

std::string SiteSpec::to_json() const {
  json j;
  j["height"] = height;
  j["width"] = width;
  j["valley_shape"] = valley_shape == ValleyShape::V ? "V" : "U";
  j["bank_slope"] = bank_slope;
  j["river_half_width"] = river_half_width;
  j["channel_depth"] = channel_depth;
  j["along_tilt"] = along_tilt;
  j["gauge_zero"] = gauge_zero;
  j["n_dates"] = n_dates;
  j["seasonal_amplitude"] = seasonal_amplitude;
  json spikes = json::array();
  for (const auto& s : flood_spikes)
    spikes.push_back({{"date_index", s.date_index},
                      {"magnitude_m", s.magnitude_m}});
  j["flood_spikes"] = std::move(spikes);
  j["speckle_looks"] = speckle_looks;
  j["water_db_mean"] = water_db_mean;
  j["land_db_mean"] = land_db_mean;
  j["vh_offset_db"] = vh_offset_db;
  j["optical_contrast"] = optical_contrast;
  j["optical_noise"] = optical_noise;
  j["start_date"] = start_date.to_string();
  j["cadence_days"] = cadence_days;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

SiteSpec SiteSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput("site spec: malformed JSON: " + std::string(e.what()));
  }
  SiteSpec spec;
  try {
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    if (j.contains("valley_shape")) {
      const auto s = j["valley_shape"].get<std::string>();
      if (s == "V")
        spec.valley_shape = ValleyShape::V;
      else if (s == "U")
        spec.valley_shape = ValleyShape::U;
      else
        throw InvalidInput("site spec: valley_shape must be 'V' or 'U'");
    }
    spec.bank_slope = j.value("bank_slope", spec.bank_slope);
    spec.river_half_width = j.value("river_half_width", spec.river_half_width);
    spec.channel_depth = j.value("channel_depth", spec.channel_depth);
    spec.along_tilt = j.value("along_tilt", spec.along_tilt);
    spec.gauge_zero = j.value("gauge_zero", spec.gauge_zero);
    spec.n_dates = j.value("n_dates", spec.n_dates);
    spec.seasonal_amplitude =
        j.value("seasonal_amplitude", spec.seasonal_amplitude);
    if (j.contains("flood_spikes"))
      for (const auto& s : j["flood_spikes"])
        spec.flood_spikes.push_back({s.at("date_index").get<int>(),
                                     s.at("magnitude_m").get<double>()});
    spec.speckle_looks = j.value("speckle_looks", spec.speckle_looks);
    spec.water_db_mean = j.value("water_db_mean", spec.water_db_mean);
    spec.land_db_mean = j.value("land_db_mean", spec.land_db_mean);
    spec.vh_offset_db = j.value("vh_offset_db", spec.vh_offset_db);
    spec.optical_contrast = j.value("optical_contrast", spec.optical_contrast);
    spec.optical_noise = j.value("optical_noise", spec.optical_noise);
    if (j.contains("start_date"))
      spec.start_date = Date::parse(j["start_date"].get<std::string>());
    spec.cadence_days = j.value("cadence_days", spec.cadence_days);
    spec.seed = j.value("seed", spec.seed);
  } catch (const json::exception& e) {
    throw InvalidInput("site spec: " + std::string(e.what()));
  }
  spec.validate();
  return spec;
}

std::vector<double> elevation_series(const SiteSpec& spec) {
  std::vector<double> elev(spec.n_dates, 0.0);
  for (int i = 0; i < spec.n_dates; ++i)
    elev[i] = spec.seasonal_amplitude * 0.5 *
              (1.0 - std::cos(2.0 * kPi * i / (spec.n_dates - 1)));
  for (const auto& s : spec.flood_spikes)
    elev[s.date_index] += s.magnitude_m;
  return elev;
}

Site generate_site(const SiteSpec& spec) {
  spec.validate();
  const int h = spec.height, w = spec.width;
  Site site;
  site.spec = spec;

  site.dtm = Grid::filled(h, w, 0.0f);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      site.dtm.at(r, c) =
          static_cast<float>(spec.gauge_zero + relief_of(spec, r, c));

  const auto elev = elevation_series(spec);
  const Rng master(spec.seed);

  site.series.gauge.gauge_zero = spec.gauge_zero;
  for (int i = 0; i < spec.n_dates; ++i) {
    const Date date = spec.start_date + i * spec.cadence_days;
    site.series.gauge.entries.push_back({date, elev[i]});

    BinaryMask flood;
    flood.values = Grid::filled(h, w, 0.0f);
    std::vector<double> db_map(static_cast<std::size_t>(h) * w);
    for (std::size_t px = 0; px < db_map.size(); ++px) {
      const bool water =
          site.dtm.values[px] < spec.gauge_zero + elev[i];
      flood.values.values[px] = water ? 1.0f : 0.0f;
      db_map[px] = water ? spec.water_db_mean : spec.land_db_mean;
    }

    GridStack scene;
    scene.date = date;
    scene.crs_note = "synthetic valley site";
    scene.bands[kBandVV] = render_sar_band(
        db_map, h, w, spec.speckle_looks, master.fork(i * 16 + kSaltVV));
    std::vector<double> vh_map = db_map;
    for (auto& v : vh_map) v += spec.vh_offset_db;
    scene.bands[kBandVH] = render_sar_band(
        vh_map, h, w, spec.speckle_looks, master.fork(i * 16 + kSaltVH));

    Grid optical = Grid::filled(h, w, 0.0f);
    Rng orng = master.fork(i * 16 + kSaltOptical);
    for (std::size_t px = 0; px < db_map.size(); ++px) {
      const double base = flood.values.values[px] != 0.0f
                              ? spec.optical_contrast
                              : -spec.optical_contrast;
      const double v = base + spec.optical_noise * orng.normal();
      optical.values[px] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    scene.bands[kBandMNDWI] = std::move(optical);
    scene.bands[kBandRefWater] = std::move(flood.values);

    site.series.pairing.push_back({i, i});
    site.series.scenes.push_back(std::move(scene));
  }
  site.series.validate();
  return site;
}

ConfounderKind confounder_from_string(const std::string& name) {
  if (name == "wind_roughening") return ConfounderKind::wind_roughening;
  if (name == "ice_cover") return ConfounderKind::ice_cover;
  if (name == "bare_fields") return ConfounderKind::bare_fields;
  throw InvalidInput("unknown confounder kind '" + name + "'");
}

Site inject_confounders(const Site& site, ConfounderKind kind,
                        const std::vector<int>& dates, std::uint64_t seed) {
  const SiteSpec& spec = site.spec;
  const int h = spec.height, w = spec.width;
  for (int d : dates)
    if (d < 0 || d >= static_cast<int>(site.series.scenes.size()))
      throw InvalidInput("inject_confounders: date index out of range");

  Site out = site;
  if (dates.empty()) return out;

  // frozen extent for ice: the flood mask at the series' median elevation
  std::vector<double> elev = site.series.elevations();
  std::vector<double> sorted = elev;
  std::sort(sorted.begin(), sorted.end());
  const double median_elev = sorted[sorted.size() / 2];

  const Rng master(seed);
  for (int d : dates) {
    GridStack& scene = out.series.scenes[d];
    const Grid& ref = scene.band(kBandRefWater);

    std::vector<double> db_map(static_cast<std::size_t>(h) * w);
    switch (kind) {
      case ConfounderKind::wind_roughening: {
        const double roughened =
            spec.water_db_mean + 0.75 * (spec.land_db_mean - spec.water_db_mean);
        for (std::size_t px = 0; px < db_map.size(); ++px)
          db_map[px] =
              ref.values[px] != 0.0f ? roughened : spec.land_db_mean;
        break;
      }
      case ConfounderKind::ice_cover: {
        for (std::size_t px = 0; px < db_map.size(); ++px) {
          const bool frozen =
              site.dtm.values[px] < spec.gauge_zero + median_elev;
          db_map[px] = frozen ? spec.land_db_mean + 3.0 : spec.land_db_mean;
        }
        break;
      }
      case ConfounderKind::bare_fields: {
        for (std::size_t px = 0; px < db_map.size(); ++px)
          db_map[px] = ref.values[px] != 0.0f ? spec.water_db_mean
                                              : spec.land_db_mean;
        Rng prng = master.fork(d * 4 + 0);
        const int n_patches = std::max(4, h * w / 512);
        int placed = 0, attempts = 0;
        while (placed < n_patches && attempts < 200) {
          ++attempts;
          const int size = 6 + static_cast<int>(prng.below(7));  // 6..12 px
          const int r0 = static_cast<int>(prng.below(h - size));
          const int c0 = static_cast<int>(prng.below(w - size));
          bool clean = true;
          for (int r = r0; r < r0 + size && clean; ++r)
            for (int c = c0; c < c0 + size && clean; ++c) {
              if (ref.at(r, c) != 0.0f) clean = false;  // stay on land
              if (r < 8 && c < 8) clean = false;        // spare the dry patch
            }
          if (!clean) continue;
          // smooth bare soil: water-dark in VV, but without open water's
          // very low cross-pol return
          for (int r = r0; r < r0 + size; ++r)
            for (int c = c0; c < c0 + size; ++c)
              db_map[static_cast<std::size_t>(r) * w + c] = kBareField;
          ++placed;
        }
        break;
      }
    }

    std::vector<double> vv_map(db_map.size()), vh_map(db_map.size());
    for (std::size_t px = 0; px < db_map.size(); ++px) {
      if (db_map[px] == kBareField) {
        vv_map[px] = spec.water_db_mean + 4.0;
        vh_map[px] = spec.water_db_mean + spec.vh_offset_db + 8.0;
      } else {
        vv_map[px] = db_map[px];
        vh_map[px] = db_map[px] + spec.vh_offset_db;
      }
    }
    scene.bands[kBandVV] = render_sar_band(vv_map, h, w, spec.speckle_looks,
                                           master.fork(d * 4 + 1));
    scene.bands[kBandVH] = render_sar_band(vh_map, h, w, spec.speckle_looks,
                                           master.fork(d * 4 + 2));
  }
  return out;
}

}  // namespace hydrocorr
