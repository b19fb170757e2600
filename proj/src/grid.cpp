#include "hydrocorr/grid.hpp"

#include <cmath>

#include "hydrocorr/error.hpp"

namespace hydrocorr {

Grid Grid::filled(int h, int w, float v) {
  Grid g;
  g.height = h;
  g.width = w;
  g.values.assign(static_cast<size_t>(h) * w, v);
  return g;
}

void Grid::validate() const {
  if (height < 0 || width < 0)
    throw InvalidInput("grid with negative dimensions");
  if (values.size() != static_cast<size_t>(height) * width)
    throw InvalidInput("grid values length " + std::to_string(values.size()) +
                       " does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
}

const Grid& GridStack::band(const std::string& name) const {
  auto it = bands.find(name);
  if (it == bands.end()) throw InvalidInput("missing band '" + name + "'");
  return it->second;
}

int GridStack::height() const {
  if (bands.empty()) throw InvalidInput("stack has no bands");
  return bands.begin()->second.height;
}

int GridStack::width() const {
  if (bands.empty()) throw InvalidInput("stack has no bands");
  return bands.begin()->second.width;
}

void GridStack::validate(bool require_sar) const {
  if (bands.empty()) throw InvalidInput("stack has no bands");
  const int h = bands.begin()->second.height;
  const int w = bands.begin()->second.width;
  for (const auto& [name, g] : bands) {
    g.validate();
    if (g.height != h || g.width != w)
      throw InvalidInput("band '" + name + "' shape differs from other bands");
  }
  if (require_sar && (!has(kBandVV) || !has(kBandVH)))
    throw InvalidInput("SAR stack requires VV and VH bands");
}

void GaugeSeries::validate() const {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (!std::isfinite(entries[i].elevation_m))
      throw InvalidInput("non-finite gauge elevation at " +
                         entries[i].date.to_string());
    if (i > 0 && !(entries[i - 1].date < entries[i].date))
      throw InvalidInput("gauge dates not strictly increasing at " +
                         entries[i].date.to_string());
  }
  if (!std::isfinite(gauge_zero))
    throw InvalidInput("non-finite gauge zero");
}

double SceneSeries::elevation_of_scene(int scene_index) const {
  for (const auto& p : pairing)
    if (p.scene_index == scene_index)
      return gauge.entries[p.gauge_index].elevation_m;
  throw InvalidInput("scene " + std::to_string(scene_index) +
                     " has no gauge pairing");
}

std::vector<double> SceneSeries::elevations() const {
  std::vector<double> out;
  out.reserve(scenes.size());
  for (int i = 0; i < static_cast<int>(scenes.size()); ++i)
    out.push_back(elevation_of_scene(i));
  return out;
}

void SceneSeries::validate() const {
  gauge.validate();
  if (pairing.size() != scenes.size())
    throw InvalidInput("every scene must pair with exactly one gauge entry");
  int h = -1, w = -1;
  for (const auto& s : scenes) {
    s.validate();
    if (h < 0) {
      h = s.height();
      w = s.width();
    } else if (s.height() != h || s.width() != w) {
      throw InvalidInput("scenes do not share a common shape");
    }
  }
  for (const auto& p : pairing) {
    if (p.scene_index < 0 || p.scene_index >= static_cast<int>(scenes.size()))
      throw InvalidInput("pairing references unknown scene");
    if (p.gauge_index < 0 ||
        p.gauge_index >= static_cast<int>(gauge.entries.size()))
      throw InvalidInput("pairing references unknown gauge entry");
  }
}

BinaryMask BinaryMask::filled(int h, int w, float v) {
  return BinaryMask{Grid::filled(h, w, v)};
}

void BinaryMask::validate() const {
  values.validate();
  for (float v : values.values)
    if (v != 0.0f && v != 1.0f)
      throw InvalidInput("binary mask contains a value other than 0/1");
}

}  // namespace hydrocorr
