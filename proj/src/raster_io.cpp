#include "hydrocorr/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hydrocorr/error.hpp"

namespace hydrocorr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string stem_of(const std::string& path) {
  std::string s = path;
  if (s.size() > 5 && s.ends_with(".json")) return s.substr(0, s.size() - 5);
  if (s.size() > 4 && s.ends_with(".bin")) return s.substr(0, s.size() - 4);
  return s;
}

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return buf;
}

void write_all_bytes(const std::string& path,
                     const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

void append_le_f32(std::vector<std::uint8_t>& out, const float* vals,
                   std::size_t n) {
  const std::size_t base = out.size();
  out.resize(base + n * 4);
  std::memcpy(out.data() + base, vals, n * 4);
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i) {
      std::swap(out[base + 4 * i + 0], out[base + 4 * i + 3]);
      std::swap(out[base + 4 * i + 1], out[base + 4 * i + 2]);
    }
  }
}

void read_le_f32(const std::uint8_t* src, float* vals, std::size_t n) {
  std::memcpy(vals, src, n * 4);
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<std::uint8_t*>(vals);
    for (std::size_t i = 0; i < n; ++i) {
      std::swap(b[4 * i + 0], b[4 * i + 3]);
      std::swap(b[4 * i + 1], b[4 * i + 2]);
    }
  }
}

}  // namespace

GridStack read_gridstack(const std::string& path) {
  const std::string stem = stem_of(path);
  json header;
  try {
    std::ifstream in(stem + ".json");
    if (!in) throw IoError("cannot open " + stem + ".json");
    header = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed gridstack header " + stem + ".json: " +
                       e.what());
  }

  GridStack stack;
  std::vector<std::pair<std::string, std::size_t>> layout;
  try {
    const int h = header.at("height").get<int>();
    const int w = header.at("width").get<int>();
    if (h <= 0 || w <= 0)
      throw InvalidInput("gridstack header has nonpositive dimensions");
    stack.date = Date::parse(header.at("date").get<std::string>());
    stack.crs_note = header.value("crs_note", std::string{});
    std::optional<float> nodata;
    if (header.contains("nodata") && !header["nodata"].is_null())
      nodata = header["nodata"].get<float>();
    if (!header.at("bands").is_array() || header["bands"].empty())
      throw InvalidInput("gridstack header declares no bands");
    for (const auto& b : header["bands"]) {
      const auto name = b.at("name").get<std::string>();
      const auto off = b.at("offset_bytes").get<std::size_t>();
      if (stack.bands.count(name))
        throw InvalidInput("duplicate band name '" + name + "' in " + stem);
      Grid g;
      g.height = h;
      g.width = w;
      g.nodata = nodata;
      stack.bands.emplace(name, std::move(g));
      layout.emplace_back(name, off);
    }
  } catch (const json::exception& e) {
    throw InvalidInput("malformed gridstack header " + stem + ".json: " +
                       e.what());
  }

  const auto payload = read_all_bytes(stem + ".bin");
  const std::size_t plane =
      static_cast<std::size_t>(stack.height()) * stack.width() * 4;
  if (payload.size() != plane * layout.size())
    throw InvalidInput("payload length " + std::to_string(payload.size()) +
                       " does not match " + std::to_string(layout.size()) +
                       " band(s) of " + std::to_string(plane) + " bytes in " +
                       stem + ".bin");
  for (const auto& [name, off] : layout) {
    if (off % 4 != 0 || off + plane > payload.size())
      throw InvalidInput("band '" + name + "' offset out of range in " + stem);
    Grid& g = stack.bands.at(name);
    g.values.resize(plane / 4);
    read_le_f32(payload.data() + off, g.values.data(), g.values.size());
  }
  return stack;
}

void write_gridstack(const GridStack& stack, const std::string& path) {
  stack.validate();
  const std::string stem = stem_of(path);

  json header;
  header["height"] = stack.height();
  header["width"] = stack.width();
  header["date"] = stack.date.to_string();
  header["crs_note"] = stack.crs_note;
  const auto& first = stack.bands.begin()->second;
  if (first.nodata)
    header["nodata"] = *first.nodata;
  else
    header["nodata"] = nullptr;

  std::vector<std::uint8_t> payload;
  json bands = json::array();
  std::size_t offset = 0;
  for (const auto& [name, g] : stack.bands) {  // map order: sorted by name
    bands.push_back({{"name", name}, {"offset_bytes", offset}});
    append_le_f32(payload, g.values.data(), g.values.size());
    offset += g.values.size() * 4;
  }
  header["bands"] = std::move(bands);

  std::ofstream out(stem + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + stem + ".json");
  out << header.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + stem + ".json");
  write_all_bytes(stem + ".bin", payload);
}

GaugeSeries read_gauge_csv(const std::string& path, double gauge_zero) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty gauge CSV " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,elevation_m")
    throw InvalidInput("gauge CSV must start with header 'date,elevation_m'");

  GaugeSeries gauge;
  gauge.gauge_zero = gauge_zero;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw InvalidInput("gauge CSV line " + std::to_string(lineno) +
                         ": missing comma");
    GaugeEntry e;
    e.date = Date::parse(line.substr(0, comma));
    try {
      std::size_t used = 0;
      e.elevation_m = std::stod(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InvalidInput("gauge CSV line " + std::to_string(lineno) +
                         ": unparsable elevation");
    }
    if (!std::isfinite(e.elevation_m))
      throw InvalidInput("gauge CSV line " + std::to_string(lineno) +
                         ": non-finite elevation");
    gauge.entries.push_back(e);
  }
  std::sort(gauge.entries.begin(), gauge.entries.end(),
            [](const GaugeEntry& a, const GaugeEntry& b) {
              return a.date < b.date;
            });
  for (std::size_t i = 1; i < gauge.entries.size(); ++i)
    if (gauge.entries[i - 1].date == gauge.entries[i].date)
      throw InvalidInput("duplicate gauge date " +
                         gauge.entries[i].date.to_string());
  gauge.validate();
  return gauge;
}

void write_gauge_csv(const GaugeSeries& gauge, const std::string& path) {
  gauge.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "date,elevation_m\n";
  for (const auto& e : gauge.entries) {
    std::ostringstream row;
    row.precision(10);
    row << e.date.to_string() << "," << e.elevation_m << "\n";
    out << row.str();
  }
  if (!out) throw IoError("write failed for " + path);
}

SceneSeries pair_scenes(const std::vector<GridStack>& scenes,
                        const GaugeSeries& gauge, int max_gap_days,
                        std::vector<Date>* dropped) {
  if (scenes.empty()) throw InvalidInput("pair_scenes: no scenes");
  gauge.validate();

  SceneSeries series;
  series.gauge = gauge;
  for (const auto& s : scenes) {
    int best = -1;
    int best_gap = max_gap_days + 1;
    for (int gi = 0; gi < static_cast<int>(gauge.entries.size()); ++gi) {
      const int gap = std::abs(days_between(s.date, gauge.entries[gi].date));
      // strict < keeps the earlier gauge date on ties
      if (gap < best_gap) {
        best_gap = gap;
        best = gi;
      }
    }
    if (best < 0) {
      if (dropped) dropped->push_back(s.date);
      continue;
    }
    series.pairing.push_back(
        {static_cast<int>(series.scenes.size()), best});
    series.scenes.push_back(s);
  }
  if (series.scenes.empty())
    throw InvalidInput("pair_scenes: no scene matched a gauge entry within " +
                       std::to_string(max_gap_days) + " day(s)");
  series.validate();
  return series;
}

Grid to_db(const Grid& grid) {
  grid.validate();
  Grid out = grid;
  for (auto& v : out.values) {
    if (grid.is_nodata(v)) continue;
    if (!(v > 0.0f))
      throw InvalidInput("to_db: nonpositive value " + std::to_string(v));
    v = static_cast<float>(10.0 * std::log10(static_cast<double>(v)));
  }
  return out;
}

Grid from_db(const Grid& grid) {
  grid.validate();
  Grid out = grid;
  for (auto& v : out.values) {
    if (grid.is_nodata(v)) continue;
    v = static_cast<float>(std::pow(10.0, static_cast<double>(v) / 10.0));
  }
  return out;
}

}  // namespace hydrocorr
