#pragma once

#include <string>
#include <vector>

#include "hydrocorr/grid.hpp"

namespace hydrocorr {

// GridStack file format: `<stem>.json` header + `<stem>.bin` payload of
// concatenated row-major little-endian float32 planes, one per band, in the
// order listed in the header (bands are written in name order).
//
// Header fields: {height, width, bands:[{name, offset_bytes}], date,
// crs_note, nodata}.

// `path` may be the .json header, the .bin payload, or the bare stem.
GridStack read_gridstack(const std::string& path);
void write_gridstack(const GridStack& stack, const std::string& path);

// CSV with header `date,elevation_m`, ISO-8601 dates. Rows may be unordered;
// the result is sorted. Duplicate dates and non-finite elevations are errors.
GaugeSeries read_gauge_csv(const std::string& path, double gauge_zero = 0.0);
void write_gauge_csv(const GaugeSeries& gauge, const std::string& path);

// Matches each scene to the nearest-in-time gauge entry within max_gap_days
// (ties toward the earlier gauge date). Unmatched scenes are dropped and, if
// `dropped` is given, reported there. Throws InvalidInput when nothing pairs.
SceneSeries pair_scenes(const std::vector<GridStack>& scenes,
                        const GaugeSeries& gauge, int max_gap_days,
                        std::vector<Date>* dropped = nullptr);

// 10*log10(v) per pixel; nodata passes through; nonpositive values without a
// nodata flag are an error.
Grid to_db(const Grid& grid);
// Inverse: 10^(v/10).
Grid from_db(const Grid& grid);

}  // namespace hydrocorr
