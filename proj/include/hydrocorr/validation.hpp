#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hydrocorr/fpgnn.hpp"
#include "hydrocorr/grid.hpp"

namespace hydrocorr {

struct MaskPair {
  BinaryMask predicted;
  BinaryMask reference;
  BinaryMask valid;  // 1 = scoreable pixel
};

struct IouReport {
  Date date;
  double iou_water = 0.0;
  double iou_nonwater = 0.0;
  double iou_mean = 0.0;
  double valid_fraction = 0.0;
};

// Water wherever dtm < elevation_asl (gauge reading + gauge zero). Nodata
// pixels are land here and excluded by dtm_valid_mask.
BinaryMask dtm_water_mask(const Grid& dtm, double elevation_asl);
BinaryMask dtm_valid_mask(const Grid& dtm);

// (green - swir) / (green + swir); 0 where both are 0.
Grid mndwi(const Grid& green, const Grid& swir);

struct MndwiMaskResult {
  BinaryMask water;
  BinaryMask valid;
  double threshold = 0.0;
};
// Water = mndwi >= threshold; per-image Otsu unless a manual threshold is
// given (the fallback for non-bimodal histograms). valid = NOT cloud.
MndwiMaskResult mndwi_water_mask(const Grid& mndwi_grid,
                                 const BinaryMask* cloud_mask,
                                 std::optional<double> manual_threshold);

// Per-class intersection over union on valid pixels; a class absent from
// both masks scores 1. Throws InvalidInput when the valid set is empty.
IouReport iou(const MaskPair& pair);

// Codes: 1=TP, 2=TN, 3=FP, 4=FN, 0=invalid (water is the positive class).
Grid contingency_map(const MaskPair& pair);

// Indexed-color PNG preview of a contingency map (blue/gray/green/red for
// TP/TN/FP/FN, black for invalid).
void write_contingency_png(const Grid& contingency, const std::string& path);

struct ReferenceMask {
  BinaryMask reference;
  BinaryMask valid;
};

struct SweepRow {
  double threshold = 0.0;
  double iou_water = 0.0;     // mean over scored dates
  double iou_nonwater = 0.0;
  double iou_mean = 0.0;
  double valid_fraction = 0.0;
  int dates_scored = 0;       // dates with an empty valid set are skipped
};

std::vector<SweepRow> threshold_sweep(const std::vector<SoftMask>& soft_masks,
                                      const std::vector<ReferenceMask>& refs,
                                      const std::vector<double>& thresholds);

}  // namespace hydrocorr
