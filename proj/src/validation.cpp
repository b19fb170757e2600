#include "hydrocorr/validation.hpp"

#include <cmath>

#include "hydrocorr/baselines.hpp"
#include "hydrocorr/error.hpp"

namespace hydrocorr {

BinaryMask dtm_water_mask(const Grid& dtm, double elevation_asl) {
  dtm.validate();
  BinaryMask mask;
  mask.values = Grid::filled(dtm.height, dtm.width, 0.0f);
  for (std::size_t i = 0; i < dtm.values.size(); ++i) {
    const float v = dtm.values[i];
    if (dtm.is_nodata(v) || !std::isfinite(v)) continue;
    mask.values.values[i] =
        (static_cast<double>(v) < elevation_asl) ? 1.0f : 0.0f;
  }
  return mask;
}

BinaryMask dtm_valid_mask(const Grid& dtm) {
  dtm.validate();
  BinaryMask valid;
  valid.values = Grid::filled(dtm.height, dtm.width, 1.0f);
  for (std::size_t i = 0; i < dtm.values.size(); ++i) {
    const float v = dtm.values[i];
    if (dtm.is_nodata(v) || !std::isfinite(v)) valid.values.values[i] = 0.0f;
  }
  return valid;
}

Grid mndwi(const Grid& green, const Grid& swir) {
  green.validate();
  swir.validate();
  if (green.height != swir.height || green.width != swir.width)
    throw InvalidInput("mndwi: band shapes differ");
  Grid out = Grid::filled(green.height, green.width, 0.0f);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double g = green.values[i];
    const double s = swir.values[i];
    if (g < 0.0 || s < 0.0)
      throw InvalidInput("mndwi: reflectances must be >= 0");
    out.values[i] =
        (g + s) == 0.0 ? 0.0f : static_cast<float>((g - s) / (g + s));
  }
  return out;
}

MndwiMaskResult mndwi_water_mask(const Grid& mndwi_grid,
                                 const BinaryMask* cloud_mask,
                                 std::optional<double> manual_threshold) {
  mndwi_grid.validate();
  for (float v : mndwi_grid.values)
    if (!mndwi_grid.is_nodata(v) && (v < -1.0f || v > 1.0f))
      throw InvalidInput("mndwi_water_mask: values must lie in [-1,1]");

  MndwiMaskResult result;
  result.threshold =
      manual_threshold ? *manual_threshold : otsu_threshold(mndwi_grid);

  result.water.values = Grid::filled(mndwi_grid.height, mndwi_grid.width, 0.0f);
  result.valid.values = Grid::filled(mndwi_grid.height, mndwi_grid.width, 1.0f);
  for (std::size_t i = 0; i < mndwi_grid.values.size(); ++i) {
    const float v = mndwi_grid.values[i];
    if (mndwi_grid.is_nodata(v) || !std::isfinite(v)) {
      result.valid.values.values[i] = 0.0f;
      continue;
    }
    // water sits on the high-MNDWI side
    result.water.values.values[i] =
        (static_cast<double>(v) >= result.threshold) ? 1.0f : 0.0f;
  }
  if (cloud_mask) {
    if (cloud_mask->height() != mndwi_grid.height ||
        cloud_mask->width() != mndwi_grid.width)
      throw InvalidInput("mndwi_water_mask: cloud mask shape differs");
    for (std::size_t i = 0; i < mndwi_grid.values.size(); ++i)
      if (cloud_mask->values.values[i] != 0.0f)
        result.valid.values.values[i] = 0.0f;
  }
  return result;
}

namespace {

struct Counts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0, valid = 0, total = 0;
};

Counts count_pair(const MaskPair& pair) {
  const auto& p = pair.predicted.values;
  const auto& r = pair.reference.values;
  const auto& v = pair.valid.values;
  if (p.height != r.height || p.width != r.width || p.height != v.height ||
      p.width != v.width)
    throw InvalidInput("mask pair shapes differ");
  Counts c;
  c.total = static_cast<std::int64_t>(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (v.values[i] == 0.0f) continue;
    ++c.valid;
    const bool pw = p.values[i] != 0.0f;
    const bool rw = r.values[i] != 0.0f;
    if (pw && rw)
      ++c.tp;
    else if (!pw && !rw)
      ++c.tn;
    else if (pw)
      ++c.fp;
    else
      ++c.fn;
  }
  return c;
}

double class_iou(std::int64_t inter, std::int64_t area_p, std::int64_t area_r) {
  const std::int64_t uni = area_p + area_r - inter;
  if (uni == 0) return 1.0;  // class absent from both masks
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

IouReport iou(const MaskPair& pair) {
  const Counts c = count_pair(pair);
  if (c.valid == 0) throw InvalidInput("iou: valid set is empty");
  IouReport rep;
  rep.iou_water = class_iou(c.tp, c.tp + c.fp, c.tp + c.fn);
  rep.iou_nonwater = class_iou(c.tn, c.tn + c.fn, c.tn + c.fp);
  rep.iou_mean = 0.5 * (rep.iou_water + rep.iou_nonwater);
  rep.valid_fraction =
      static_cast<double>(c.valid) / static_cast<double>(c.total);
  return rep;
}

Grid contingency_map(const MaskPair& pair) {
  const auto& p = pair.predicted.values;
  const auto& r = pair.reference.values;
  const auto& v = pair.valid.values;
  if (p.height != r.height || p.width != r.width || p.height != v.height ||
      p.width != v.width)
    throw InvalidInput("contingency_map: mask pair shapes differ");
  Grid out = Grid::filled(p.height, p.width, 0.0f);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (v.values[i] == 0.0f) continue;
    const bool pw = p.values[i] != 0.0f;
    const bool rw = r.values[i] != 0.0f;
    out.values[i] = pw ? (rw ? 1.0f : 3.0f) : (rw ? 4.0f : 2.0f);
  }
  return out;
}

std::vector<SweepRow> threshold_sweep(const std::vector<SoftMask>& soft_masks,
                                      const std::vector<ReferenceMask>& refs,
                                      const std::vector<double>& thresholds) {
  if (soft_masks.empty() || soft_masks.size() != refs.size())
    throw InvalidInput("threshold_sweep: aligned non-empty lists required");
  if (thresholds.empty())
    throw InvalidInput("threshold_sweep: empty threshold list");

  std::vector<SweepRow> table;
  for (double t : thresholds) {
    SweepRow row;
    row.threshold = t;
    for (std::size_t i = 0; i < soft_masks.size(); ++i) {
      MaskPair pair{harden(soft_masks[i], t), refs[i].reference,
                    refs[i].valid};
      bool any_valid = false;
      for (float v : pair.valid.values.values)
        if (v != 0.0f) {
          any_valid = true;
          break;
        }
      if (!any_valid) continue;  // skipped, not zero-filled
      const IouReport rep = iou(pair);
      row.iou_water += rep.iou_water;
      row.iou_nonwater += rep.iou_nonwater;
      row.valid_fraction += rep.valid_fraction;
      ++row.dates_scored;
    }
    if (row.dates_scored > 0) {
      row.iou_water /= row.dates_scored;
      row.iou_nonwater /= row.dates_scored;
      row.valid_fraction /= row.dates_scored;
      row.iou_mean = 0.5 * (row.iou_water + row.iou_nonwater);
    }
    table.push_back(row);
  }
  return table;
}

}  // namespace hydrocorr
