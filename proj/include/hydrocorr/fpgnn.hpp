#pragma once

#include <vector>

#include "hydrocorr/fpgnn_model.hpp"
#include "hydrocorr/grid.hpp"

namespace hydrocorr {

using FpgnnModel = ad::FpgnnModelT<float>;

struct SoftMask {
  Grid values;  // entries strictly in (0,1)
  Date source_date;
};

struct ForwardResult {
  SoftMask mask;
  double predicted_area = 0.0;
};

struct LossReport {
  int epoch = 0;
  double train_loss = 0.0;  // 1 - PCC, averaged over the epoch's batches
  double val_loss = 0.0;    // 1 - PCC on the held-out scenes
  double mask_range = 0.0;  // min over train scenes of per-scene max-min
  double reg_dense = 0.0;
  double reg_range = 0.0;
  double reg_clip = 0.0;
};

struct TrainResult {
  FpgnnModel model;        // best-validation-loss snapshot
  FpgnnModel final_model;  // state at the last epoch
  std::vector<LossReport> reports;
  std::vector<int> train_indices;
  std::vector<int> val_indices;
};

// 1 - PCC. Standalone evaluation: throws InvalidInput when either vector has
// zero variance (the training path instead guards the denominator with 1e-8).
double pearson_loss(const std::vector<double>& predicted,
                    const std::vector<double>& observed);

// Activity-regularizer terms evaluated on a batch of soft masks
// and their predicted areas (non-autodiff evaluation path).
struct RegularizerReport {
  double range_term = 0.0;  // batch mean of range_coeff/(max-min)
  double clip_term = 0.0;   // batch mean of clip_coeff * var(dry patch)
  double dense_term = 0.0;  // 1/(dense_scale * var(areas))
  double total = 0.0;
};
RegularizerReport activity_regularizers(const std::vector<Grid>& soft_masks,
                                        const std::vector<double>& areas,
                                        int dry_patch_row, int dry_patch_col,
                                        const TrainConfig& cfg);

// Equal-width elevation strata, seeded 80/20 shuffle inside each stratum.
void stratified_split_indices(const SceneSeries& series,
                              const TrainConfig& cfg, std::uint64_t seed,
                              std::vector<int>& train_out,
                              std::vector<int>& val_out);
std::pair<SceneSeries, SceneSeries> stratified_split(const SceneSeries& series,
                                                     const TrainConfig& cfg,
                                                     std::uint64_t seed);
SceneSeries subset_series(const SceneSeries& series,
                          const std::vector<int>& indices);

TrainResult train(const SceneSeries& series, const TrainConfig& cfg,
                  std::uint64_t seed);

ForwardResult fpgnn_forward(const FpgnnModel& model, const GridStack& stack);
SoftMask infer(const FpgnnModel& model, const GridStack& stack);
BinaryMask harden(const SoftMask& mask, double threshold);

// Prepared network input: VV/VH converted to dB, standardized with the given
// stats, nodata zeroed, edge-replicated to the next multiple of 8.
template <class S>
ad::Tensor<S> prepare_input(const GridStack& stack, const BandStats& vv_stats,
                            const BandStats& vh_stats);

BandStats compute_band_stats_db(const std::vector<const Grid*>& grids);

}  // namespace hydrocorr
