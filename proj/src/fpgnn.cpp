#include "hydrocorr/fpgnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hydrocorr/error.hpp"
#include "hydrocorr/raster_io.hpp"
#include "hydrocorr/rng.hpp"

namespace hydrocorr {

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

void check_config(const TrainConfig& cfg, int height, int width) {
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
    throw InvalidInput("split_fraction must lie in (0,1)");
  if (!(cfg.batch_fraction > 0.0 && cfg.batch_fraction <= 1.0))
    throw InvalidInput("batch_fraction must lie in (0,1]");
  for (double t : cfg.threshold_grid())
    if (!(t > 0.0 && t < 1.0))
      throw InvalidInput("threshold grid must lie inside (0,1)");
  if (cfg.stratum_count < 1) throw InvalidInput("stratum_count must be >= 1");
  if (cfg.patience < 1) throw InvalidInput("patience must be >= 1");
  if (cfg.epoch_cap < 1) throw InvalidInput("epoch_cap must be >= 1");
  if (cfg.dry_patch_row < 0 || cfg.dry_patch_col < 0 ||
      cfg.dry_patch_row + kDryPatchSize > height ||
      cfg.dry_patch_col + kDryPatchSize > width)
    throw InvalidInput("dry_patch window does not fit inside the image");
}

}  // namespace

double pearson_loss(const std::vector<double>& predicted,
                    const std::vector<double>& observed) {
  const std::size_t n = predicted.size();
  if (n < 2 || observed.size() != n)
    throw InvalidInput("pearson_loss: need equal lengths n >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += predicted[i];
    my += observed[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = predicted[i] - mx;
    const double cy = observed[i] - my;
    sxx += cx * cx;
    syy += cy * cy;
    sxy += cx * cy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw InvalidInput("pearson_loss: degenerate variance");
  return 1.0 - sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

namespace {

double guarded_pearson(const std::vector<double>& predicted,
                       const std::vector<double>& observed) {
  const std::size_t n = predicted.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += predicted[i];
    my += observed[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = predicted[i] - mx;
    const double cy = observed[i] - my;
    sxx += cx * cx;
    syy += cy * cy;
    sxy += cx * cy;
  }
  return 1.0 - sxy / (std::sqrt(sxx + 1e-8) * std::sqrt(syy + 1e-8));
}

}  // namespace

RegularizerReport activity_regularizers(const std::vector<Grid>& soft_masks,
                                        const std::vector<double>& areas,
                                        int dry_patch_row, int dry_patch_col,
                                        const TrainConfig& cfg) {
  if (soft_masks.size() < 2 || soft_masks.size() != areas.size())
    throw InvalidInput("activity_regularizers: batch size >= 2 required");
  const int B = static_cast<int>(soft_masks.size());
  RegularizerReport rep;
  for (const auto& g : soft_masks) {
    g.validate();
    if (dry_patch_row + kDryPatchSize > g.height ||
        dry_patch_col + kDryPatchSize > g.width)
      throw InvalidInput("dry_patch window does not fit inside the mask");
    const auto [mn, mx] = std::minmax_element(g.values.begin(), g.values.end());
    const double range = static_cast<double>(*mx) - static_cast<double>(*mn);
    rep.range_term += (cfg.range_term / std::max(range, 1e-6)) / B;

    double mean = 0.0;
    for (int r = 0; r < kDryPatchSize; ++r)
      for (int c = 0; c < kDryPatchSize; ++c)
        mean += g.at(dry_patch_row + r, dry_patch_col + c);
    mean /= kDryPatchSize * kDryPatchSize;
    double var = 0.0;
    for (int r = 0; r < kDryPatchSize; ++r)
      for (int c = 0; c < kDryPatchSize; ++c) {
        const double d = g.at(dry_patch_row + r, dry_patch_col + c) - mean;
        var += d * d;
      }
    var /= kDryPatchSize * kDryPatchSize;
    rep.clip_term += cfg.clip_var_term * var / B;
  }

  double amean = std::accumulate(areas.begin(), areas.end(), 0.0) / B;
  double avar = 0.0;
  for (double a : areas) avar += (a - amean) * (a - amean);
  avar /= B;
  rep.dense_term = 1.0 / (cfg.dense_penalty_scale * std::max(avar, 1e-10));
  rep.total = rep.range_term + rep.clip_term + rep.dense_term;
  return rep;
}

void stratified_split_indices(const SceneSeries& series,
                              const TrainConfig& cfg, std::uint64_t seed,
                              std::vector<int>& train_out,
                              std::vector<int>& val_out) {
  const int n = static_cast<int>(series.scenes.size());
  if (n < 5) throw InvalidInput("stratified_split: series too short (< 5)");
  const auto elev = series.elevations();
  const auto [lo_it, hi_it] = std::minmax_element(elev.begin(), elev.end());
  const double lo = *lo_it, hi = *hi_it;

  const int strata = (hi - lo < 1e-12) ? 1 : cfg.stratum_count;
  std::vector<std::vector<int>> bins(strata);
  for (int i = 0; i < n; ++i) {
    int b = 0;
    if (strata > 1)
      b = std::min(strata - 1,
                   static_cast<int>((elev[i] - lo) / (hi - lo) * strata));
    bins[b].push_back(i);
  }

  Rng rng = Rng(seed).fork(7);
  train_out.clear();
  val_out.clear();
  const double test_fraction = 1.0 - cfg.split_fraction;
  for (auto& bin : bins) {
    if (bin.empty()) continue;
    rng.shuffle(bin.begin(), bin.end());
    int n_test = static_cast<int>(std::llround(test_fraction * bin.size()));
    if (n_test == 0 && bin.size() >= 5) n_test = 1;
    if (n_test >= static_cast<int>(bin.size()))
      n_test = static_cast<int>(bin.size()) - 1;
    for (std::size_t i = 0; i < bin.size(); ++i)
      (static_cast<int>(i) < n_test ? val_out : train_out).push_back(bin[i]);
  }
  std::sort(train_out.begin(), train_out.end());
  std::sort(val_out.begin(), val_out.end());
  if (train_out.size() < 2)
    throw InvalidInput("stratified_split: training partition too small");
}

SceneSeries subset_series(const SceneSeries& series,
                          const std::vector<int>& indices) {
  SceneSeries out;
  out.gauge = series.gauge;
  for (int idx : indices) {
    out.pairing.push_back({static_cast<int>(out.scenes.size()),
                           series.pairing[idx].gauge_index});
    out.scenes.push_back(series.scenes[idx]);
  }
  return out;
}

std::pair<SceneSeries, SceneSeries> stratified_split(const SceneSeries& series,
                                                     const TrainConfig& cfg,
                                                     std::uint64_t seed) {
  std::vector<int> train_idx, val_idx;
  stratified_split_indices(series, cfg, seed, train_idx, val_idx);
  return {subset_series(series, train_idx), subset_series(series, val_idx)};
}

BandStats compute_band_stats_db(const std::vector<const Grid*>& grids) {
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (const Grid* g : grids) {
    for (float v : g->values) {
      if (g->is_nodata(v)) continue;
      if (!(v > 0.0f))
        throw InvalidInput("band stats: nonpositive linear-power value");
      const double db = 10.0 * std::log10(static_cast<double>(v));
      sum += db;
      sum2 += db * db;
      ++count;
    }
  }
  if (count == 0) throw InvalidInput("band stats: no valid pixels");
  BandStats st;
  st.mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum2 / static_cast<double>(count) -
                                       st.mean * st.mean);
  st.stddev = std::sqrt(var);
  if (st.stddev < 1e-9) st.stddev = 1.0;
  return st;
}

template <class S>
ad::Tensor<S> prepare_input(const GridStack& stack, const BandStats& vv_stats,
                            const BandStats& vh_stats) {
  stack.validate(true);
  const int h = stack.height(), w = stack.width();
  const int hp = round_up(h, kPoolFactor), wp = round_up(w, kPoolFactor);

  std::vector<S> data(static_cast<std::size_t>(2) * hp * wp);
  const Grid* bands[2] = {&stack.band(kBandVV), &stack.band(kBandVH)};
  const BandStats* stats[2] = {&vv_stats, &vh_stats};
  std::size_t valid_count = 0;
  for (int b = 0; b < 2; ++b) {
    S* plane = data.data() + static_cast<std::size_t>(b) * hp * wp;
    for (int r = 0; r < hp; ++r) {
      const int sr = std::min(r, h - 1);  // edge replication
      for (int c = 0; c < wp; ++c) {
        const int sc = std::min(c, w - 1);
        const float v = bands[b]->at(sr, sc);
        double x = 0.0;
        if (!bands[b]->is_nodata(v)) {
          if (!(v > 0.0f))
            throw InvalidInput("prepare_input: nonpositive linear-power value");
          const double db = 10.0 * std::log10(static_cast<double>(v));
          x = (db - stats[b]->mean) / stats[b]->stddev;
          ++valid_count;
        }
        plane[static_cast<std::size_t>(r) * wp + c] = static_cast<S>(x);
      }
    }
  }
  if (valid_count == 0)
    throw InvalidInput("prepare_input: all pixels are nodata");
  return ad::Tensor<S>::constant({1, 2, hp, wp}, std::move(data));
}

template ad::Tensor<float> prepare_input<float>(const GridStack&,
                                                const BandStats&,
                                                const BandStats&);
template ad::Tensor<double> prepare_input<double>(const GridStack&,
                                                  const BandStats&,
                                                  const BandStats&);

TrainResult train(const SceneSeries& series, const TrainConfig& cfg,
                  std::uint64_t seed) {
  series.validate();
  if (series.scenes.empty()) throw InvalidInput("train: empty series");
  const int h = series.scenes[0].height(), w = series.scenes[0].width();
  if (h < 16 || w < 16)
    throw InvalidInput("train: spatial dims must be >= 16");
  check_config(cfg, h, w);

  const auto elev = series.elevations();
  const auto [lo, hi] = std::minmax_element(elev.begin(), elev.end());
  if (*hi - *lo < 1e-12)
    throw UnlearnableSeries(
        "train: gauge elevations are constant; the water area cannot "
        "correlate with elevation");

  TrainResult result;
  stratified_split_indices(series, cfg, seed, result.train_indices,
                           result.val_indices);

  std::vector<const Grid*> vv_grids, vh_grids;
  for (int idx : result.train_indices) {
    vv_grids.push_back(&series.scenes[idx].band(kBandVV));
    vh_grids.push_back(&series.scenes[idx].band(kBandVH));
  }
  const BandStats vv_stats = compute_band_stats_db(vv_grids);
  const BandStats vh_stats = compute_band_stats_db(vh_grids);

  std::vector<ad::Tensor<float>> prepared(series.scenes.size());
  for (std::size_t i = 0; i < series.scenes.size(); ++i)
    prepared[i] =
        prepare_input<float>(series.scenes[i], vv_stats, vh_stats);

  FpgnnModel model = FpgnnModel::init(seed);
  model.vv_stats = vv_stats;
  model.vh_stats = vh_stats;
  model.trained_height = round_up(h, kPoolFactor);
  model.trained_width = round_up(w, kPoolFactor);
  auto adam = ad::adam_init(model.parameters(), cfg.lr);

  Rng shuffle_rng = Rng(seed).fork(11);
  const int n_train = static_cast<int>(result.train_indices.size());
  const int batch_size =
      std::max(2, static_cast<int>(std::llround(cfg.batch_fraction * n_train)));

  double best_val = std::numeric_limits<double>::infinity();
  FpgnnModel best = model.clone_values();
  int epochs_since_improve = 0;
  int inverted_streak = 0;

  for (int epoch = 1; epoch <= cfg.epoch_cap; ++epoch) {
    std::vector<int> order = result.train_indices;
    shuffle_rng.shuffle(order.begin(), order.end());

    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n_train; start += batch_size)
      batches.emplace_back(order.begin() + start,
                           order.begin() + std::min(start + batch_size, n_train));
    if (batches.size() > 1 && batches.back().size() < 2) {
      auto tail = batches.back();
      batches.pop_back();
      batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }

    LossReport rep;
    rep.epoch = epoch;
    rep.mask_range = 2.0;
    for (const auto& batch : batches) {
      std::vector<ad::Tensor<float>> inputs;
      std::vector<double> observed;
      for (int idx : batch) {
        inputs.push_back(prepared[idx]);
        observed.push_back(elev[idx]);
      }
      auto parts = ad::batch_training_loss(model, inputs, observed, cfg);
      ad::backward(parts.total);
      ad::adam_step(model.parameters(), adam);
      rep.train_loss += parts.eq1 / static_cast<double>(batches.size());
      rep.reg_dense += parts.reg_dense / static_cast<double>(batches.size());
      rep.reg_range += parts.reg_range / static_cast<double>(batches.size());
      rep.reg_clip += parts.reg_clip / static_cast<double>(batches.size());
      rep.mask_range = std::min(rep.mask_range, parts.min_mask_range);
    }

    if (result.val_indices.size() >= 2) {
      std::vector<double> val_areas, val_obs;
      for (int idx : result.val_indices) {
        auto fwd = model.forward(prepared[idx]);
        val_areas.push_back(static_cast<double>(fwd.area.value()[0]));
        val_obs.push_back(elev[idx]);
      }
      rep.val_loss = guarded_pearson(val_areas, val_obs);
    } else {
      rep.val_loss = rep.train_loss;  // too few held-out scenes to score
    }
    result.reports.push_back(rep);

    // Polarity recovery. 1-PCC is stationary at PCC = -1 as well as +1, the
    // variance-based regularizers are sign-blind, and the clamped head cannot
    // recover the sign through the regression layer, so an unlucky init
    // settles on a perfectly *anti*-correlated mask. Negating the sigmoid
    // head's 1x1 conv maps the mask to exactly 1-mask and PCC to -PCC.
    if (rep.train_loss > 1.5)
      ++inverted_streak;
    else
      inverted_streak = 0;
    if (inverted_streak >= 3) {
      inverted_streak = 0;
      std::size_t tensor_index = 0;
      for (auto& l : model.layers) {
        if (l.name == "final_conv") {
          for (auto& v : l.weights.value()) v = -v;
          for (auto& v : l.bias.value()) v = -v;
          for (auto& v : adam.m[tensor_index]) v = -v;      // weights moment
          for (auto& v : adam.m[tensor_index + 1]) v = -v;  // bias moment
          break;
        }
        tensor_index += 2;
      }
    }

    if (rep.val_loss < best_val) {
      best_val = rep.val_loss;
      epochs_since_improve = 0;
    } else {
      ++epochs_since_improve;
    }
    // The monitored metric saturates near its geometric floor long before the
    // mask stops improving, so ties within a small tolerance go to the most
    // recent epoch.
    if (rep.val_loss <= best_val + 1e-3) best = model.clone_values();
    // stop only when the validation loss has stalled AND the mask spans the
    // configured range
    if (epochs_since_improve >= cfg.patience && rep.mask_range > cfg.range_gate)
      break;
  }

  result.final_model = std::move(model);
  result.model = std::move(best);
  return result;
}

namespace {

ad::Tensor<float> prepare_for_model(const FpgnnModel& model,
                                    const GridStack& stack) {
  auto input = prepare_input<float>(stack, model.vv_stats, model.vh_stats);
  if (model.trained_height > 0 &&
      (input.shape()[2] != model.trained_height ||
       input.shape()[3] != model.trained_width))
    throw InvalidInput("infer: stack shape does not match the training shape "
                       "after padding");
  return input;
}

}  // namespace

ForwardResult fpgnn_forward(const FpgnnModel& model, const GridStack& stack) {
  auto input = prepare_for_model(model, stack);
  auto fwd = model.forward(input);

  const int h = stack.height(), w = stack.width();
  const int wp = input.shape()[3];
  SoftMask mask;
  mask.source_date = stack.date;
  mask.values.height = h;
  mask.values.width = w;
  mask.values.values.resize(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      mask.values.at(r, c) =
          fwd.mask.value()[static_cast<std::size_t>(r) * wp + c];
  return {std::move(mask), static_cast<double>(fwd.area.value()[0])};
}

SoftMask infer(const FpgnnModel& model, const GridStack& stack) {
  return fpgnn_forward(model, stack).mask;
}

BinaryMask harden(const SoftMask& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidInput("harden: threshold must lie in (0,1)");
  // compare at the mask's storage precision so e.g. 0.35 includes pixels
  // holding float(0.35)
  const float t = static_cast<float>(threshold);
  BinaryMask out;
  out.values = mask.values;
  for (auto& v : out.values.values) v = (v >= t) ? 1.0f : 0.0f;
  return out;
}

}  // namespace hydrocorr
