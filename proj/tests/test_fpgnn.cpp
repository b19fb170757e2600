#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hydrocorr/checkpoint.hpp"
#include "hydrocorr/fpgnn.hpp"
#include "hydrocorr/rng.hpp"
#include "hydrocorr/synthgen.hpp"
#include "test_util.hpp"

using namespace hydrocorr;

namespace {

SiteSpec tiny_spec(int n_dates = 10, int hw = 16) {
  SiteSpec spec;
  spec.height = hw;
  spec.width = hw;
  spec.river_half_width = 2;
  spec.bank_slope = 1.2;
  spec.n_dates = n_dates;
  spec.seasonal_amplitude = 5.0;
  spec.seed = 77;
  return spec;
}

}  // namespace

TEST_SUITE("fpgnn") {

TEST_CASE("pearson loss analytic cases") {
  CHECK(pearson_loss({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(pearson_loss({3, 2, 1}, {1, 2, 3}) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(pearson_loss({2, 4, 6}, {1, 2, 3}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(pearson_loss({1, 1, 1}, {1, 2, 3}), InvalidInput);
  CHECK_THROWS_AS(pearson_loss({1, 2}, {1, 2, 3}), InvalidInput);
}

TEST_CASE("pearson loss bounds and affine invariance") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(6), y(6);
    for (auto& v : p) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const double loss = pearson_loss(p, y);
    CHECK(loss >= -1e-12);
    CHECK(loss <= 2.0 + 1e-12);

    const double a = std::exp(rng.uniform(-2.0, 2.0));
    const double b = rng.normal();
    std::vector<double> scaled = p;
    for (auto& v : scaled) v = a * v + b;
    CHECK(pearson_loss(scaled, y) == doctest::Approx(loss).epsilon(1e-9));
    for (auto& v : scaled) v = -v;
    CHECK(pearson_loss(scaled, y) == doctest::Approx(2.0 - loss).epsilon(1e-7));
  }
}

TEST_CASE("autodiff pearson agrees with the standalone evaluation") {
  Rng rng(43);
  std::vector<double> p(8), y(8);
  for (auto& v : p) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  std::vector<float> pf(p.begin(), p.end());
  auto t = ad::Tensor<float>::constant({8}, pf);
  auto loss = ad::pearson_loss_op(t, y, 0.0);
  std::vector<double> pd(pf.begin(), pf.end());  // float-rounded inputs
  CHECK(static_cast<double>(loss.value()[0]) ==
        doctest::Approx(pearson_loss(pd, y)).epsilon(1e-6));
}

TEST_CASE("activity regularizer terms match the stated substitutions") {
  TrainConfig cfg;

  SUBCASE("full-range mask with a constant dry patch") {
    Grid m = Grid::filled(8, 8, 0.25f);
    m.at(7, 7) = 1.0f;
    m.at(6, 7) = 0.0f;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) m.at(r, c) = 0.25f;
    const auto rep =
        activity_regularizers({m, m}, {10.0, 30.0}, 0, 0, cfg);
    CHECK(rep.range_term == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(rep.clip_term == doctest::Approx(0.0));
  }

  SUBCASE("alternating 0.0/0.2 dry patch gives clip term 1.0") {
    Grid m = Grid::filled(8, 8, 0.5f);
    m.at(7, 7) = 1.0f;
    m.at(7, 6) = 0.0f;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c)
        m.at(r, c) = ((r * 6 + c) % 2 == 0) ? 0.0f : 0.2f;
    // oracle: population variance of half 0.0 / half 0.2 = 0.01
    double mean = 0.0;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) mean += m.at(r, c);
    mean /= 36.0;
    double var = 0.0;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c)
        var += (m.at(r, c) - mean) * (m.at(r, c) - mean);
    var /= 36.0;
    CHECK(var == doctest::Approx(0.01));
    const auto rep = activity_regularizers({m, m}, {10.0, 30.0}, 0, 0, cfg);
    CHECK(rep.clip_term == doctest::Approx(100.0 * var).epsilon(1e-6));
    CHECK(rep.clip_term == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("areas with variance 100 give dense penalty 1.0") {
    Grid m = Grid::filled(8, 8, 0.5f);
    m.at(7, 7) = 1.0f;
    m.at(7, 6) = 0.0f;
    // population variance of {10, 30} is 100
    const auto rep = activity_regularizers({m, m}, {10.0, 30.0}, 0, 0, cfg);
    CHECK(rep.dense_term == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("autodiff regularizer terms agree with the evaluation path") {
  TrainConfig cfg;
  Rng rng(47);
  auto site = generate_site(tiny_spec(8));
  auto model = FpgnnModel::init(3);
  std::vector<const Grid*> vv, vh;
  for (const auto& s : site.series.scenes) {
    vv.push_back(&s.band(kBandVV));
    vh.push_back(&s.band(kBandVH));
  }
  model.vv_stats = compute_band_stats_db(vv);
  model.vh_stats = compute_band_stats_db(vh);

  std::vector<ad::Tensor<float>> inputs;
  std::vector<double> obs;
  std::vector<Grid> masks;
  std::vector<double> areas;
  for (int i = 0; i < 4; ++i) {
    inputs.push_back(
        prepare_input<float>(site.series.scenes[i], model.vv_stats,
                             model.vh_stats));
    obs.push_back(site.series.elevation_of_scene(i));
    auto fwd = fpgnn_forward(model, site.series.scenes[i]);
    masks.push_back(fwd.mask.values);
    areas.push_back(fwd.predicted_area);
  }
  auto parts = ad::batch_training_loss(model, inputs, obs, cfg);
  const auto rep = activity_regularizers(masks, areas, 0, 0, cfg);
  CHECK(parts.reg_range == doctest::Approx(rep.range_term).epsilon(1e-4));
  CHECK(parts.reg_clip == doctest::Approx(rep.clip_term).epsilon(1e-3));
  CHECK(parts.reg_dense == doctest::Approx(rep.dense_term).epsilon(1e-3));
  const double expected_total = parts.eq1 + parts.reg_dense +
                                parts.reg_range + parts.reg_clip;
  CHECK(static_cast<double>(parts.total.value()[0]) ==
        doctest::Approx(expected_total).epsilon(1e-4));
}

TEST_CASE("constant network yields uniform mask and the closed-form area") {
  auto model = FpgnnModel::init(5);
  // zero the upsampling path; set the final conv bias
  const float bias = 0.4f;
  for (const char* name : {"tconv1", "tconv2", "tconv3", "reduce_c6",
                           "reduce_c4", "reduce_c2", "final_conv"}) {
    auto& layer = model.layer(name);
    std::fill(layer.weights.value().begin(), layer.weights.value().end(), 0.0f);
    std::fill(layer.bias.value().begin(), layer.bias.value().end(), 0.0f);
  }
  model.layer("final_conv").bias.value()[0] = bias;
  auto& head = model.layer("head");
  head.weights.value()[0] = 2.0f;
  head.bias.value()[0] = 0.0f;

  auto site = generate_site(tiny_spec(6));
  model.vv_stats = {0.0, 1.0};
  model.vh_stats = {0.0, 1.0};
  // bypass stats: prepare directly
  auto fwd = fpgnn_forward(model, site.series.scenes[0]);
  const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(bias)));
  for (float v : fwd.mask.values.values)
    CHECK(v == doctest::Approx(sig).epsilon(1e-5));
  CHECK(fwd.predicted_area ==
        doctest::Approx(2.0 * 16 * 16 * sig).epsilon(1e-4));
}

TEST_CASE("nonnegative head makes predicted area monotone in mask pixels") {
  // areas respond to a pixel bump through sum pooling and a clamped weight
  auto model = FpgnnModel::init(9);
  CHECK(model.layer("head").weights.value()[0] >= 0.0f);

  auto site = generate_site(tiny_spec(6));
  std::vector<const Grid*> vv, vh;
  for (const auto& s : site.series.scenes) {
    vv.push_back(&s.band(kBandVV));
    vh.push_back(&s.band(kBandVH));
  }
  model.vv_stats = compute_band_stats_db(vv);
  model.vh_stats = compute_band_stats_db(vh);

  auto fwd = fpgnn_forward(model, site.series.scenes[0]);
  const double w = model.layer("head").weights.value()[0];
  double sum = 0.0;
  for (float v : fwd.mask.values.values) sum += v;
  const double area0 = w * sum + model.layer("head").bias.value()[0];
  CHECK(fwd.predicted_area == doctest::Approx(area0).epsilon(1e-4));
  // bumping any pixel cannot decrease the area
  const double bumped = w * (sum + 0.25) + model.layer("head").bias.value()[0];
  CHECK(bumped >= fwd.predicted_area);
}

TEST_CASE("stratified split honors ratio, strata, and determinism") {
  TrainConfig cfg;
  cfg.stratum_count = 2;

  SceneSeries series;
  series.gauge.gauge_zero = 0.0;
  for (int i = 0; i < 10; ++i) {
    GridStack s;
    s.date = Date::parse("2019-01-01") + i;
    s.bands["VV"] = Grid::filled(16, 16, 1.0f);
    s.bands["VH"] = Grid::filled(16, 16, 1.0f);
    series.scenes.push_back(std::move(s));
    // two strata: five low elevations, five high
    series.gauge.entries.push_back(
        {Date::parse("2019-01-01") + i, i < 5 ? 1.0 + 0.01 * i : 9.0 + 0.01 * i});
    series.pairing.push_back({i, i});
  }

  std::vector<int> train_idx, val_idx;
  stratified_split_indices(series, cfg, 5, train_idx, val_idx);
  CHECK(train_idx.size() == 8);
  CHECK(val_idx.size() == 2);
  // each 5-member stratum contributes exactly one test scene
  int low_val = 0, high_val = 0;
  for (int idx : val_idx) (idx < 5 ? low_val : high_val) += 1;
  CHECK(low_val == 1);
  CHECK(high_val == 1);
  // union is everything, intersection empty
  std::vector<int> all = train_idx;
  all.insert(all.end(), val_idx.begin(), val_idx.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[i] == i);

  std::vector<int> train2, val2;
  stratified_split_indices(series, cfg, 5, train2, val2);
  CHECK(train2 == train_idx);
  CHECK(val2 == val_idx);

  // all-equal elevations: single stratum, plain 80/20
  for (auto& e : series.gauge.entries) e.elevation_m = 3.0;
  stratified_split_indices(series, cfg, 5, train2, val2);
  CHECK(train2.size() == 8);
  CHECK(val2.size() == 2);

  SceneSeries tiny;
  tiny.gauge.gauge_zero = 0.0;
  for (int i = 0; i < 4; ++i) {
    GridStack s;
    s.date = Date::parse("2019-01-01") + i;
    s.bands["VV"] = Grid::filled(16, 16, 1.0f);
    tiny.scenes.push_back(std::move(s));
    tiny.gauge.entries.push_back({Date::parse("2019-01-01") + i, 1.0 * i});
    tiny.pairing.push_back({i, i});
  }
  CHECK_THROWS_AS(stratified_split_indices(tiny, cfg, 5, train2, val2),
                  InvalidInput);
}

TEST_CASE("training is deterministic and rejects constant gauges") {
  SUBCASE("constant elevations are unlearnable") {
    auto spec = tiny_spec(8);
    spec.seasonal_amplitude = 0.0;
    auto site = generate_site(spec);
    TrainConfig cfg;
    cfg.epoch_cap = 3;
    CHECK_THROWS_AS(train(site.series, cfg, 1), UnlearnableSeries);
  }

  SUBCASE("same seed, same loss trajectory") {
    auto site = generate_site(tiny_spec(10));
    TrainConfig cfg;
    cfg.epoch_cap = 4;
    cfg.patience = 2;
    const auto r1 = train(site.series, cfg, 11);
    const auto r2 = train(site.series, cfg, 11);
    REQUIRE(r1.reports.size() == r2.reports.size());
    for (std::size_t i = 0; i < r1.reports.size(); ++i) {
      CHECK(r1.reports[i].train_loss == r2.reports[i].train_loss);
      CHECK(r1.reports[i].val_loss == r2.reports[i].val_loss);
      CHECK(r1.reports[i].mask_range == r2.reports[i].mask_range);
    }
    CHECK(r1.train_indices == r2.train_indices);
  }
}

TEST_CASE("inference is pure and honors contracts") {
  auto site = generate_site(tiny_spec(10));
  TrainConfig cfg;
  cfg.epoch_cap = 3;
  const auto result = train(site.series, cfg, 7);

  const SoftMask m1 = infer(result.model, site.series.scenes[0]);
  const SoftMask m2 = infer(result.model, site.series.scenes[0]);
  CHECK(m1.values.values == m2.values.values);
  for (float v : m1.values.values) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(m1.values.height == 16);
  CHECK(m1.values.width == 16);

  SUBCASE("shape mismatch is rejected") {
    auto other = generate_site(tiny_spec(6, 32));
    CHECK_THROWS_AS(infer(result.model, other.series.scenes[0]), InvalidInput);
  }

  SUBCASE("all-nodata input is rejected") {
    GridStack bad = site.series.scenes[0];
    for (auto& [name, g] : bad.bands) {
      g.nodata = -1.0f;
      std::fill(g.values.begin(), g.values.end(), -1.0f);
    }
    CHECK_THROWS_AS(infer(result.model, bad), InvalidInput);
  }
}

TEST_CASE("a converged model orders areas by flood extent") {
  // train the small site to actual convergence so the early-stop gate and
  // the area-ordering contract are exercised on a realistic model
  auto site = generate_site(tiny_spec(12));
  TrainConfig cfg;
  cfg.patience = 6;
  cfg.epoch_cap = 120;
  const auto result = train(site.series, cfg, 13);

  // predicted area strictly increases across three scenes of strictly
  // increasing flood extent
  const auto elev = site.series.elevations();
  int lo = 0, hi = 0;
  for (int i = 0; i < 12; ++i) {
    if (elev[i] < elev[lo]) lo = i;
    if (elev[i] > elev[hi]) hi = i;
  }
  int mid = 0;
  for (int i = 0; i < 12; ++i)
    if (elev[i] > elev[lo] + 0.5 && elev[i] < elev[hi] - 0.5) mid = i;
  const double a_lo = fpgnn_forward(result.model, site.series.scenes[lo]).predicted_area;
  const double a_mid = fpgnn_forward(result.model, site.series.scenes[mid]).predicted_area;
  const double a_hi = fpgnn_forward(result.model, site.series.scenes[hi]).predicted_area;
  CHECK(a_lo < a_mid);
  CHECK(a_mid < a_hi);

  // the range gate held at stop: training scenes span  more than 0.9
  for (int idx : result.train_indices) {
    const SoftMask m = infer(result.model, site.series.scenes[idx]);
    const auto [mn, mx] =
        std::minmax_element(m.values.values.begin(), m.values.values.end());
    CHECK(*mx - *mn > 0.9f);
  }
}

TEST_CASE("non-multiple-of-8 sites pad and crop transparently") {
  SiteSpec spec = tiny_spec(8, 20);  // 20x20 pads to 24x24
  auto site = generate_site(spec);
  TrainConfig cfg;
  cfg.epoch_cap = 2;
  cfg.patience = 2;
  const auto result = train(site.series, cfg, 3);
  const SoftMask m = infer(result.model, site.series.scenes[0]);
  CHECK(m.values.height == 20);
  CHECK(m.values.width == 20);
}

TEST_CASE("regularizer evaluation requires a batch") {
  TrainConfig cfg;
  Grid m = Grid::filled(8, 8, 0.5f);
  CHECK_THROWS_AS(activity_regularizers({m}, {1.0}, 0, 0, cfg), InvalidInput);
}

TEST_CASE("stratified_split returns disjoint sub-series") {
  auto site = generate_site(tiny_spec(10));
  TrainConfig cfg;
  const auto [train_set, test_set] = stratified_split(site.series, cfg, 3);
  CHECK(train_set.scenes.size() + test_set.scenes.size() == 10);
  CHECK(test_set.scenes.size() >= 1);
  train_set.validate();
  test_set.validate();
}

TEST_CASE("harden thresholds include the boundary and nest") {
  SoftMask soft;
  soft.values = Grid::filled(2, 2, 0.35f);
  soft.values.values = {0.35f, 0.1f, 0.55f, 0.5f};

  const BinaryMask at35 = harden(soft, 0.35);
  CHECK(at35.values.values[0] == 1.0f);  // boundary value is water
  CHECK(at35.values.values[1] == 0.0f);

  SoftMask uniform;
  uniform.values = Grid::filled(2, 2, 0.5f);
  const BinaryMask all = harden(uniform, 0.5);
  for (float v : all.values.values) CHECK(v == 1.0f);

  // nesting across increasing thresholds
  const BinaryMask lo = harden(soft, 0.1);
  const BinaryMask hi = harden(soft, 0.55);
  for (std::size_t i = 0; i < 4; ++i)
    if (hi.values.values[i] == 1.0f) CHECK(lo.values.values[i] == 1.0f);

  CHECK_THROWS_AS(harden(soft, 0.0), InvalidInput);
  CHECK_THROWS_AS(harden(soft, 1.0), InvalidInput);
}

TEST_CASE("checkpoints round-trip the model bit-exactly") {
  TempDir dir;
  auto site = generate_site(tiny_spec(8));
  TrainConfig cfg;
  cfg.epoch_cap = 2;
  const auto result = train(site.series, cfg, 5);

  ad::AdamState<float> adam;
  adam.step_count = 4;
  save_checkpoint(result.model, adam, dir.str("model.json"));
  const Checkpoint back = load_checkpoint(dir.str("model.json"));
  CHECK(back.adam.step_count == 4);
  REQUIRE(back.model.layers.size() == result.model.layers.size());
  for (std::size_t i = 0; i < back.model.layers.size(); ++i) {
    CHECK(back.model.layers[i].name == result.model.layers[i].name);
    CHECK(back.model.layers[i].weights.value() ==
          result.model.layers[i].weights.value());
    CHECK(back.model.layers[i].bias.value() ==
          result.model.layers[i].bias.value());
  }
  const SoftMask a = infer(result.model, site.series.scenes[0]);
  const SoftMask b = infer(back.model, site.series.scenes[0]);
  CHECK(a.values.values == b.values.values);

  CHECK_THROWS(load_checkpoint(dir.str("missing.json")));
}

TEST_CASE("full training loss gradient matches finite differences") {
  // double instantiation of the identical composition; h = 1e-3
  auto site = generate_site(tiny_spec(6));
  TrainConfig cfg;

  auto model = ad::FpgnnModelT<double>::init(21);
  std::vector<const Grid*> vv, vh;
  for (const auto& s : site.series.scenes) {
    vv.push_back(&s.band(kBandVV));
    vh.push_back(&s.band(kBandVH));
  }
  const BandStats vv_stats = compute_band_stats_db(vv);
  const BandStats vh_stats = compute_band_stats_db(vh);

  std::vector<ad::Tensor<double>> inputs;
  std::vector<double> obs;
  for (int i = 0; i < 3; ++i) {
    inputs.push_back(
        prepare_input<double>(site.series.scenes[i], vv_stats, vh_stats));
    obs.push_back(site.series.elevation_of_scene(i));
  }

  std::vector<ad::Tensor<double>> params;
  for (auto* l : model.parameters()) {
    params.push_back(l->weights);
    params.push_back(l->bias);
  }
  auto build = [&] {
    return ad::batch_training_loss(model, inputs, obs, cfg).total;
  };

  // sample a few parameters from every tensor; checking all ~73k would take
  // hours of forward passes
  Rng rng(101);
  std::vector<std::pair<int, std::int64_t>> sample;
  for (int ti = 0; ti < static_cast<int>(params.size()); ++ti)
    for (int k = 0; k < 3; ++k)
      sample.emplace_back(
          ti, static_cast<std::int64_t>(rng.below(
                  static_cast<std::uint32_t>(params[ti].size()))));
  const auto res = gradcheck(build, params, 1e-3, &sample);
  CHECK_MESSAGE(res.max_rel_err < 1e-3, res.worst);
}

}  // TEST_SUITE
