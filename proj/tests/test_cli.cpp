#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "hydrocorr/cli.hpp"
#include "hydrocorr/raster_io.hpp"
#include "hydrocorr/synthgen.hpp"
#include "test_util.hpp"

using namespace hydrocorr;
using namespace hydrocorr::cli;

namespace {

GlobalOpts quiet() {
  GlobalOpts opts;
  opts.verbosity = 0;
  return opts;
}

void write_spec(const std::string& path, const SiteSpec& spec) {
  std::ofstream out(path);
  out << spec.to_json();
}

SiteSpec small_spec() {
  SiteSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.river_half_width = 2;
  spec.bank_slope = 1.2;
  spec.n_dates = 10;
  spec.seasonal_amplitude = 5.0;
  spec.seed = 3;
  return spec;
}

std::string small_train_config() {
  return R"({"epoch_cap": 3, "early_stop": {"patience": 2}, "seed": 9})";
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in),
          std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("threshold flag parsing") {
  const auto grid = parse_thresholds("0.1:0.55:0.05");
  REQUIRE(grid.size() == 10);
  CHECK(grid.front() == doctest::Approx(0.10));
  CHECK(grid.back() == doctest::Approx(0.55));
  CHECK(parse_thresholds("0.3").size() == 1);
  CHECK_THROWS_AS(parse_thresholds("0.5:0.1:0.05"), InvalidInput);
  CHECK_THROWS_AS(parse_thresholds("abc"), InvalidInput);
  CHECK_THROWS_AS(parse_thresholds("0:0.5:0.1"), InvalidInput);
}

TEST_CASE("synth writes a loadable site and is seed-stable") {
  TempDir dir;
  write_spec(dir.str("spec.json"), small_spec());

  CHECK(cmd_synth(dir.str("spec.json"), dir.str("site"), quiet()) == kExitOk);
  const LoadedSite site = load_site(dir.str("site"), 4);
  CHECK(site.series.scenes.size() == 10);
  CHECK(site.dtm.has_value());
  CHECK(site.spec.has_value());

  // rerun: byte-identical payloads
  CHECK(cmd_synth(dir.str("spec.json"), dir.str("site2"), quiet()) == kExitOk);
  const auto a = slurp(dir.str("site/scenes/scene_000_2019-01-01.bin"));
  const auto b = slurp(dir.str("site2/scenes/scene_000_2019-01-01.bin"));
  CHECK(a == b);

  // invalid spec: exit 2
  SiteSpec bad = small_spec();
  bad.water_db_mean = -2.0;  // brighter than land
  write_spec(dir.str("bad.json"), bad);
  CHECK(cmd_synth(dir.str("bad.json"), dir.str("site3"), quiet()) ==
        kExitInvalid);

  // missing spec file: exit 1
  CHECK(cmd_synth(dir.str("nope.json"), dir.str("site4"), quiet()) == kExitIo);
}

TEST_CASE("train/infer/validate pipeline on a small site") {
  TempDir dir;
  write_spec(dir.str("spec.json"), small_spec());
  REQUIRE(cmd_synth(dir.str("spec.json"), dir.str("site"), quiet()) == kExitOk);
  {
    std::ofstream cfg(dir.str("train.json"));
    cfg << small_train_config();
  }

  REQUIRE(cmd_train(dir.str("site"), dir.str("train.json"), dir.str("run"),
                    quiet()) == kExitOk);
  CHECK(std::filesystem::exists(dir.str("run/model.json")));
  CHECK(std::filesystem::exists(dir.str("run/model.bin")));
  CHECK(std::filesystem::exists(dir.str("run/losses.csv")));
  CHECK(std::filesystem::exists(dir.str("run/split.csv")));
  CHECK(std::filesystem::exists(dir.str("run/manifest.json")));

  REQUIRE(cmd_infer(dir.str("run/model.json"), dir.str("site"),
                    dir.str("pred"), "0.3:0.5:0.1", quiet()) == kExitOk);
  CHECK(std::filesystem::exists(dir.str("pred/soft_2019-01-01.json")));
  CHECK(std::filesystem::exists(dir.str("pred/hard_0.30_2019-01-01.json")));
  CHECK(std::filesystem::exists(dir.str("pred/hard_0.50_2019-01-07.json")));

  // soft masks only when the flag is omitted
  REQUIRE(cmd_infer(dir.str("run/model.json"), dir.str("site"),
                    dir.str("pred_soft"), "", quiet()) == kExitOk);
  CHECK(std::filesystem::exists(dir.str("pred_soft/soft_2019-01-01.json")));
  CHECK(!std::filesystem::exists(dir.str("pred_soft/hard_0.30_2019-01-01.json")));

  ValidateOpts vopts;
  vopts.thresholds = "0.3:0.5:0.1";
  REQUIRE(cmd_validate(dir.str("pred"), dir.str("site"), "truth",
                       dir.str("iou.csv"), vopts, quiet()) == kExitOk);
  CHECK(std::filesystem::exists(dir.str("iou.csv")));
  CHECK(std::filesystem::exists(dir.str("iou.csv.manifest.json")));

  REQUIRE(cmd_validate(dir.str("pred"), dir.str("site"), "dtm",
                       dir.str("iou_dtm.csv"), vopts, quiet()) == kExitOk);
  REQUIRE(cmd_validate(dir.str("pred"), dir.str("site"), "mndwi",
                       dir.str("iou_mndwi.csv"), vopts, quiet()) == kExitOk);

  // first line of the IoU CSV is the documented header
  std::ifstream csv(dir.str("iou.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "date,threshold,iou_water,iou_nonwater,valid_fraction");

  // both references derive from the same truth: the MEAN rows of the dtm and
  // mndwi tables agree within 0.02
  auto mean_rows = [](const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::map<std::string, std::pair<double, double>> rows;
    while (std::getline(in, line)) {
      if (line.rfind("MEAN,", 0) != 0) continue;
      std::stringstream ss(line.substr(5));
      std::string t, iw, inw;
      std::getline(ss, t, ',');
      std::getline(ss, iw, ',');
      std::getline(ss, inw, ',');
      rows[t] = {std::stod(iw), std::stod(inw)};
    }
    return rows;
  };
  const auto dtm_rows = mean_rows(dir.str("iou_dtm.csv"));
  const auto mndwi_rows = mean_rows(dir.str("iou_mndwi.csv"));
  REQUIRE(!dtm_rows.empty());
  REQUIRE(dtm_rows.size() == mndwi_rows.size());
  for (const auto& [t, vals] : dtm_rows) {
    REQUIRE(mndwi_rows.count(t));
    CHECK(std::abs(vals.first - mndwi_rows.at(t).first) <= 0.02);
    CHECK(std::abs(vals.second - mndwi_rows.at(t).second) <= 0.02);
  }

  SUBCASE("corrupted checkpoint exits 2") {
    {
      std::ofstream bad(dir.str("run/model.json"), std::ios::trunc);
      bad << "{broken";
    }
    CHECK(cmd_infer(dir.str("run/model.json"), dir.str("site"),
                    dir.str("pred2"), "", quiet()) == kExitInvalid);
  }

  SUBCASE("empty prediction dir exits 2") {
    std::filesystem::create_directories(dir.str("empty"));
    CHECK(cmd_validate(dir.str("empty"), dir.str("site"), "truth",
                       dir.str("x.csv"), vopts, quiet()) == kExitInvalid);
  }

  SUBCASE("unknown mode exits 2") {
    CHECK(cmd_validate(dir.str("pred"), dir.str("site"), "optical",
                       dir.str("x.csv"), vopts, quiet()) == kExitInvalid);
  }
}

TEST_CASE("train failure modes map to the exit-code contract") {
  TempDir dir;
  SiteSpec flat = small_spec();
  flat.seasonal_amplitude = 0.0;  // constant gauge
  write_spec(dir.str("spec.json"), flat);
  REQUIRE(cmd_synth(dir.str("spec.json"), dir.str("site"), quiet()) == kExitOk);
  {
    std::ofstream cfg(dir.str("train.json"));
    cfg << small_train_config();
  }
  CHECK(cmd_train(dir.str("site"), dir.str("train.json"), dir.str("run"),
                  quiet()) == kExitUnlearnable);

  // missing VV band: exit 2
  SiteSpec ok = small_spec();
  write_spec(dir.str("ok.json"), ok);
  REQUIRE(cmd_synth(dir.str("ok.json"), dir.str("site2"), quiet()) == kExitOk);
  // strip VV from one scene
  auto stack = read_gridstack(dir.str("site2/scenes/scene_000_2019-01-01.json"));
  stack.bands.erase("VV");
  write_gridstack(stack, dir.str("site2/scenes/scene_000_2019-01-01.json"));
  CHECK(cmd_train(dir.str("site2"), dir.str("train.json"), dir.str("run2"),
                  quiet()) == kExitInvalid);
}

TEST_CASE("benchmark emits masks and the combined csv") {
  TempDir dir;
  SiteSpec spec = small_spec();
  spec.height = 32;
  spec.width = 32;
  spec.river_half_width = 3;
  spec.bank_slope = 0.6;
  spec.n_dates = 5;
  write_spec(dir.str("spec.json"), spec);
  REQUIRE(cmd_synth(dir.str("spec.json"), dir.str("site"), quiet()) == kExitOk);

  REQUIRE(cmd_benchmark(dir.str("site"), "otsu,chanvese,gmm,spectral", "VV",
                        dir.str("bench"), quiet()) == kExitOk);
  CHECK(std::filesystem::exists(dir.str("bench/otsu/mask_2019-01-01.json")));
  CHECK(std::filesystem::exists(dir.str("bench/gmm/mask_2019-01-01.json")));
  CHECK(std::filesystem::exists(dir.str("bench/benchmark.csv")));
  CHECK(std::filesystem::exists(dir.str("bench/benchmark_details.csv")));

  std::ifstream csv(dir.str("bench/benchmark.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "method,band,reference,iou_water,iou_nonwater,iou_mean,dates");

  // every method recovers the clean synthetic water within IoU 0.9
  std::string line;
  int truth_rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string method, band_col, reference, iou_water;
    std::getline(ss, method, ',');
    std::getline(ss, band_col, ',');
    std::getline(ss, reference, ',');
    std::getline(ss, iou_water, ',');
    if (reference != "truth") continue;
    ++truth_rows;
    CHECK_MESSAGE(std::stod(iou_water) >= 0.9, method, " water IoU ",
                  iou_water);
  }
  CHECK(truth_rows == 4);

  CHECK(cmd_benchmark(dir.str("site"), "", "VV", dir.str("b2"), quiet()) ==
        kExitInvalid);
  CHECK(cmd_benchmark(dir.str("site"), "sobel", "VV", dir.str("b3"),
                      quiet()) == kExitInvalid);
  CHECK(cmd_benchmark(dir.str("site"), "otsu", "HH", dir.str("b4"), quiet()) ==
        kExitInvalid);
}

}  // TEST_SUITE
