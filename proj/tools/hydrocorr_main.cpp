#include <CLI11.hpp>
#include <cstdlib>
#include <string>

#include "hydrocorr/cli.hpp"

namespace {

hydrocorr::cli::GlobalOpts make_opts(bool quiet, bool verbose,
                                     const std::string& seed_flag) {
  hydrocorr::cli::GlobalOpts opts;
  opts.verbosity = quiet ? 0 : (verbose ? 2 : 1);
  if (!seed_flag.empty())
    opts.seed_override = std::stoull(seed_flag);
  else if (const char* env = std::getenv("HYDROCORR_SEED"))
    opts.seed_override = std::stoull(env);
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hydrocorr: unsupervised water-extent mapping from SAR time "
               "series and river-gauge elevations"};
  app.require_subcommand(1);

  bool quiet = false, verbose = false;
  std::string seed_flag;
  app.add_flag("--quiet", quiet, "suppress progress output");
  app.add_flag("--verbose", verbose, "extra progress output");
  app.add_option("--seed", seed_flag,
                 "override config seeds (also: HYDROCORR_SEED)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic study site");
  std::string spec_path, out_dir;
  synth->add_option("spec", spec_path, "SiteSpec JSON file")->required();
  synth->add_option("out", out_dir, "output site directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the network on a site");
  std::string site_dir, config_path, train_out;
  train->add_option("site", site_dir, "site directory")->required();
  train->add_option("out", train_out, "output directory")->required();
  train->add_option("--config", config_path, "TrainConfig JSON file");

  // infer
  auto* infer = app.add_subcommand("infer", "run inference on a site");
  std::string ckpt, infer_site, infer_out, thresholds;
  infer->add_option("checkpoint", ckpt, "model checkpoint (.json)")->required();
  infer->add_option("site", infer_site, "site directory")->required();
  infer->add_option("out", infer_out, "output directory")->required();
  infer->add_option("--thresholds", thresholds,
                    "hard-mask thresholds 'start:stop:step' (e.g. "
                    "0.1:0.55:0.05); omit for soft masks only");

  // validate
  auto* validate = app.add_subcommand("validate",
                                      "score predictions against references");
  std::string pred_dir, val_site, mode, out_csv, val_thresholds;
  double mndwi_manual = -2.0;
  std::vector<int> roi;
  int max_gap = 4;
  validate->add_option("predictions", pred_dir, "directory of soft_* stacks")
      ->required();
  validate->add_option("site", val_site, "site directory")->required();
  validate->add_option("--mode", mode, "reference source: dtm|mndwi|truth")
      ->required();
  validate->add_option("out_csv", out_csv, "output IoU CSV path")->required();
  validate->add_option("--thresholds", val_thresholds,
                       "threshold grid (default 0.1:0.55:0.05)");
  validate->add_option("--mndwi-threshold", mndwi_manual,
                       "manual MNDWI threshold (fallback for non-bimodal "
                       "histograms)");
  validate->add_option("--roi", roi,
                       "restrict scoring to r0 c0 r1 c1 (exclusive ends)")
      ->expected(4);
  validate->add_option("--max-gap-days", max_gap,
                       "scene/gauge pairing tolerance in days");

  // benchmark
  auto* benchmark = app.add_subcommand("benchmark",
                                       "run the classical segmenters");
  std::string bench_site, methods = "otsu,chanvese,gmm,spectral", band = "VV",
              bench_out;
  benchmark->add_option("site", bench_site, "site directory")->required();
  benchmark->add_option("out", bench_out, "output directory")->required();
  benchmark->add_option("--methods", methods,
                        "comma list of otsu,chanvese,gmm,spectral");
  benchmark->add_option("--band", band, "SAR band: VV or VH");

  CLI11_PARSE(app, argc, argv);

  hydrocorr::cli::GlobalOpts opts;
  try {
    opts = make_opts(quiet, verbose, seed_flag);
  } catch (const std::exception&) {
    std::fprintf(stderr, "invalid seed value\n");
    return hydrocorr::cli::kExitInvalid;
  }

  if (synth->parsed())
    return hydrocorr::cli::cmd_synth(spec_path, out_dir, opts);
  if (train->parsed())
    return hydrocorr::cli::cmd_train(site_dir, config_path, train_out, opts);
  if (infer->parsed())
    return hydrocorr::cli::cmd_infer(ckpt, infer_site, infer_out, thresholds,
                                     opts);
  if (validate->parsed()) {
    hydrocorr::cli::ValidateOpts vopts;
    vopts.thresholds = val_thresholds;
    if (mndwi_manual >= -1.0) vopts.mndwi_threshold = mndwi_manual;
    if (roi.size() == 4)
      vopts.roi = std::array<int, 4>{roi[0], roi[1], roi[2], roi[3]};
    vopts.max_gap_days = max_gap;
    return hydrocorr::cli::cmd_validate(pred_dir, val_site, mode, out_csv,
                                        vopts, opts);
  }
  if (benchmark->parsed())
    return hydrocorr::cli::cmd_benchmark(bench_site, methods, band, bench_out,
                                         opts);
  return hydrocorr::cli::kExitInvalid;
}
