#include "hydrocorr/cli.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "hydrocorr/baselines.hpp"
#include "hydrocorr/checkpoint.hpp"
#include "hydrocorr/error.hpp"
#include "hydrocorr/raster_io.hpp"
#include "hydrocorr/validation.hpp"

namespace hydrocorr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kToolVersion = "hydrocorr 0.1.0";

void log(const GlobalOpts& opts, int level, const std::string& msg) {
  if (opts.verbosity >= level) std::fprintf(stderr, "%s\n", msg.c_str());
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_threshold(double t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

struct ManifestTimer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const ManifestTimer& timer) {
  json j;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["tool_version"] = kToolVersion;
  j["duration_seconds"] = timer.seconds();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

int run_guarded(const GlobalOpts& opts, const char* command,
                const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const UnlearnableSeries& e) {
    std::fprintf(stderr, "%s: %s\n", command, e.what());
    return kExitUnlearnable;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "%s: %s\n", command, e.what());
    return kExitInvalid;
  } catch (const IoError& e) {
    std::fprintf(stderr, "%s: %s\n", command, e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: %s\n", command, e.what());
    return kExitIo;
  }
  (void)opts;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> sorted_stack_stems(const std::string& dir,
                                            const std::string& prefix) {
  std::vector<std::string> stems;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.starts_with(prefix) && name.ends_with(".json"))
      stems.push_back(entry.path().string().substr(
          0, entry.path().string().size() - 5));
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

}  // namespace

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  const auto c1 = text.find(':');
  try {
    if (c1 == std::string::npos) {
      out.push_back(std::stod(text));
    } else {
      const auto c2 = text.find(':', c1 + 1);
      if (c2 == std::string::npos)
        throw InvalidInput("thresholds must be 'start:stop:step' or a value");
      const double start = std::stod(text.substr(0, c1));
      const double stop = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
      const double step = std::stod(text.substr(c2 + 1));
      if (step <= 0.0 || stop < start)
        throw InvalidInput("thresholds: need step > 0 and stop >= start");
      for (int i = 0;; ++i) {
        const double t = start + i * step;
        if (t > stop + 1e-9) break;
        out.push_back(t);
      }
    }
  } catch (const std::invalid_argument&) {
    throw InvalidInput("unparsable threshold list '" + text + "'");
  } catch (const std::out_of_range&) {
    throw InvalidInput("unparsable threshold list '" + text + "'");
  }
  for (double t : out)
    if (!(t > 0.0 && t < 1.0))
      throw InvalidInput("thresholds must lie inside (0,1)");
  if (out.empty()) throw InvalidInput("empty threshold list");
  return out;
}

LoadedSite load_site(const std::string& site_dir, int max_gap_days) {
  LoadedSite site;
  const fs::path dir(site_dir);
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + site_dir);

  if (fs::exists(dir / "sitespec.json"))
    site.spec = SiteSpec::from_json(read_text_file((dir / "sitespec.json").string()));

  double gauge_zero = site.spec ? site.spec->gauge_zero : 0.0;
  const auto gauge =
      read_gauge_csv((dir / "gauge.csv").string(), gauge_zero);

  std::vector<GridStack> scenes;
  for (const auto& stem : sorted_stack_stems((dir / "scenes").string(), "scene_"))
    scenes.push_back(read_gridstack(stem));
  if (scenes.empty()) throw InvalidInput("no scenes in " + site_dir);

  site.series = pair_scenes(scenes, gauge, max_gap_days, &site.dropped);

  if (fs::exists(dir / "dtm.json"))
    site.dtm = read_gridstack((dir / "dtm.json").string()).band(kBandDTM);
  return site;
}

void write_site(const Site& site, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir / "scenes");

  {
    std::ofstream spec(dir / "sitespec.json", std::ios::trunc);
    if (!spec) throw IoError("cannot write sitespec.json");
    spec << site.spec.to_json();
  }
  write_gauge_csv(site.series.gauge, (dir / "gauge.csv").string());

  GridStack dtm_stack;
  dtm_stack.date = site.spec.start_date;
  dtm_stack.crs_note = "synthetic valley site";
  dtm_stack.bands[kBandDTM] = site.dtm;
  write_gridstack(dtm_stack, (dir / "dtm.json").string());

  for (std::size_t i = 0; i < site.series.scenes.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%03zu_%s", i,
                  site.series.scenes[i].date.to_string().c_str());
    write_gridstack(site.series.scenes[i],
                    (dir / "scenes" / name).string());
  }
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput("train config: malformed JSON: " + std::string(e.what()));
  }
  TrainConfig cfg;
  try {
    cfg.lr = j.value("lr", cfg.lr);
    cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
    cfg.batch_fraction = j.value("batch_fraction", cfg.batch_fraction);
    if (j.contains("threshold_grid")) {
      const auto& g = j["threshold_grid"];
      cfg.threshold_start = g.value("start", cfg.threshold_start);
      cfg.threshold_stop = g.value("stop", cfg.threshold_stop);
      cfg.threshold_step = g.value("step", cfg.threshold_step);
    }
    if (j.contains("early_stop")) {
      cfg.patience = j["early_stop"].value("patience", cfg.patience);
      cfg.range_gate = j["early_stop"].value("range_gate", cfg.range_gate);
    }
    cfg.epoch_cap = j.value("epoch_cap", cfg.epoch_cap);
    if (j.contains("reg_weights")) {
      const auto& r = j["reg_weights"];
      cfg.dense_penalty_scale =
          r.value("dense_penalty_scale", cfg.dense_penalty_scale);
      cfg.range_term = r.value("range_term", cfg.range_term);
      cfg.clip_var_term = r.value("clip_var_term", cfg.clip_var_term);
    }
    if (j.contains("dry_patch")) {
      cfg.dry_patch_row = j["dry_patch"].value("row", 0);
      cfg.dry_patch_col = j["dry_patch"].value("col", 0);
    }
    cfg.stratum_count = j.value("stratum_count", cfg.stratum_count);
    cfg.max_gap_days = j.value("max_gap_days", cfg.max_gap_days);
  } catch (const json::exception& e) {
    throw InvalidInput("train config: " + std::string(e.what()));
  }
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg, std::uint64_t seed) {
  json j;
  j["lr"] = cfg.lr;
  j["split_fraction"] = cfg.split_fraction;
  j["batch_fraction"] = cfg.batch_fraction;
  j["threshold_grid"] = {{"start", cfg.threshold_start},
                         {"stop", cfg.threshold_stop},
                         {"step", cfg.threshold_step}};
  j["early_stop"] = {{"patience", cfg.patience},
                     {"range_gate", cfg.range_gate}};
  j["epoch_cap"] = cfg.epoch_cap;
  j["reg_weights"] = {{"dense_penalty_scale", cfg.dense_penalty_scale},
                      {"range_term", cfg.range_term},
                      {"clip_var_term", cfg.clip_var_term}};
  j["dry_patch"] = {{"row", cfg.dry_patch_row}, {"col", cfg.dry_patch_col}};
  j["stratum_count"] = cfg.stratum_count;
  j["max_gap_days"] = cfg.max_gap_days;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const GlobalOpts& opts) {
  return run_guarded(opts, "synth", [&] {
    ManifestTimer timer;
    SiteSpec spec = SiteSpec::from_json(read_text_file(spec_path));
    if (opts.seed_override) spec.seed = *opts.seed_override;
    Site site = generate_site(spec);
    write_site(site, out_dir);
    log(opts, 1, "synth: wrote " + std::to_string(site.series.scenes.size()) +
                     " scene(s) to " + out_dir);
    write_manifest((fs::path(out_dir) / "manifest.json").string(), "synth",
                   spec_path, spec.seed, {spec_path},
                   {out_dir + "/sitespec.json", out_dir + "/gauge.csv",
                    out_dir + "/dtm.json", out_dir + "/scenes"},
                   timer);
  });
}

int cmd_train(const std::string& site_dir, const std::string& config_path,
              const std::string& out_dir, const GlobalOpts& opts) {
  return run_guarded(opts, "train", [&] {
    ManifestTimer timer;
    TrainConfig cfg;
    std::uint64_t seed = 42;
    if (!config_path.empty()) {
      const auto text = read_text_file(config_path);
      cfg = train_config_from_json(text);
      const auto j = json::parse(text);
      seed = j.value("seed", seed);
    }
    if (opts.seed_override) seed = *opts.seed_override;

    LoadedSite site = load_site(site_dir, cfg.max_gap_days);
    for (const auto& s : site.series.scenes) s.validate(true);
    for (const Date& d : site.dropped)
      log(opts, 1, "train: dropped scene " + d.to_string() +
                       " (no gauge entry within " +
                       std::to_string(cfg.max_gap_days) + " days)");

    log(opts, 1, "train: " + std::to_string(site.series.scenes.size()) +
                     " scenes, seed " + std::to_string(seed));
    TrainResult result = train(site.series, cfg, seed);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
      ad::AdamState<float> adam_scalars;
      adam_scalars.lr = cfg.lr;
      adam_scalars.step_count =
          static_cast<long>(result.reports.size());
      save_checkpoint(result.model, adam_scalars, (dir / "model.json").string());
    }
    {
      std::ofstream csv(dir / "losses.csv", std::ios::trunc);
      if (!csv) throw IoError("cannot write losses.csv");
      csv << "epoch,train_loss,val_loss,mask_range,reg_dense,reg_range,reg_clip\n";
      for (const auto& r : result.reports)
        csv << r.epoch << ',' << fmt_double(r.train_loss) << ','
            << fmt_double(r.val_loss) << ',' << fmt_double(r.mask_range) << ','
            << fmt_double(r.reg_dense) << ',' << fmt_double(r.reg_range) << ','
            << fmt_double(r.reg_clip) << '\n';
    }
    {
      std::ofstream split(dir / "split.csv", std::ios::trunc);
      if (!split) throw IoError("cannot write split.csv");
      split << "date,role\n";
      std::set<int> val(result.val_indices.begin(), result.val_indices.end());
      for (std::size_t i = 0; i < site.series.scenes.size(); ++i)
        split << site.series.scenes[i].date.to_string() << ','
              << (val.count(static_cast<int>(i)) ? "test" : "train") << '\n';
    }
    {
      std::ofstream cfg_out(dir / "train_config.json", std::ios::trunc);
      cfg_out << train_config_to_json(cfg, seed);
    }
    const auto& last = result.reports.back();
    log(opts, 1, "train: " + std::to_string(result.reports.size()) +
                     " epoch(s), final val_loss " + fmt_double(last.val_loss));
    write_manifest((dir / "manifest.json").string(), "train", config_path,
                   seed, {site_dir},
                   {out_dir + "/model.json", out_dir + "/losses.csv",
                    out_dir + "/split.csv"},
                   timer);
  });
}

int cmd_infer(const std::string& checkpoint_path, const std::string& site_dir,
              const std::string& out_dir, const std::string& thresholds,
              const GlobalOpts& opts) {
  return run_guarded(opts, "infer", [&] {
    ManifestTimer timer;
    Checkpoint ck = load_checkpoint(checkpoint_path);
    std::vector<double> grid;
    if (!thresholds.empty()) grid = parse_thresholds(thresholds);

    LoadedSite site = load_site(site_dir, /*max_gap_days=*/4);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    for (const auto& scene : site.series.scenes) {
      const SoftMask soft = infer(ck.model, scene);
      GridStack mask_stack;
      mask_stack.date = scene.date;
      mask_stack.crs_note = scene.crs_note;
      mask_stack.bands["SOFT"] = soft.values;
      write_gridstack(mask_stack,
                      (dir / ("soft_" + scene.date.to_string())).string());
      for (double t : grid) {
        GridStack hard_stack;
        hard_stack.date = scene.date;
        hard_stack.crs_note = scene.crs_note;
        hard_stack.bands["MASK"] = harden(soft, t).values;
        write_gridstack(hard_stack,
                        (dir / ("hard_" + fmt_threshold(t) + "_" +
                                scene.date.to_string()))
                            .string());
      }
    }
    log(opts, 1, "infer: wrote soft masks for " +
                     std::to_string(site.series.scenes.size()) + " scene(s)");
    write_manifest((dir / "manifest.json").string(), "infer", checkpoint_path,
                   0, {checkpoint_path, site_dir}, {out_dir}, timer);
  });
}

namespace {

std::vector<ReferenceMask> build_references(const LoadedSite& site,
                                            const std::string& mode,
                                            const ValidateOpts& vopts) {
  std::vector<ReferenceMask> refs;
  for (std::size_t i = 0; i < site.series.scenes.size(); ++i) {
    const GridStack& scene = site.series.scenes[i];
    ReferenceMask ref;
    if (mode == "truth") {
      ref.reference.values = scene.band(kBandRefWater);
      ref.valid = BinaryMask::filled(scene.height(), scene.width(), 1.0f);
    } else if (mode == "dtm") {
      if (!site.dtm) throw InvalidInput("validate: site has no dtm raster");
      const double elevation_asl =
          site.series.elevation_of_scene(static_cast<int>(i)) +
          site.series.gauge.gauge_zero;
      ref.reference = dtm_water_mask(*site.dtm, elevation_asl);
      ref.valid = dtm_valid_mask(*site.dtm);
      if (vopts.roi) {
        const auto [r0, c0, r1, c1] = *vopts.roi;
        for (int r = 0; r < ref.valid.height(); ++r)
          for (int c = 0; c < ref.valid.width(); ++c)
            if (r < r0 || r >= r1 || c < c0 || c >= c1)
              ref.valid.values.at(r, c) = 0.0f;
      }
    } else if (mode == "mndwi") {
      const Grid& mndwi_band = scene.band(kBandMNDWI);
      const BinaryMask* cloud = nullptr;
      BinaryMask cloud_storage;
      if (scene.has(kBandCloud)) {
        cloud_storage.values = scene.band(kBandCloud);
        cloud = &cloud_storage;
      }
      auto result =
          mndwi_water_mask(mndwi_band, cloud, vopts.mndwi_threshold);
      ref.reference = std::move(result.water);
      ref.valid = std::move(result.valid);
    } else {
      throw InvalidInput("validate: mode must be dtm, mndwi, or truth");
    }
    refs.push_back(std::move(ref));
  }
  return refs;
}

}  // namespace

int cmd_validate(const std::string& pred_dir, const std::string& site_dir,
                 const std::string& mode, const std::string& out_csv,
                 const ValidateOpts& vopts, const GlobalOpts& opts) {
  return run_guarded(opts, "validate", [&] {
    ManifestTimer timer;
    LoadedSite site = load_site(site_dir, vopts.max_gap_days);

    std::map<std::string, GridStack> predictions;
    for (const auto& stem : sorted_stack_stems(pred_dir, "soft_")) {
      GridStack stack = read_gridstack(stem);
      predictions.emplace(stack.date.to_string(), std::move(stack));
    }
    if (predictions.empty())
      throw InvalidInput("validate: no soft_*.json predictions in " + pred_dir);

    // align predictions and references by date
    std::vector<SoftMask> soft;
    std::vector<int> scene_indices;
    for (std::size_t i = 0; i < site.series.scenes.size(); ++i) {
      const auto key = site.series.scenes[i].date.to_string();
      auto it = predictions.find(key);
      if (it == predictions.end()) continue;
      SoftMask m;
      m.source_date = it->second.date;
      m.values = it->second.band("SOFT");
      soft.push_back(std::move(m));
      scene_indices.push_back(static_cast<int>(i));
    }
    if (soft.empty())
      throw InvalidInput("validate: no prediction dates align with the site");

    auto all_refs = build_references(site, mode, vopts);
    std::vector<ReferenceMask> refs;
    for (int idx : scene_indices) refs.push_back(all_refs[idx]);

    std::vector<double> thresholds =
        parse_thresholds(vopts.thresholds.empty() ? "0.1:0.55:0.05"
                                                  : vopts.thresholds);

    const auto table = threshold_sweep(soft, refs, thresholds);

    fs::create_directories(fs::path(out_csv).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_csv).parent_path());
    std::ofstream csv(out_csv, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + out_csv);
    csv << "date,threshold,iou_water,iou_nonwater,valid_fraction\n";
    for (double t : thresholds) {
      for (std::size_t i = 0; i < soft.size(); ++i) {
        MaskPair pair{harden(soft[i], t), refs[i].reference, refs[i].valid};
        bool any_valid = false;
        for (float v : pair.valid.values.values)
          if (v != 0.0f) {
            any_valid = true;
            break;
          }
        if (!any_valid) continue;
        const IouReport rep = iou(pair);
        csv << soft[i].source_date.to_string() << ',' << fmt_threshold(t)
            << ',' << fmt_double(rep.iou_water) << ','
            << fmt_double(rep.iou_nonwater) << ','
            << fmt_double(rep.valid_fraction) << '\n';
      }
    }
    for (const auto& row : table)
      csv << "MEAN," << fmt_threshold(row.threshold) << ','
          << fmt_double(row.iou_water) << ',' << fmt_double(row.iou_nonwater)
          << ',' << fmt_double(row.valid_fraction) << '\n';

    // contingency maps at the best mean-IoU threshold
    const auto best = std::max_element(
        table.begin(), table.end(), [](const SweepRow& a, const SweepRow& b) {
          if (a.iou_mean != b.iou_mean) return a.iou_mean < b.iou_mean;
          return b.threshold < a.threshold;  // ties: lower threshold
        });
    const fs::path cont_dir = fs::path(out_csv).parent_path() / "contingency";
    fs::create_directories(cont_dir);
    for (std::size_t i = 0; i < soft.size(); ++i) {
      MaskPair pair{harden(soft[i], best->threshold), refs[i].reference,
                    refs[i].valid};
      const Grid cont = contingency_map(pair);
      GridStack stack;
      stack.date = soft[i].source_date;
      stack.crs_note = "contingency vs " + mode;
      stack.bands[kBandContingency] = cont;
      const std::string stem =
          (cont_dir / ("cont_" + fmt_threshold(best->threshold) + "_" +
                       soft[i].source_date.to_string()))
              .string();
      write_gridstack(stack, stem);
      write_contingency_png(cont, stem + ".png");
    }

    log(opts, 1, "validate: best threshold " + fmt_threshold(best->threshold) +
                     " mean IoU " + fmt_double(best->iou_mean));
    write_manifest(out_csv + ".manifest.json", "validate", mode, 0,
                   {pred_dir, site_dir}, {out_csv, cont_dir.string()}, timer);
  });
}

int cmd_benchmark(const std::string& site_dir, const std::string& methods,
                  const std::string& band, const std::string& out_dir,
                  const GlobalOpts& opts) {
  return run_guarded(opts, "benchmark", [&] {
    ManifestTimer timer;
    if (band != kBandVV && band != kBandVH)
      throw InvalidInput("benchmark: band must be VV or VH");
    std::vector<std::string> method_list;
    {
      std::stringstream ss(methods);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) method_list.push_back(item);
    }
    if (method_list.empty())
      throw InvalidInput("benchmark: no methods given");
    const std::set<std::string> known{"otsu", "chanvese", "gmm", "spectral"};
    for (const auto& m : method_list)
      if (!known.count(m))
        throw InvalidInput("benchmark: unknown method '" + m + "'");

    const std::uint64_t seed =
        opts.seed_override ? *opts.seed_override : 20u;
    LoadedSite site = load_site(site_dir, /*max_gap_days=*/4);

    // reference sets available on this site
    std::vector<std::pair<std::string, std::vector<ReferenceMask>>> ref_sets;
    ValidateOpts no_vopts;
    if (!site.series.scenes.empty() &&
        site.series.scenes[0].has(kBandRefWater))
      ref_sets.emplace_back("truth",
                            build_references(site, "truth", no_vopts));
    if (site.dtm)
      ref_sets.emplace_back("dtm", build_references(site, "dtm", no_vopts));
    if (!site.series.scenes.empty() && site.series.scenes[0].has(kBandMNDWI))
      ref_sets.emplace_back("mndwi",
                            build_references(site, "mndwi", no_vopts));
    if (ref_sets.empty())
      throw InvalidInput("benchmark: site has no reference data");

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    std::ofstream details(dir / "benchmark_details.csv", std::ios::trunc);
    details << "method,band,reference,date,iou_water,iou_nonwater,"
               "valid_fraction\n";

    struct Agg {
      double iou_water = 0.0, iou_nonwater = 0.0;
      int n = 0;
    };
    std::map<std::pair<std::string, std::string>, Agg> agg;

    for (const auto& method : method_list) {
      fs::create_directories(dir / method);
      for (std::size_t i = 0; i < site.series.scenes.size(); ++i) {
        const GridStack& scene = site.series.scenes[i];
        const Grid db = to_db(scene.band(band));
        BinaryMask mask;
        if (method == "otsu") {
          mask = otsu_segment(db);
        } else if (method == "chanvese") {
          mask = chan_vese_segment(db, ChanVeseConfig{});
        } else if (method == "gmm") {
          mask = gmm_segment(db, 2, seed + i).mask;
        } else {
          SpectralConfig cfg;
          cfg.seed = seed + i;
          mask = spectral_segment(db, cfg);
        }

        GridStack mask_stack;
        mask_stack.date = scene.date;
        mask_stack.crs_note = method + " on " + band;
        mask_stack.bands["MASK"] = mask.values;
        write_gridstack(mask_stack,
                        (dir / method / ("mask_" + scene.date.to_string()))
                            .string());

        for (const auto& [ref_name, refs] : ref_sets) {
          MaskPair pair{mask, refs[i].reference, refs[i].valid};
          bool any_valid = false;
          for (float v : pair.valid.values.values)
            if (v != 0.0f) {
              any_valid = true;
              break;
            }
          if (!any_valid) continue;
          const IouReport rep = iou(pair);
          details << method << ',' << band << ',' << ref_name << ','
                  << scene.date.to_string() << ',' << fmt_double(rep.iou_water)
                  << ',' << fmt_double(rep.iou_nonwater) << ','
                  << fmt_double(rep.valid_fraction) << '\n';
          auto& a = agg[{method, ref_name}];
          a.iou_water += rep.iou_water;
          a.iou_nonwater += rep.iou_nonwater;
          ++a.n;
        }
      }
    }

    std::ofstream csv(dir / "benchmark.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write benchmark.csv");
    csv << "method,band,reference,iou_water,iou_nonwater,iou_mean,dates\n";
    for (const auto& [key, a] : agg) {
      const double iw = a.n ? a.iou_water / a.n : 0.0;
      const double in_ = a.n ? a.iou_nonwater / a.n : 0.0;
      csv << key.first << ',' << band << ',' << key.second << ','
          << fmt_double(iw) << ',' << fmt_double(in_) << ','
          << fmt_double(0.5 * (iw + in_)) << ',' << a.n << '\n';
    }

    log(opts, 1, "benchmark: " + std::to_string(method_list.size()) +
                     " method(s) on band " + band);
    write_manifest((dir / "manifest.json").string(), "benchmark", methods,
                   seed, {site_dir}, {out_dir + "/benchmark.csv"}, timer);
  });
}

}  // namespace hydrocorr::cli
