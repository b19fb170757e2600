#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hydrocorr/fpgnn.hpp"
#include "hydrocorr/synthgen.hpp"

namespace hydrocorr::cli {

// Exit codes: 0 success, 1 I/O, 2 invalid input, 3 unlearnable data.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitUnlearnable = 3;

struct GlobalOpts {
  int verbosity = 1;  // 0 quiet, 1 normal, 2 verbose
  std::optional<std::uint64_t> seed_override;  // HYDROCORR_SEED / --seed
};

// "start:stop:step" or a single value; values must lie in (0,1).
std::vector<double> parse_thresholds(const std::string& text);

// Site directory access (sitespec.json, gauge.csv, dtm.*, scenes/*.json).
struct LoadedSite {
  SceneSeries series;
  std::optional<Grid> dtm;
  std::optional<SiteSpec> spec;
  std::vector<Date> dropped;  // scene dates with no gauge match
};
LoadedSite load_site(const std::string& site_dir, int max_gap_days);
void write_site(const Site& site, const std::string& out_dir);

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg,
                                 std::uint64_t seed);

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const GlobalOpts& opts);
int cmd_train(const std::string& site_dir, const std::string& config_path,
              const std::string& out_dir, const GlobalOpts& opts);
int cmd_infer(const std::string& checkpoint_path, const std::string& site_dir,
              const std::string& out_dir, const std::string& thresholds,
              const GlobalOpts& opts);
struct ValidateOpts {
  std::string thresholds;          // empty -> the config default grid
  std::optional<double> mndwi_threshold;  // manual fallback
  std::optional<std::array<int, 4>> roi;  // r0,c0,r1,c1 (exclusive ends)
  int max_gap_days = 4;
};
int cmd_validate(const std::string& pred_dir, const std::string& site_dir,
                 const std::string& mode, const std::string& out_csv,
                 const ValidateOpts& vopts, const GlobalOpts& opts);
int cmd_benchmark(const std::string& site_dir, const std::string& methods,
                  const std::string& band, const std::string& out_dir,
                  const GlobalOpts& opts);

}  // namespace hydrocorr::cli
