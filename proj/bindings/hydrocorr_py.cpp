#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "hydrocorr/baselines.hpp"
#include "hydrocorr/cli.hpp"
#include "hydrocorr/fpgnn.hpp"
#include "hydrocorr/raster_io.hpp"
#include "hydrocorr/synthgen.hpp"
#include "hydrocorr/validation.hpp"

namespace py = pybind11;

namespace {

using hydrocorr::BinaryMask;
using hydrocorr::Grid;

Grid grid_from_array(const py::array_t<float, py::array::c_style |
                                                  py::array::forcecast>& arr) {
  if (arr.ndim() != 2)
    throw hydrocorr::InvalidInput("expected a 2-D array");
  Grid g;
  g.height = static_cast<int>(arr.shape(0));
  g.width = static_cast<int>(arr.shape(1));
  g.values.assign(arr.data(), arr.data() + arr.size());
  return g;
}

py::array_t<float> array_from_grid(const Grid& g) {
  py::array_t<float> out({g.height, g.width});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

BinaryMask mask_from_array(const py::array_t<float, py::array::c_style |
                                                        py::array::forcecast>& arr) {
  BinaryMask m;
  m.values = grid_from_array(arr);
  m.validate();
  return m;
}

BinaryMask valid_or_ones(const std::optional<py::array_t<
                             float, py::array::c_style | py::array::forcecast>>& valid,
                         int h, int w) {
  if (valid) return mask_from_array(*valid);
  return BinaryMask::filled(h, w, 1.0f);
}

}  // namespace

PYBIND11_MODULE(_hydrocorr, m) {
  m.doc() = "Unsupervised SAR water-extent mapping: correlation-trained "
            "network, classical baselines, and validation metrics";
  m.attr("__version__") = "0.1.0";

  py::register_exception<hydrocorr::IoError>(m, "IoError");
  py::register_exception<hydrocorr::InvalidInput>(m, "InvalidInputError");
  py::register_exception<hydrocorr::UnlearnableSeries>(m,
                                                       "UnlearnableSeriesError");

  m.def("pearson_loss", &hydrocorr::pearson_loss, py::arg("predicted"),
        py::arg("observed"),
        "1 - Pearson correlation coefficient of two equal-length vectors");

  m.def(
      "to_db",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr) { return array_from_grid(hydrocorr::to_db(grid_from_array(arr))); },
      py::arg("linear_power"), "10*log10(x) per pixel");
  m.def(
      "from_db",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr) {
        return array_from_grid(hydrocorr::from_db(grid_from_array(arr)));
      },
      py::arg("db"));

  m.def(
      "otsu_threshold",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr) { return hydrocorr::otsu_threshold(grid_from_array(arr)); },
      py::arg("image"));
  m.def(
      "otsu_segment",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr) {
        return array_from_grid(
            hydrocorr::otsu_segment(grid_from_array(arr)).values);
      },
      py::arg("image_db"), "water = the low-backscatter class");

  m.def(
      "chan_vese_segment",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr,
         double mu, double lambda1, double lambda2, int max_iters,
         double tol) {
        hydrocorr::ChanVeseConfig cfg;
        cfg.mu = mu;
        cfg.lambda1 = lambda1;
        cfg.lambda2 = lambda2;
        cfg.max_iters = max_iters;
        cfg.tol = tol;
        return array_from_grid(
            hydrocorr::chan_vese_segment(grid_from_array(arr), cfg).values);
      },
      py::arg("image_db"), py::arg("mu") = 0.25, py::arg("lambda1") = 1.0,
      py::arg("lambda2") = 1.0, py::arg("max_iters") = 200,
      py::arg("tol") = 1e-4);

  m.def(
      "gmm_segment",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr,
         int components, std::uint64_t seed) {
        auto result =
            hydrocorr::gmm_segment(grid_from_array(arr), components, seed);
        py::dict params;
        params["weights"] = result.params.weights;
        params["means"] = result.params.means;
        params["variances"] = result.params.variances;
        params["log_likelihood"] = result.log_likelihood;
        return py::make_tuple(array_from_grid(result.mask.values), params);
      },
      py::arg("image_db"), py::arg("components") = 2, py::arg("seed") = 0);

  m.def(
      "spectral_segment",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             arr,
         int sample_count, int knn_k, double sigma, std::uint64_t seed) {
        hydrocorr::SpectralConfig cfg;
        cfg.sample_count = sample_count;
        cfg.knn_k = knn_k;
        cfg.sigma = sigma;
        cfg.seed = seed;
        return array_from_grid(
            hydrocorr::spectral_segment(grid_from_array(arr), cfg).values);
      },
      py::arg("image_db"), py::arg("sample_count") = 384, py::arg("knn_k") = 12,
      py::arg("sigma") = 0.2, py::arg("seed") = 0);

  m.def(
      "mndwi",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             green,
         const py::array_t<float, py::array::c_style | py::array::forcecast>&
             swir) {
        return array_from_grid(
            hydrocorr::mndwi(grid_from_array(green), grid_from_array(swir)));
      },
      py::arg("green"), py::arg("swir"));

  m.def(
      "dtm_water_mask",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             dtm,
         double elevation_asl) {
        return array_from_grid(
            hydrocorr::dtm_water_mask(grid_from_array(dtm), elevation_asl)
                .values);
      },
      py::arg("dtm"), py::arg("elevation_asl"),
      "water wherever dtm < elevation_asl");

  m.def(
      "harden",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             soft,
         double threshold) {
        hydrocorr::SoftMask mask;
        mask.values = grid_from_array(soft);
        return array_from_grid(hydrocorr::harden(mask, threshold).values);
      },
      py::arg("soft_mask"), py::arg("threshold"),
      "water wherever value >= threshold");

  m.def(
      "iou",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             predicted,
         const py::array_t<float, py::array::c_style | py::array::forcecast>&
             reference,
         const std::optional<py::array_t<
             float, py::array::c_style | py::array::forcecast>>& valid) {
        hydrocorr::MaskPair pair;
        pair.predicted = mask_from_array(predicted);
        pair.reference = mask_from_array(reference);
        pair.valid = valid_or_ones(valid, pair.predicted.height(),
                                   pair.predicted.width());
        const auto rep = hydrocorr::iou(pair);
        py::dict out;
        out["iou_water"] = rep.iou_water;
        out["iou_nonwater"] = rep.iou_nonwater;
        out["iou_mean"] = rep.iou_mean;
        out["valid_fraction"] = rep.valid_fraction;
        return out;
      },
      py::arg("predicted"), py::arg("reference"),
      py::arg("valid") = std::nullopt);

  m.def(
      "contingency_map",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             predicted,
         const py::array_t<float, py::array::c_style | py::array::forcecast>&
             reference,
         const std::optional<py::array_t<
             float, py::array::c_style | py::array::forcecast>>& valid) {
        hydrocorr::MaskPair pair;
        pair.predicted = mask_from_array(predicted);
        pair.reference = mask_from_array(reference);
        pair.valid = valid_or_ones(valid, pair.predicted.height(),
                                   pair.predicted.width());
        return array_from_grid(hydrocorr::contingency_map(pair));
      },
      py::arg("predicted"), py::arg("reference"),
      py::arg("valid") = std::nullopt,
      "codes: 1=TP 2=TN 3=FP 4=FN 0=invalid");

  // pipeline commands, mirroring the CLI; each returns the exit code
  auto opts_of = [](int verbosity, std::optional<std::uint64_t> seed) {
    hydrocorr::cli::GlobalOpts opts;
    opts.verbosity = verbosity;
    opts.seed_override = seed;
    return opts;
  };
  m.def(
      "synth",
      [opts_of](const std::string& spec_path, const std::string& out_dir,
                std::optional<std::uint64_t> seed, int verbosity) {
        return hydrocorr::cli::cmd_synth(spec_path, out_dir,
                                         opts_of(verbosity, seed));
      },
      py::arg("spec_path"), py::arg("out_dir"), py::arg("seed") = std::nullopt,
      py::arg("verbosity") = 0);
  m.def(
      "train",
      [opts_of](const std::string& site_dir, const std::string& out_dir,
                const std::string& config_path,
                std::optional<std::uint64_t> seed, int verbosity) {
        return hydrocorr::cli::cmd_train(site_dir, config_path, out_dir,
                                         opts_of(verbosity, seed));
      },
      py::arg("site_dir"), py::arg("out_dir"), py::arg("config_path") = "",
      py::arg("seed") = std::nullopt, py::arg("verbosity") = 0);
  m.def(
      "infer",
      [opts_of](const std::string& checkpoint, const std::string& site_dir,
                const std::string& out_dir, const std::string& thresholds,
                int verbosity) {
        return hydrocorr::cli::cmd_infer(checkpoint, site_dir, out_dir,
                                         thresholds, opts_of(verbosity, {}));
      },
      py::arg("checkpoint"), py::arg("site_dir"), py::arg("out_dir"),
      py::arg("thresholds") = "", py::arg("verbosity") = 0);
  m.def(
      "validate",
      [opts_of](const std::string& pred_dir, const std::string& site_dir,
                const std::string& mode, const std::string& out_csv,
                const std::string& thresholds, int verbosity) {
        hydrocorr::cli::ValidateOpts vopts;
        vopts.thresholds = thresholds;
        return hydrocorr::cli::cmd_validate(pred_dir, site_dir, mode, out_csv,
                                            vopts, opts_of(verbosity, {}));
      },
      py::arg("pred_dir"), py::arg("site_dir"), py::arg("mode"),
      py::arg("out_csv"), py::arg("thresholds") = "", py::arg("verbosity") = 0);
  m.def(
      "benchmark",
      [opts_of](const std::string& site_dir, const std::string& out_dir,
                const std::string& methods, const std::string& band,
                std::optional<std::uint64_t> seed, int verbosity) {
        return hydrocorr::cli::cmd_benchmark(site_dir, methods, band, out_dir,
                                             opts_of(verbosity, seed));
      },
      py::arg("site_dir"), py::arg("out_dir"),
      py::arg("methods") = "otsu,chanvese,gmm,spectral", py::arg("band") = "VV",
      py::arg("seed") = std::nullopt, py::arg("verbosity") = 0);
}
