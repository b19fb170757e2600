#pragma once

#include <cstdint>
#include <vector>

#include "hydrocorr/grid.hpp"

namespace hydrocorr {

// All four benchmark segmenters consume one dB-scale band and label the
// lower-backscatter class as water (code 1). Each is a pure function of
// (grid, config, seed).

// Otsu: 256-bin histogram over [min,max]; returns the bin edge maximizing
// between-class variance, ties toward the lower threshold. Throws
// InvalidInput on a constant image.
inline constexpr int kOtsuBins = 256;
double otsu_threshold(const Grid& grid);
BinaryMask otsu_segment(const Grid& grid);

struct ChanVeseConfig {
  double mu = 0.25;  // contour-length weight (image normalized to [0,1])
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int max_iters = 200;
  double tol = 1e-4;  // energy-change stop tolerance
  int checkerboard_period = 5;
};

// Two-phase piecewise-constant segmentation by alternating minimization:
// exact region-mean updates and ICM label sweeps against the discrete
// energy lambda1*sum_in (u-c1)^2 + lambda2*sum_out (u-c2)^2 + mu*perimeter.
// The energy sequence (one entry per sweep, reported via `energy_trace`)
// is non-increasing.
BinaryMask chan_vese_segment(const Grid& grid, const ChanVeseConfig& config,
                             std::vector<double>* energy_trace = nullptr);

struct GmmParams {
  int component_count = 2;
  std::vector<double> weights;    // sum to 1
  std::vector<double> means;
  std::vector<double> variances;  // floored at kGmmVarianceFloor
};
inline constexpr double kGmmVarianceFloor = 1e-6;

struct GmmResult {
  BinaryMask mask;
  GmmParams params;
  std::vector<double> log_likelihood;  // per-sample mean, one entry per iter
};

// 1-D EM, quantile-initialized means, max-posterior assignment.
GmmResult gmm_segment(const Grid& grid, int component_count,
                      std::uint64_t seed);

struct SpectralConfig {
  int sample_count = 384;
  int knn_k = 12;
  double sigma = 0.15;         // intensity bandwidth (min-max normalized)
  double sigma_spatial = 0.75; // bandwidth on normalized row/col distance
  std::uint64_t seed = 0;
};

// Subsample pixels (intensity + normalized row/col features), build a k-NN
// Gaussian affinity graph (MST-augmented if disconnected), split on the
// normalized-Laplacian second eigenvector by the minimum-Ncut threshold,
// then propagate labels to all pixels by nearest sampled neighbor.
BinaryMask spectral_segment(const Grid& grid, const SpectralConfig& config);

// Internal spectral step, exposed for the brute-force normalized-cut oracle:
// labels (0/1) for a symmetric nonnegative affinity matrix.
std::vector<int> spectral_bipartition(const std::vector<double>& affinity,
                                      int n);
double normalized_cut_value(const std::vector<double>& affinity, int n,
                            const std::vector<int>& labels);

}  // namespace hydrocorr
