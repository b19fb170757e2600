#include "hydrocorr/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hydrocorr/error.hpp"
#include "hydrocorr/rng.hpp"

namespace hydrocorr {

namespace {

std::vector<double> finite_values(const Grid& grid) {
  std::vector<double> out;
  out.reserve(grid.values.size());
  for (float v : grid.values)
    if (!grid.is_nodata(v) && std::isfinite(v))
      out.push_back(static_cast<double>(v));
  if (out.empty()) throw InvalidInput("no finite pixels in grid");
  return out;
}

}  // namespace

// --- Otsu -------------------------------------------------------------------

double otsu_threshold(const Grid& grid) {
  grid.validate();
  const auto vals = finite_values(grid);
  const auto [mn_it, mx_it] = std::minmax_element(vals.begin(), vals.end());
  const double mn = *mn_it, mx = *mx_it;
  if (!(mx > mn)) throw InvalidInput("otsu_threshold: constant image");

  std::vector<std::int64_t> hist(kOtsuBins, 0);
  for (double v : vals) {
    int b = static_cast<int>((v - mn) / (mx - mn) * kOtsuBins);
    if (b >= kOtsuBins) b = kOtsuBins - 1;
    ++hist[b];
  }
  // bin centers as class values
  std::vector<double> center(kOtsuBins);
  for (int b = 0; b < kOtsuBins; ++b)
    center[b] = mn + (b + 0.5) * (mx - mn) / kOtsuBins;

  const double total = static_cast<double>(vals.size());
  double sum_all = 0.0;
  for (int b = 0; b < kOtsuBins; ++b) sum_all += center[b] * hist[b];

  double w0 = 0.0, sum0 = 0.0;
  double best_var = -1.0;
  int best_bin = -1;
  for (int k = 0; k < kOtsuBins - 1; ++k) {
    w0 += hist[k];
    sum0 += center[k] * hist[k];
    const double w1 = total - w0;
    if (w0 <= 0.0 || w1 <= 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best_var) {  // strict: ties keep the lower threshold
      best_var = between;
      best_bin = k;
    }
  }
  if (best_bin < 0) throw InvalidInput("otsu_threshold: constant image");
  return mn + (best_bin + 1) * (mx - mn) / kOtsuBins;
}

BinaryMask otsu_segment(const Grid& grid) {
  const double t = otsu_threshold(grid);
  BinaryMask mask;
  mask.values = Grid::filled(grid.height, grid.width, 0.0f);
  mask.values.nodata.reset();
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    const float v = grid.values[i];
    if (grid.is_nodata(v) || !std::isfinite(v)) continue;
    // water is the low-backscatter class
    mask.values.values[i] = (static_cast<double>(v) < t) ? 1.0f : 0.0f;
  }
  return mask;
}

// --- Chan-Vese ---------------------------------------------------------------

namespace {

double chanvese_energy(const std::vector<double>& u, int h, int w,
                       const std::vector<std::uint8_t>& label, double c1,
                       double c2, const ChanVeseConfig& cfg) {
  double region = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d1 = u[i] - c1, d2 = u[i] - c2;
    region += label[i] ? cfg.lambda1 * d1 * d1 : cfg.lambda2 * d2 * d2;
  }
  std::int64_t perimeter = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (c + 1 < w && label[i] != label[i + 1]) ++perimeter;
      if (r + 1 < h && label[i] != label[i + w]) ++perimeter;
    }
  return region + cfg.mu * static_cast<double>(perimeter);
}

}  // namespace

BinaryMask chan_vese_segment(const Grid& grid, const ChanVeseConfig& config,
                             std::vector<double>* energy_trace) {
  grid.validate();
  if (config.max_iters < 1 || !(config.tol > 0.0))
    throw InvalidInput("chan_vese: max_iters >= 1 and tol > 0 required");
  const int h = grid.height, w = grid.width;
  const std::size_t n = grid.values.size();

  // normalize intensities to [0,1]; the defaults assume that scale
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (float v : grid.values)
    if (!grid.is_nodata(v) && std::isfinite(v)) {
      mn = std::min(mn, static_cast<double>(v));
      mx = std::max(mx, static_cast<double>(v));
    }
  if (!(mx > mn)) return BinaryMask::filled(h, w, 0.0f);  // constant: all land
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = grid.values[i];
    u[i] = (grid.is_nodata(v) || !std::isfinite(v))
               ? 0.5
               : (static_cast<double>(v) - mn) / (mx - mn);
  }

  // checkerboard level-set sign pattern as the initial labeling
  std::vector<std::uint8_t> label(n);
  const double period = config.checkerboard_period;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double phi = std::sin(M_PI * r / period) * std::sin(M_PI * c / period);
      label[static_cast<std::size_t>(r) * w + c] = phi > 0.0 ? 1 : 0;
    }

  double c1 = 0.0, c2 = 0.0;
  double prev_energy = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iters; ++iter) {
    // exact region means
    double s1 = 0.0, s2 = 0.0;
    std::int64_t n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (label[i]) {
        s1 += u[i];
        ++n1;
      } else {
        s2 += u[i];
        ++n2;
      }
    const double overall = (s1 + s2) / static_cast<double>(n);
    c1 = n1 ? s1 / n1 : overall;
    c2 = n2 ? s2 / n2 : overall;

    // ICM sweep: flip a label when it strictly lowers the energy
    bool changed = false;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        const double d1 = u[i] - c1, d2 = u[i] - c2;
        const double cost_in = config.lambda1 * d1 * d1;
        const double cost_out = config.lambda2 * d2 * d2;
        int deg = 0, disagree = 0;
        auto look = [&](int rr, int cc) {
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) return;
          ++deg;
          if (label[static_cast<std::size_t>(rr) * w + cc] != label[i])
            ++disagree;
        };
        look(r - 1, c);
        look(r + 1, c);
        look(r, c - 1);
        look(r, c + 1);
        const double cur = (label[i] ? cost_in : cost_out) +
                           config.mu * disagree;
        const double alt = (label[i] ? cost_out : cost_in) +
                           config.mu * (deg - disagree);
        if (alt < cur) {
          label[i] = label[i] ? 0 : 1;
          changed = true;
        }
      }

    const double energy = chanvese_energy(u, h, w, label, c1, c2, config);
    if (energy_trace) energy_trace->push_back(energy);
    if (!changed || std::abs(prev_energy - energy) < config.tol) break;
    prev_energy = energy;
  }

  // orientation: water = region with the strictly lower mean
  double s1 = 0.0, s2 = 0.0;
  std::int64_t n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (label[i]) {
      s1 += u[i];
      ++n1;
    } else {
      s2 += u[i];
      ++n2;
    }
  BinaryMask mask;
  mask.values = Grid::filled(h, w, 0.0f);
  if (n1 == 0 || n2 == 0) return mask;  // one region empty: all land
  const double m1 = s1 / n1, m2 = s2 / n2;
  if (m1 == m2) return mask;
  const std::uint8_t water_label = m1 < m2 ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i)
    mask.values.values[i] = (label[i] == water_label) ? 1.0f : 0.0f;
  return mask;
}

// --- GMM ----------------------------------------------------------------------

GmmResult gmm_segment(const Grid& grid, int component_count,
                      std::uint64_t seed) {
  (void)seed;  // quantile init keeps EM fully deterministic
  grid.validate();
  if (component_count < 1)
    throw InvalidInput("gmm_segment: component_count must be >= 1");
  const auto samples = finite_values(grid);
  const auto n = static_cast<double>(samples.size());

  GmmParams p;
  p.component_count = component_count;
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  double mean_all = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double var_all = 0.0;
  for (double v : sorted) var_all += (v - mean_all) * (v - mean_all);
  var_all = std::max(var_all / n, kGmmVarianceFloor);
  for (int c = 0; c < component_count; ++c) {
    const std::size_t q = static_cast<std::size_t>(
        (c + 0.5) / component_count * (sorted.size() - 1));
    p.means.push_back(sorted[q]);
    p.variances.push_back(var_all);
    p.weights.push_back(1.0 / component_count);
  }

  const int M = component_count;
  std::vector<double> resp(samples.size() * M);
  GmmResult result;
  constexpr double kLogTwoPi = 1.8378770664093453;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    // E step with log-sum-exp
    double ll = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double logp[16];
      double best = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < M; ++c) {
        const double d = samples[i] - p.means[c];
        logp[c] = std::log(p.weights[c]) -
                  0.5 * (kLogTwoPi + std::log(p.variances[c])) -
                  0.5 * d * d / p.variances[c];
        best = std::max(best, logp[c]);
      }
      double z = 0.0;
      for (int c = 0; c < M; ++c) z += std::exp(logp[c] - best);
      const double logz = best + std::log(z);
      ll += logz;
      for (int c = 0; c < M; ++c)
        resp[i * M + c] = std::exp(logp[c] - logz);
    }
    ll /= n;  // per-sample mean log-likelihood
    result.log_likelihood.push_back(ll);

    // M step
    for (int c = 0; c < M; ++c) {
      double rsum = 0.0, msum = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        rsum += resp[i * M + c];
        msum += resp[i * M + c] * samples[i];
      }
      if (rsum < 1e-12) {
        p.weights[c] = 1e-12;
        continue;
      }
      const double mean = msum / rsum;
      double vsum = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i] - mean;
        vsum += resp[i * M + c] * d * d;
      }
      p.weights[c] = rsum / n;
      p.means[c] = mean;
      p.variances[c] = std::max(vsum / rsum, kGmmVarianceFloor);
    }
    double wz = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
    for (auto& wv : p.weights) wv /= wz;

    if (std::abs(ll - prev_ll) < 1e-6) break;
    prev_ll = ll;
  }

  // max-posterior assignment on the full grid; water = lower-mean component
  int water_comp = -1;
  {
    int lo = 0;
    for (int c = 1; c < M; ++c)
      if (p.means[c] < p.means[lo]) lo = c;
    bool strictly_lower = false;
    for (int c = 0; c < M; ++c)
      if (c != lo && p.means[lo] < p.means[c]) strictly_lower = true;
    if (M > 1 && strictly_lower) water_comp = lo;
  }

  BinaryMask mask;
  mask.values = Grid::filled(grid.height, grid.width, 0.0f);
  if (water_comp >= 0) {
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
      const float v = grid.values[i];
      if (grid.is_nodata(v) || !std::isfinite(v)) continue;
      int best = 0;
      double bestp = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < M; ++c) {
        const double d = static_cast<double>(v) - p.means[c];
        const double lp = std::log(p.weights[c]) -
                          0.5 * std::log(p.variances[c]) -
                          0.5 * d * d / p.variances[c];
        if (lp > bestp) {
          bestp = lp;
          best = c;
        }
      }
      mask.values.values[i] = best == water_comp ? 1.0f : 0.0f;
    }
  }
  result.mask = std::move(mask);
  result.params = std::move(p);
  return result;
}

// --- Spectral clustering --------------------------------------------------------

double normalized_cut_value(const std::vector<double>& affinity, int n,
                            const std::vector<int>& labels) {
  double cut = 0.0, vol0 = 0.0, vol1 = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = affinity[static_cast<std::size_t>(i) * n + j];
      if (labels[i] == 0)
        vol0 += w;
      else
        vol1 += w;
      if (j > i && labels[i] != labels[j]) cut += w;
    }
  if (vol0 <= 0.0 || vol1 <= 0.0)
    return std::numeric_limits<double>::infinity();
  return cut / vol0 + cut / vol1;
}

std::vector<int> spectral_bipartition(const std::vector<double>& affinity,
                                      int n) {
  if (n < 2) throw InvalidInput("spectral_bipartition: need >= 2 samples");
  Eigen::MatrixXd W(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      W(i, j) = affinity[static_cast<std::size_t>(i) * n + j];

  Eigen::VectorXd deg = W.rowwise().sum();
  Eigen::VectorXd dinv_sqrt(n);
  for (int i = 0; i < n; ++i)
    dinv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  Eigen::MatrixXd lsym =
      Eigen::MatrixXd::Identity(n, n) -
      dinv_sqrt.asDiagonal() * W * dinv_sqrt.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lsym);
  if (solver.info() != Eigen::Success)
    throw InvalidInput("spectral_bipartition: eigensolve failed");
  // Shi-Malik indicator: x = D^{-1/2} u_2
  Eigen::VectorXd embed = dinv_sqrt.asDiagonal() * solver.eigenvectors().col(1);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (embed(a) != embed(b)) return embed(a) < embed(b);
    return a < b;
  });

  // best threshold along the sorted second eigenvector
  std::vector<int> labels(n, 0), best_labels;
  double best_ncut = std::numeric_limits<double>::infinity();
  for (int split = 1; split < n; ++split) {
    for (int i = 0; i < n; ++i) labels[i] = 0;
    for (int i = 0; i < split; ++i) labels[order[i]] = 1;
    const double nc = normalized_cut_value(affinity, n, labels);
    if (nc < best_ncut) {
      best_ncut = nc;
      best_labels = labels;
    }
  }
  if (best_labels.empty()) best_labels.assign(n, 0);
  return best_labels;
}

BinaryMask spectral_segment(const Grid& grid, const SpectralConfig& config) {
  grid.validate();
  if (config.sample_count < 2 || config.knn_k < 1 || !(config.sigma > 0.0) ||
      !(config.sigma_spatial > 0.0))
    throw InvalidInput("spectral_segment: invalid config");
  const int h = grid.height, w = grid.width;

  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (float v : grid.values)
    if (!grid.is_nodata(v) && std::isfinite(v)) {
      mn = std::min(mn, static_cast<double>(v));
      mx = std::max(mx, static_cast<double>(v));
    }
  if (!std::isfinite(mn)) throw InvalidInput("no finite pixels in grid");
  if (!(mx > mn)) return BinaryMask::filled(h, w, 0.0f);  // constant: all land

  // intensity feature: 3x3 local median of the normalized image. Speckle
  // outliers otherwise act as bridges between the intensity modes and drag
  // the minimum normalized cut away from the water/land split; the median
  // removes them without inventing intermediate values at class edges.
  std::vector<double> smooth(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double window[9];
      int cnt = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const float v = grid.values[static_cast<std::size_t>(rr) * w + cc];
          if (grid.is_nodata(v) || !std::isfinite(v)) continue;
          window[cnt++] = (static_cast<double>(v) - mn) / (mx - mn);
        }
      if (cnt == 0) {
        smooth[static_cast<std::size_t>(r) * w + c] = 0.5;
      } else {
        std::sort(window, window + cnt);
        smooth[static_cast<std::size_t>(r) * w + c] = window[cnt / 2];
      }
    }

  auto feature_of = [&](int idx) {
    const int r = idx / w, c = idx % w;
    return std::array<double, 3>{smooth[idx],
                                 h > 1 ? static_cast<double>(r) / (h - 1) : 0.0,
                                 w > 1 ? static_cast<double>(c) / (w - 1) : 0.0};
  };

  // seeded subsample without replacement
  std::vector<int> pixels(static_cast<std::size_t>(h) * w);
  std::iota(pixels.begin(), pixels.end(), 0);
  Rng rng(config.seed);
  rng.shuffle(pixels.begin(), pixels.end());
  const int ns = std::min<int>(config.sample_count,
                               static_cast<int>(pixels.size()));
  std::vector<int> sample(pixels.begin(), pixels.begin() + ns);
  std::sort(sample.begin(), sample.end());

  std::vector<std::array<double, 3>> feats(ns);
  for (int i = 0; i < ns; ++i) feats[i] = feature_of(sample[i]);

  // bandwidth-scaled squared distance: separate intensity and spatial
  // scales, Shi-Malik style, so a thin water strip is not out-cut by a
  // balanced spatial split
  const double wi = 1.0 / (config.sigma * config.sigma);
  const double ws = 1.0 / (config.sigma_spatial * config.sigma_spatial);
  auto dist2 = [&](int a, int b) {
    const double di = feats[a][0] - feats[b][0];
    const double dr = feats[a][1] - feats[b][1];
    const double dc = feats[a][2] - feats[b][2];
    return wi * di * di + ws * (dr * dr + dc * dc);
  };

  // symmetric k-NN Gaussian affinity
  std::vector<double> W(static_cast<std::size_t>(ns) * ns, 0.0);
  const double inv2s2 = 0.5;
  const int k = std::min(config.knn_k, ns - 1);
  std::vector<std::pair<double, int>> cand(ns);
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < ns; ++j) cand[j] = {dist2(i, j), j};
    std::partial_sort(cand.begin(), cand.begin() + k + 1, cand.end());
    for (int j = 0; j <= k; ++j) {
      const int nb = cand[j].second;
      if (nb == i) continue;
      const double a = std::exp(-cand[j].first * inv2s2);
      W[static_cast<std::size_t>(i) * ns + nb] = a;
      W[static_cast<std::size_t>(nb) * ns + i] = a;
    }
  }

  // connectivity check; MST augmentation if needed
  {
    std::vector<int> comp(ns, -1);
    int ncomp = 0;
    for (int i = 0; i < ns; ++i) {
      if (comp[i] >= 0) continue;
      std::vector<int> stack{i};
      comp[i] = ncomp;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        for (int j = 0; j < ns; ++j)
          if (W[static_cast<std::size_t>(cur) * ns + j] > 0.0 && comp[j] < 0) {
            comp[j] = ncomp;
            stack.push_back(j);
          }
      }
      ++ncomp;
    }
    if (ncomp > 1) {
      // Prim MST over the complete feature-distance graph; add the MST edges
      // that bridge components
      std::vector<double> best(ns, std::numeric_limits<double>::infinity());
      std::vector<int> parent(ns, -1);
      std::vector<bool> used(ns, false);
      best[0] = 0.0;
      for (int it = 0; it < ns; ++it) {
        int u = -1;
        for (int i = 0; i < ns; ++i)
          if (!used[i] && (u < 0 || best[i] < best[u])) u = i;
        used[u] = true;
        if (parent[u] >= 0 && comp[u] != comp[parent[u]]) {
          const double a =
              std::max(std::exp(-dist2(u, parent[u]) * inv2s2), 1e-12);
          W[static_cast<std::size_t>(u) * ns + parent[u]] = a;
          W[static_cast<std::size_t>(parent[u]) * ns + u] = a;
        }
        for (int vtx = 0; vtx < ns; ++vtx)
          if (!used[vtx]) {
            const double d = dist2(u, vtx);
            if (d < best[vtx]) {
              best[vtx] = d;
              parent[vtx] = u;
            }
          }
      }
    }
  }

  const std::vector<int> labels = spectral_bipartition(W, ns);

  // orientation on sample means of raw intensity
  double s0 = 0.0, s1 = 0.0;
  int n0 = 0, n1 = 0;
  for (int i = 0; i < ns; ++i) {
    const double v = grid.values[sample[i]];
    if (labels[i]) {
      s1 += v;
      ++n1;
    } else {
      s0 += v;
      ++n0;
    }
  }
  BinaryMask mask;
  mask.values = Grid::filled(h, w, 0.0f);
  if (n0 == 0 || n1 == 0) return mask;
  const double m0 = s0 / n0, m1 = s1 / n1;
  if (m0 == m1) return mask;
  const int water_label = m1 < m0 ? 1 : 0;

  // propagate by nearest sampled neighbor under the same scaled metric
  for (int idx = 0; idx < h * w; ++idx) {
    const auto f = feature_of(idx);
    int bi = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ns; ++i) {
      const double di = f[0] - feats[i][0];
      const double dr = f[1] - feats[i][1];
      const double dc = f[2] - feats[i][2];
      const double d = wi * di * di + ws * (dr * dr + dc * dc);
      if (d < bd) {
        bd = d;
        bi = i;
      }
    }
    mask.values.values[idx] = labels[bi] == water_label ? 1.0f : 0.0f;
  }
  return mask;
}

}  // namespace hydrocorr
