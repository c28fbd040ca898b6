#pragma once

// Candidate design synthesis: periodic Gaussian random fields thresholded to
// two phases on a quadrant, then mirrored to the full doubly-symmetric cell.
//
// The field is white noise filtered in Fourier space with a squared-
// exponential spectrum exp(-(|k| l)^2 / 2), where |k| is the angular
// frequency 2*pi*f/m of integer frequency f on the m x m quadrant and l is
// the correlation length in pixels. Binarization at the empirical quantile q
// makes the solid fraction equal 1-q up to the 1/m^2 resolution of the order
// statistic.

#include <algorithm>
#include <cmath>
#include <vector>

#include "baygds/common.hpp"
#include "baygds/fft2.hpp"
#include "baygds/grid.hpp"

namespace baygds {

// Periodic GRF on an m x m grid, zero mean, unit-ish scale (the scale is
// irrelevant: only the quantile threshold matters downstream).
inline std::vector<double> gaussian_random_field(int m, double corr_len, Rng& rng) {
  if (m < 2) throw size_error("gaussian_random_field: grid too small");
  if (corr_len <= 0) throw user_error("gaussian_random_field: correlation length must be positive");
  std::vector<double> noise(static_cast<std::size_t>(m) * m);
  for (auto& v : noise) v = rng.normal();
  auto spec = rfft2(m, noise);
  const double two_pi = 6.283185307179586476925287;
  for (int r = 0; r < m; ++r) {
    const int fr = (r <= m / 2) ? r : r - m;  // wrapped integer frequency
    for (int c = 0; c <= m / 2; ++c) {
      const double kx = two_pi * fr / m;
      const double ky = two_pi * c / m;
      const double k2 = kx * kx + ky * ky;
      const double w = std::exp(-0.5 * k2 * corr_len * corr_len);
      spec[static_cast<std::size_t>(r) * (m / 2 + 1) + c] *= w;
    }
  }
  return irfft2(m, spec);
}

// One design: synthesize a quadrant field, binarize at quantile q
// (solid where the field exceeds the q-th order statistic), mirror to n x n.
// Throws regenerate_signal when the threshold collapses to a single phase.
inline Microstructure generate_design(int n, std::uint64_t seed, double corr_len,
                                      double threshold_quantile) {
  if (n < 4 || n % 2 != 0) throw size_error("generate_design: n must be even and >= 4");
  if (threshold_quantile <= 0.0 || threshold_quantile >= 1.0)
    throw user_error("generate_design: threshold quantile must lie in (0,1)");
  const int m = n / 2;
  Rng rng(mix_seed(seed, 0x6772666cull));  // "grfl"
  auto field = gaussian_random_field(m, corr_len, rng);

  std::vector<double> sorted(field);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k =
      static_cast<std::size_t>(threshold_quantile * static_cast<double>(sorted.size()));
  if (k == 0 || k >= sorted.size())
    throw regenerate_signal("generate_design: quantile threshold leaves a single phase");
  const double thr = sorted[k];

  Microstructure quad;
  quad.n = m;
  quad.cells.resize(field.size());
  std::size_t solid = 0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    quad.cells[i] = field[i] >= thr ? 1 : 0;
    solid += quad.cells[i];
  }
  if (solid == 0 || solid == field.size())
    throw regenerate_signal("generate_design: degenerate single-phase draw");
  return mirror_periodic(quad);
}

struct PoolGenConfig {
  double quantile_lo = 0.32;  // solid fractions roughly 0.30..0.68
  double quantile_hi = 0.70;
  double corr_len_lo = 2.0;  // pixels on the quadrant
  double corr_len_hi = 5.0;
};

// Pool of `count` designs with per-design quantile and correlation length
// drawn from the configured ranges. Deterministic in (seed, count, n, cfg);
// degenerate draws are retried with a salted seed.
inline DesignPool generate_pool(int count, int n, std::uint64_t seed,
                                const PoolGenConfig& cfg = {}) {
  if (count <= 0) throw size_error("generate_pool: count must be positive");
  if (cfg.quantile_lo > cfg.quantile_hi || cfg.corr_len_lo > cfg.corr_len_hi)
    throw config_error("generate_pool: inverted parameter range");
  DesignPool pool;
  pool.n = n;
  pool.designs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng knob(mix_seed(seed, 0x706f6f6cull, static_cast<std::uint64_t>(i)));  // "pool"
    const double q = knob.uniform(cfg.quantile_lo, cfg.quantile_hi);
    const double cl = knob.uniform(cfg.corr_len_lo, cfg.corr_len_hi);
    Microstructure d;
    for (std::uint64_t salt = 0;; ++salt) {
      try {
        d = generate_design(n, mix_seed(seed, static_cast<std::uint64_t>(i), salt), cl, q);
        break;
      } catch (const regenerate_signal&) {
        if (salt > 64) throw training_error("generate_pool: persistent degenerate draws");
      }
    }
    d.id = i + 1;
    pool.designs.push_back(std::move(d));
  }
  return pool;
}

}  // namespace baygds
