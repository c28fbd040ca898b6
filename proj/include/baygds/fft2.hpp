#pragma once

// Thin FFTW3 wrapper for square real 2-D transforms. Plans are created with
// FFTW_ESTIMATE (deterministic plans, no wisdom state) under a global mutex;
// the planner is not thread-safe, execution is.

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

#include "baygds/common.hpp"

namespace baygds {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Forward real-to-complex 2-D FFT of an n x n row-major field.
// Output layout is FFTW's: n rows, n/2+1 columns.
inline std::vector<std::complex<double>> rfft2(int n, const std::vector<double>& in) {
  if (static_cast<int>(in.size()) != n * n) throw size_error("rfft2: size mismatch");
  std::vector<double> work(in);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n) * (n / 2 + 1));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_2d(n, n, work.data(),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

// Inverse complex-to-real 2-D FFT. FFTW's backward transform is unnormalized;
// this divides by n*n so irfft2(rfft2(x)) == x.
inline std::vector<double> irfft2(int n, const std::vector<std::complex<double>>& in) {
  if (static_cast<int>(in.size()) != n * (n / 2 + 1)) throw size_error("irfft2: size mismatch");
  std::vector<std::complex<double>> work(in);  // FFTW c2r destroys its input
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_2d(n, n, reinterpret_cast<fftw_complex*>(work.data()),
                                out.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / (static_cast<double>(n) * n);
  for (auto& v : out) v *= scale;
  return out;
}

}  // namespace baygds
