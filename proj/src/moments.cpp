#include "tofsr/moments.hpp"

#include <cmath>
#include <string>

#include "tofsr/signal.hpp"

namespace tofsr {

SpectralKernel fourier_series_coeffs(const KernelTrace& kernel, double band_threshold) {
  kernel.grid.validate();
  if (!(band_threshold > 0.0) || !(band_threshold < 1.0))
    throw std::invalid_argument("band_threshold must lie in (0, 1)");
  const int N = kernel.grid.num_samples;
  if (kernel.samples.size() != N) throw std::invalid_argument("kernel sample length mismatch");

  const CplxVec phat = dft(kernel.samples);
  const double pmax = phat.cwiseAbs().maxCoeff();
  if (pmax == 0.0) throw std::runtime_error("kernel is identically zero");

  int band = 0;
  while (band < N && std::abs(phat[band]) >= band_threshold * pmax) ++band;
  if (band == 0) band = 1; // DC is always kept so a moment band exists

  SpectralKernel sk;
  sk.grid = kernel.grid;
  sk.band = band;
  sk.fs_coeffs = phat.head(band) / static_cast<double>(N);
  return sk;
}

MomentMatrix exp_repro_coeffs(const SpectralKernel& sk) {
  sk.grid.validate();
  const int N = sk.grid.num_samples;
  const int M = sk.band;
  if (M < 1 || M > N || sk.fs_coeffs.size() != M)
    throw std::invalid_argument("spectral kernel band is inconsistent");

  const double cmax = sk.fs_coeffs.cwiseAbs().maxCoeff();
  for (int m = 0; m < M; ++m) {
    if (std::abs(sk.fs_coeffs[m]) <= 1e-14 * cmax)
      throw std::runtime_error("Strang-Fix condition violated at bin " + std::to_string(m));
  }

  MomentMatrix out;
  out.grid = sk.grid;
  out.U.resize(M, N);
  for (int m = 0; m < M; ++m) {
    const Complex scale = 1.0 / (static_cast<double>(N) * sk.fs_coeffs[m]);
    for (int n = 0; n < N; ++n) {
      const long long e = static_cast<long long>(n) * m % N;
      out.U(m, n) = scale * std::polar(1.0, -2.0 * M_PI * static_cast<double>(e) / N);
    }
  }
  return out;
}

CplxVec moments(const MeasurementTrace& g, const MomentMatrix& U) {
  if (g.samples.size() != U.U.cols()) throw std::invalid_argument("trace length does not match moment matrix");
  return U.U * g.samples.cast<Complex>();
}

double reproduction_residual(const MomentMatrix& U, const KernelTrace& kernel, int m,
                             int oversample) {
  if (m < 0 || m >= U.band()) throw std::invalid_argument("frequency index outside the band");
  if (oversample < 2) throw std::invalid_argument("oversample must be at least 2");
  kernel.grid.validate();
  const int N = kernel.grid.num_samples;
  const double T = kernel.grid.sample_period;
  const double window = kernel.grid.window();

  double worst = 0.0;
  for (int i = 0; i < N * oversample; ++i) {
    const double t = i * T / oversample;
    Complex acc(0.0, 0.0);
    for (int n = 0; n < N; ++n) acc += U.U(m, n) * kernel.eval(n * T - t);
    const Complex target = std::polar(1.0, -2.0 * M_PI * m * t / window);
    worst = std::max(worst, std::abs(acc - target));
  }
  return worst;
}

} // namespace tofsr
