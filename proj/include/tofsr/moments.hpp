#pragma once

#include "tofsr/types.hpp"

namespace tofsr {

/// In-band Fourier-series coefficients of a sampled kernel, with the
/// convention fs_coeffs[m] = dft(samples)[m] / N.
struct SpectralKernel {
  CplxVec fs_coeffs; // length band
  int band = 0;      // M: bins 0..M-1 are usable
  AcquisitionGrid grid;
};

/// Row m maps a measurement trace to the m-th exponential moment:
/// U[m, n] = e^{-j2pi nm/N} / (N * fs_coeffs[m]).
struct MomentMatrix {
  CplxMat U; // band x N
  AcquisitionGrid grid;

  int band() const { return static_cast<int>(U.rows()); }
  /// Exponent nu_m of the reproduced exponential e^{-nu_m t/T}.
  Complex frequency(int m) const { return Complex(0.0, 2.0 * M_PI * m / grid.num_samples); }
};

/// Largest contiguous DC-rooted band of DFT bins whose magnitude stays at or
/// above band_threshold * max|dft(phi)|; at least the DC bin is always kept.
SpectralKernel fourier_series_coeffs(const KernelTrace& kernel, double band_threshold);

/// Exponential reproducing rows for every in-band frequency. Throws
/// "Strang-Fix condition violated at bin <m>" if an in-band coefficient is
/// numerically zero (below 1e-14 * max in-band magnitude).
MomentMatrix exp_repro_coeffs(const SpectralKernel& sk);

/// y = U * g: for a bandlimited kernel and a noiseless circular trace,
/// y[m] = sum_k gamma_k e^{-j2pi m tau_k / window}.
CplxVec moments(const MeasurementTrace& g, const MomentMatrix& U);

/// Max deviation over a fine grid (oversample points per sample period) of
/// sum_n U[m,n] phi(nT - t) from e^{-j2pi m t / window}. Requires the kernel
/// to carry an analytic descriptor.
double reproduction_residual(const MomentMatrix& U, const KernelTrace& kernel, int m,
                             int oversample);

} // namespace tofsr
