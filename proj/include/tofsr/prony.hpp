#pragma once

#include <vector>

#include "tofsr/moments.hpp"
#include "tofsr/types.hpp"

namespace tofsr {

/// Filter h of length K+1 with H(z) = sum_j h[j] z^{-j} annihilating a
/// K-exponential moment sequence; normalized to unit Euclidean norm.
struct AnnihilatingFilter {
  CplxVec h;
  int K = 0;
};

/// Delays decoded from the filter roots, sorted ascending, plus a flag set
/// when two roots coincide to within 1e-10.
struct DelayEstimate {
  std::vector<double> delays;
  bool degenerate_roots = false;
};

/// Total-least-squares annihilating filter: the right singular vector of the
/// (M-K) x (K+1) Toeplitz convolution matrix T[i, j] = y[K + i - j] belonging
/// to the smallest singular value. Throws "insufficient moments" when M < 2K.
AnnihilatingFilter annihilating_filter(const CplxVec& y, int K);

/// Roots of H in z^{-1} give u_k; each is radially projected onto the unit
/// circle and decoded as tau_k = -(window / 2pi) * arg(u_k), wrapped to
/// [0, window).
DelayEstimate delays_from_filter(const AnnihilatingFilter& filter, double window);

/// Least-squares amplitudes in the measurement domain against the circular
/// responses of unit spikes at the given delays. Throws "indistinguishable
/// spikes" when two delays coincide.
std::vector<double> amplitudes_ls(const MeasurementTrace& g, const std::vector<double>& taus,
                                  const KernelTrace& kernel);

/// Known-kernel recovery: spectral coefficients -> moments -> annihilating
/// filter -> delays -> amplitudes. Returns exactly K spikes sorted by delay.
SpikeTrain prony_solve(const MeasurementTrace& g, const KernelTrace& kernel, int K,
                       double band_threshold);

} // namespace tofsr
