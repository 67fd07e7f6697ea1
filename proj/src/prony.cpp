#include "tofsr/prony.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "tofsr/forward.hpp"
#include "tofsr/signal.hpp"

namespace tofsr {

AnnihilatingFilter annihilating_filter(const CplxVec& y, int K) {
  const int M = static_cast<int>(y.size());
  if (K < 1) throw std::invalid_argument("spike count must be positive");
  if (M < 2 * K) throw std::runtime_error("insufficient moments");
  if (y.cwiseAbs().maxCoeff() == 0.0) throw std::invalid_argument("moment sequence is zero");

  CplxMat T(M - K, K + 1);
  for (int i = 0; i < M - K; ++i)
    for (int j = 0; j <= K; ++j) T(i, j) = y[K + i - j];

  Eigen::JacobiSVD<CplxMat> svd(T, Eigen::ComputeFullV);
  AnnihilatingFilter out;
  out.K = K;
  out.h = svd.matrixV().col(K); // unit-norm right singular vector, smallest sigma
  return out;
}

DelayEstimate delays_from_filter(const AnnihilatingFilter& filter, double window) {
  if (!(window > 0.0)) throw std::invalid_argument("window must be positive");
  if (filter.h.size() != filter.K + 1 || filter.h.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("invalid annihilating filter");

  // H(z) = sum_j h[j] z^{-j}; substituting w = z^{-1} makes h the ascending
  // coefficients of a degree-K polynomial whose roots are w_k = 1/u_k.
  const CplxVec w = poly_roots(filter.h);
  if (w.size() < filter.K)
    throw std::runtime_error("annihilating filter has fewer roots than spikes");

  DelayEstimate out;
  for (int a = 0; a < w.size(); ++a) {
    for (int b = a + 1; b < w.size(); ++b)
      if (std::abs(w[a] - w[b]) < 1e-10) out.degenerate_roots = true;
    if (std::abs(w[a]) == 0.0) throw std::runtime_error("annihilating filter root at origin");
    const Complex u = 1.0 / w[a];
    double delay = -window / (2.0 * M_PI) * std::arg(u / std::abs(u));
    delay = std::fmod(delay, window);
    if (delay < 0.0) delay += window;
    if (delay >= window) delay = 0.0;
    out.delays.push_back(delay);
  }
  std::sort(out.delays.begin(), out.delays.end());
  return out;
}

std::vector<double> amplitudes_ls(const MeasurementTrace& g, const std::vector<double>& taus,
                                  const KernelTrace& kernel) {
  g.grid.validate();
  const int N = g.grid.num_samples;
  const int K = static_cast<int>(taus.size());
  if (K < 1) throw std::invalid_argument("no delays given");
  if (2 * K > N) throw std::invalid_argument("spike count exceeds half the sample count");
  if (kernel.samples.size() != N) throw std::invalid_argument("kernel sample length mismatch");

  const double window = g.grid.window();
  for (int a = 0; a < K; ++a) {
    for (int b = a + 1; b < K; ++b) {
      double gap = std::abs(taus[a] - taus[b]);
      gap = std::min(gap, window - gap); // circular distance
      if (gap < 1e-12 * window) throw std::runtime_error("indistinguishable spikes");
    }
  }

  Eigen::MatrixXd design(N, K);
  for (int k = 0; k < K; ++k) {
    SpikeTrain unit;
    unit.spikes.push_back({taus[k], 1.0});
    design.col(k) = circ_conv(kernel.samples.cast<Complex>(), dirichlet_spikes(unit, g.grid)).real();
  }

  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * g.samples;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (!lu.isInvertible()) throw std::runtime_error("indistinguishable spikes");
  const Eigen::VectorXd gamma = lu.solve(rhs);

  return std::vector<double>(gamma.data(), gamma.data() + K);
}

SpikeTrain prony_solve(const MeasurementTrace& g, const KernelTrace& kernel, int K,
                       double band_threshold) {
  g.grid.validate();
  const int N = g.grid.num_samples;
  if (K < 1) throw std::invalid_argument("spike count must be positive");
  if (N < 2 * K) throw std::invalid_argument("sample count must be at least twice the spike count");

  SpectralKernel sk = fourier_series_coeffs(kernel, band_threshold);
  // Bins at or above the Nyquist index alias to negative frequencies and break
  // the one-sided exponential structure of the moment sequence; cap the band.
  const int cap = (N + 1) / 2;
  if (sk.band > cap) {
    sk.band = cap;
    sk.fs_coeffs.conservativeResize(cap);
  }

  const MomentMatrix U = exp_repro_coeffs(sk);
  const CplxVec y = moments(g, U);
  const AnnihilatingFilter filter = annihilating_filter(y, K);
  const DelayEstimate est = delays_from_filter(filter, g.grid.window());
  if (static_cast<int>(est.delays.size()) != K)
    throw std::runtime_error("annihilating filter yielded the wrong number of delays");
  const std::vector<double> gamma = amplitudes_ls(g, est.delays, kernel);

  SpikeTrain out;
  for (int k = 0; k < K; ++k) out.spikes.push_back({est.delays[k], gamma[k]});
  out.sort_by_delay();
  return out;
}

} // namespace tofsr
