#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace tofsr {

using Complex = std::complex<double>;
using RealVec = Eigen::VectorXd;
using CplxVec = Eigen::VectorXcd;
using CplxMat = Eigen::MatrixXcd;

/// Uniform sampling grid: N samples, T seconds apart, covering one
/// acquisition window of N*T seconds treated as circular.
struct AcquisitionGrid {
  int num_samples = 0;        // N
  double sample_period = 0.0; // T, seconds

  double window() const { return num_samples * sample_period; }

  void validate() const {
    if (num_samples < 2)
      throw std::invalid_argument("acquisition grid needs at least 2 samples");
    if (!(sample_period > 0.0))
      throw std::invalid_argument("sample period must be positive");
  }
};

/// One return path: arrival delay in seconds and real reflectivity.
struct Spike {
  double delay = 0.0;     // seconds, in [0, window)
  double amplitude = 0.0; // real
};

/// Sparse scene response: K spikes sorted ascending by delay.
struct SpikeTrain {
  std::vector<Spike> spikes;

  int order() const { return static_cast<int>(spikes.size()); }

  void sort_by_delay() {
    std::sort(spikes.begin(), spikes.end(),
              [](const Spike& a, const Spike& b) { return a.delay < b.delay; });
  }

  void validate(double window) const {
    if (spikes.empty()) throw std::invalid_argument("spike train is empty");
    for (const Spike& s : spikes) {
      if (!(s.delay >= 0.0) || !(s.delay < window))
        throw std::invalid_argument("spike delay outside acquisition window");
      if (!std::isfinite(s.amplitude) || s.amplitude == 0.0)
        throw std::invalid_argument("spike amplitude must be finite and nonzero");
    }
  }
};

struct GaussianKernel {
  double center = 0.0; // seconds
  double fwhm = 0.0;   // seconds
};

struct RaisedCosineKernel {
  double center = 0.0; // seconds
  double width = 0.0;  // full support width, seconds; fwhm = width/2
};

/// Exponentially modified Gaussian (Gaussian convolved with one-sided decay).
struct EmgKernel {
  double center = 0.0; // seconds, location of the Gaussian component
  double sigma = 0.0;  // seconds
  double decay = 0.0;  // seconds, time constant of the exponential tail
};

/// Periodic autocorrelation of a maximal-length sequence: a triangular peak
/// of half-width `chip` over a baseline of -1/(2^order - 1), peak centered
/// mid-window.
struct MseqAutocorrKernel {
  double chip = 0.0; // seconds
  int order = 0;
};

/// Dirichlet (periodic sinc) kernel whose DFT is exactly zero outside
/// bins |m| <= band. Peak centered mid-window.
struct BandlimitedDirichletKernel {
  int band = 0; // L
};

using KernelFamily = std::variant<GaussianKernel, RaisedCosineKernel, EmgKernel,
                                  MseqAutocorrKernel, BandlimitedDirichletKernel>;

/// Sampled kernel trace, optionally carrying the analytic family so the
/// continuous-time waveform can be evaluated between samples.
struct KernelTrace {
  RealVec samples;
  AcquisitionGrid grid;
  std::optional<KernelFamily> family;

  /// Continuous-time evaluation of the analytic descriptor, periodized over
  /// the window. Throws if the trace has no analytic family attached.
  double eval(double t) const;
};

struct MeasurementTrace {
  RealVec samples;
  AcquisitionGrid grid;
};

} // namespace tofsr
