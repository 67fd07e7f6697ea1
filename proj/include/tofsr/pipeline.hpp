#pragma once

#include <string>
#include <vector>

#include "tofsr/blind.hpp"
#include "tofsr/forward.hpp"
#include "tofsr/tensor.hpp"
#include "tofsr/types.hpp"

namespace tofsr {

/// Speed of light used for depth conversion, in meters per second.
inline constexpr double kSpeedOfLight = 3.0e8;

/// Result of recovering one pixel of a tensor. A pixel that failed outright
/// carries the failure message in `error` and an empty spike list; `residual`
/// is negative for such pixels. `kernel` holds the per-pixel kernel estimate
/// (or a copy of the supplied kernel when it was known a priori) so that
/// downstream rendering does not need a side channel.
struct PixelReport {
  int x = 0;
  int y = 0;
  SpikeTrain spikes;
  double residual = -1.0;
  bool converged = false;
  std::string error;
  RealVec kernel;
};

/// Dense height x width grid of per-pixel recovery results.
struct PixelReportMap {
  int height = 0;
  int width = 0;
  AcquisitionGrid grid;
  std::vector<PixelReport> pixels;

  int num_pixels() const { return height * width; }
  const PixelReport& at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  PixelReport& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  /// Fraction of pixels that converged.
  double convergence_rate() const;
};

/// Per-pixel scalar field derived from the reports (depth or amplitude of the
/// k-th spike). Unresolved pixels carry NaN.
struct ScalarMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Recovers every pixel of the tensor independently.
///
/// When `known_kernel` is null each pixel runs the blind solver; otherwise the
/// delays and amplitudes are estimated directly against the supplied kernel.
/// The per-pixel seed is `config.seed ^ (row * width + col)`, so results do
/// not depend on `parallelism` (threads only partition the pixel index
/// range). Individual pixel failures are recorded in the corresponding
/// report; the call only throws if every single pixel failed.
PixelReportMap batch_solve(const ImageTensor& tensor, const SolverConfig& config,
                           int parallelism = 1, const KernelTrace* known_kernel = nullptr);

/// Depth of the k-th spike (0-based, spikes sorted by delay) in meters:
/// d = c * tau / 2. Pixels without a k-th spike yield NaN.
ScalarMap depth_map(const PixelReportMap& reports, int k);

/// Amplitude of the k-th spike; NaN where absent.
ScalarMap amplitude_map(const PixelReportMap& reports, int k);

/// Round-trip distance separation implied by two arrival delays, in meters.
double separation(double tau_a, double tau_b);

/// Renders light-in-flight frames: frame(t)[y][x] = sum_k gamma_k *
/// kernel(t - tau_k), clipped at zero, with the per-pixel recovered kernel
/// evaluated through its trigonometric interpolant. Failed pixels render as
/// zero. Times must lie in [0, window); an empty time list yields an empty
/// result.
std::vector<ScalarMap> lif_frames(const PixelReportMap& reports, const std::vector<double>& times);

/// Mean squared error (1/N) * sum (a[i] - b[i])^2.
double mse(const RealVec& a, const RealVec& b);

/// Peak signal-to-noise ratio 10*log10(max|ref|^2 / mse(ref, x)) in dB.
/// Identical inputs give +infinity.
double psnr(const RealVec& ref, const RealVec& x);

/// Gauge alignment of a kernel estimate against a reference: a circular shift
/// (coarse integer via cross-correlation, then fractional refinement) and a
/// real least-squares scale such that aligned[n] ~ scale * est(n - shift).
struct GaugeAlignment {
  RealVec aligned;
  double scale = 1.0;
  double shift_samples = 0.0;
};
GaugeAlignment align_to_reference(const RealVec& reference, const RealVec& estimate);

/// PSNR of a kernel estimate after gauge alignment.
double psnr_kernel(const RealVec& true_kernel, const RealVec& est_kernel);

/// Tensor container I/O. `path_stem` names a pair of files `<stem>.json`
/// (header: version, dimensions, sample period, dtype "f32" or "f64") and
/// `<stem>.bin` (raw little-endian samples, time index fastest, then x, then
/// y). Doubles round-trip bit-exactly with f64.
void save_tensor(const ImageTensor& tensor, const std::string& path_stem, bool as_f32 = false);
ImageTensor load_tensor(const std::string& path_stem);

/// Report I/O as JSON Lines, one record per pixel:
///   {"x":..,"y":..,"spikes":[{"tau_s":..,"gamma":..}],"residual":..,"converged":..}
/// Failed pixels additionally carry an "error" string and use residual -1.
/// Loading reorders records by coordinates, so metrics are independent of the
/// record order in the file. The grid is not stored in this format; the
/// caller supplies it when known (num_samples 0 means unknown).
void save_reports(const PixelReportMap& reports, const std::string& path);
PixelReportMap load_reports(const std::string& path, const AcquisitionGrid* grid = nullptr);

/// Kernel estimates as a height x width x N tensor (for pixels that failed,
/// the slice is zero).
ImageTensor kernels_tensor(const PixelReportMap& reports);
/// Attaches per-pixel kernels from a tensor produced by kernels_tensor.
void attach_kernels(PixelReportMap& reports, const ImageTensor& kernels);

/// Scalar map export: `<stem>.csv` (one row per y, comma separated, NaN
/// spelled "nan"), `<stem>.bin` (raw little-endian float32, x fastest) and
/// `<stem>.json` header.
void save_scalar_map(const ScalarMap& map, const std::string& path_stem);

}  // namespace tofsr
