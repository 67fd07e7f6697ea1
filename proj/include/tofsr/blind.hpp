#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tofsr/types.hpp"

namespace tofsr {

/// Rational parametrization of a spike vector on the length-N circle:
/// d[n] = xi^{-A n} * P(xi^n) / Q(xi^n) with xi = e^{j2pi/N} and the
/// half-spectrum twist A = floor((N-1)/2), so that unit-circle roots of Q
/// encode spike delays and the vector is real for conjugate-paired data.
struct RationalSpikeModel {
  CplxVec p; // length K, ascending coefficients of P
  CplxVec q; // length K+1, ascending coefficients of Q

  int order() const { return static_cast<int>(q.size()) - 1; }
};

struct SolverConfig {
  int K = 1;                          // spike count to fit
  std::optional<double> sigma;        // l2 residual tolerance; unset = estimate from data
  int jmax = 20;                      // inner linearized steps per spike fit
  int max_restarts = 10;              // restarts after the deterministic attempt
  int max_outer = 250;                // alternations per restart
  double pinv_rel_threshold = 1e-8;   // spectral cutoff for circulant least squares
  double q_clamp = 1e-8;              // relative floor on |Q(xi^n)| before inversion
  double band_threshold = 1e-4;       // usable-bin cutoff (kept for kernel-side consumers)
  double order_check_rel = 0.05;      // min|gamma|/max|gamma| below this = rank-deficient fit
  double kernel_support_frac = 0.10;  // cap on the kernel support window, fraction of N
  std::uint64_t seed = 0;

  void validate() const;
};

struct SolveReport {
  SpikeTrain spikes;
  KernelTrace kernel;
  double residual = 0.0; // ||g - phi (*) d||_2 of the reported pair
  int restarts_used = 0;
  int iterations_used = 0;
  bool converged = false;
  std::vector<std::string> degenerate_flags;
};

/// The half-spectrum twist exponent A = floor((N-1)/2).
inline int spectral_twist(int N) { return (N - 1) / 2; }

/// Kernel initialization phi = Re(idft(e^{jw} .* dft(g))) for a given phase
/// vector w; w = 0 reproduces g exactly.
KernelTrace spectral_phase_kernel(const MeasurementTrace& g, const RealVec& w);

/// Randomized variant: w ~ N(0, I) drawn deterministically from the seed.
KernelTrace init_kernel(const MeasurementTrace& g, std::uint64_t seed);

/// Denominator initialization from the K most prominent strict local maxima
/// of |d0| (greedy by magnitude, one-sample exclusion radius, magnitude fill
/// when fewer maxima exist). Returns unit-norm q with roots e^{+j2pi n_k/N}.
CplxVec init_q_from_peaks(const CplxVec& d0, int K);

/// Linearized spike-fit system around the current denominator iterate:
/// minimizing ||u + A q - B p||_2 over (p, q) approximates the rational fit.
struct LinearizedFit {
  CplxMat A; // N x (K+1)
  CplxMat B; // N x K
  CplxVec u; // length N
};

/// Assembles A = T_phi R diag(d0) E_{K+1}, B = T_phi R W E_K, u = g - T_phi d0,
/// where T_phi is circular convolution by phi, E_M has columns xi^{n j}
/// (j < M), W is the twist diag(xi^{-A n}), and R = diag(1/Q(xi^n)) with
/// |Q(xi^n)| clamped from below at q_clamp * max_n |Q(xi^n)| (phase kept).
LinearizedFit spike_fit_matrices(const RealVec& phi, const MeasurementTrace& g, const CplxVec& q,
                                 const CplxVec& d0, double q_clamp);

struct SpikeFitStep {
  CplxVec p;
  CplxVec q;
  Complex lambda; // multiplier of the normalization constraint
};

/// One constrained least-squares step: minimizes ||u - C x||_2 with
/// C = [-A, B], x = [q; p], subject to <q0, q> = 1, via the bordered normal
/// system of size 2K+2. Throws "degenerate linearization" when singular.
SpikeFitStep spike_fit_step(const LinearizedFit& fit, const CplxVec& q0);

struct SpikeFitResult {
  RationalSpikeModel model;
  int iterations = 0;
  double residual = 0.0; // smallest ||g - phi (*) d(p,q)||_2 seen
};

/// Iterates spike_fit_step from q0, rebuilding the linearization at every
/// step, for at most cfg.jmax steps or until the best residual drops to
/// sigma. Returns the best iterate encountered, not necessarily the last.
SpikeFitResult spike_fit(const RealVec& phi, const MeasurementTrace& g, int K, const CplxVec& q0,
                         double sigma, const SolverConfig& cfg);

/// Evaluates the rational model on the grid with denominator clamping.
CplxVec rational_spike_vector(const RationalSpikeModel& model, int N, double q_clamp);

/// Decodes delays from the unit-circle projections of the roots of Q and
/// amplitudes from the residues of the rational model; roots with
/// |1 - u^N| < 1e-6 (on-grid) switch all amplitudes to a least-squares fit
/// against unit spike vectors. The imaginary part of the residue amplitudes
/// (zero for consistent real data) is written to imag_residue when given.
SpikeTrain extract_spikes(const RationalSpikeModel& model, const AcquisitionGrid& grid,
                          double* imag_residue = nullptr, double q_clamp = 1e-8);

/// Kernel update: least-squares solution of g = phi (*) d for phi, projected
/// onto real vectors.
KernelTrace fit_kernel(const CplxVec& d, const MeasurementTrace& g, double rel_threshold);

/// Kernel update restricted to a circular support window of the given length:
/// the window position is chosen greedily from the unconstrained solution,
/// then the window taps are refit by dense least squares. Unlike the free
/// spectral division, a fixed-support fit leaves a visible residual whenever
/// the spike train is wrong, which is what makes the blind factorization
/// identifiable.
KernelTrace fit_kernel_windowed(const CplxVec& d, const MeasurementTrace& g, int support_len,
                                double rel_threshold);

/// One separation hypothesis for a dominant spike pair, read off the
/// log-magnitude spectrum of the trace.
struct SeparationCandidate {
  double separation = 0.0; // seconds
  double ratio = 0.0;      // weaker/stronger amplitude ratio estimate, in [0.05, 0.95]
  double score = 0.0;      // fraction of baseline residual explained, in (-inf, 1]
};

struct SpectralRippleEstimate {
  std::vector<SeparationCandidate> candidates; // best first, possibly empty
  double width_sigma = 0.0;                    // kernel time-width estimate, in samples
  int band_bins = 0;                           // usable low-frequency bins
};

/// A two-spike train multiplies the data spectrum by an interference pattern
/// whose log-magnitude is a cosine ripple riding on the smooth kernel
/// baseline. Fitting baseline-plus-ripple over the usable band for a grid of
/// trial separations yields separation candidates (residual minima) and a
/// kernel width estimate (baseline curvature / band length). Deterministic.
SpectralRippleEstimate ripple_separations(const MeasurementTrace& g, int max_candidates = 3);

/// Start index of the circular window of the given length holding the most
/// energy of phi.
int best_support_start(const RealVec& phi, int length);

/// Fraction of total energy inside the best circular window of that length
/// (1.0 for a zero vector or length >= N).
double support_energy_fraction(const RealVec& phi, int length);

/// Zeroes phi outside its best circular window of the given length.
RealVec project_support(const RealVec& phi, int length);

/// ||g - Re(phi (*) d)||_2.
double trace_residual(const MeasurementTrace& g, const RealVec& phi, const CplxVec& d);

/// Noise-floor estimate: median magnitude of the top-quartile-frequency DFT
/// bins (min(l, N-l) >= 3N/8), divided by sqrt(ln 2). For white noise of
/// per-sample std s this estimates s * sqrt(N), the expected l2 noise norm.
double estimate_sigma(const MeasurementTrace& g);

/// Drops spikes with |gamma| < rel_threshold * max|gamma|; the largest spike
/// always survives and input order is preserved.
SpikeTrain threshold_spikes(const SpikeTrain& spikes, double rel_threshold);

/// Blind recovery of (spikes, kernel) by alternating the rational spike fit
/// and a support-windowed kernel least squares. Restart schedule: one
/// deterministic attempt (identity-phase kernel, peak-initialized q), then
/// deterministic two-spike attempts seeded by ripple_separations and by a
/// log-spaced separation ladder (K = 2), then seeded random restarts. Each
/// alternation round is polished by a known-kernel spike re-extraction and by
/// a line search over the common fractional delay shift (the windowed kernel
/// fit is shift-quantized, so the residual depends on that scalar). A
/// factorization counts only if all K amplitudes are significant and the
/// spikes are pairwise distinct (otherwise the trivial delta-train
/// factorization would always win). The report is the best such factorization
/// across restarts, where "best" resolves residual ties within the noise:
/// candidates within 2% of the lowest residual are ranked structurally —
/// separations under the two-point resolution floor are set aside and the
/// most compact remaining pair wins. Restarts stop early only when a fit is
/// unambiguous (residual far under sigma, or under sigma with spikes wider
/// apart than the kernel). Reported kernel is scale/shift gauge-fixed:
/// ||phi||_inf = 1 and the kernel center of mass anchored to the
/// initialization's center of mass.
SolveReport blind_solve(const MeasurementTrace& g, const SolverConfig& cfg);

} // namespace tofsr
