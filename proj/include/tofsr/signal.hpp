#pragma once

#include "tofsr/types.hpp"

namespace tofsr {

/// Forward DFT, unnormalized: X[m] = sum_n x[n] e^{-j2pi nm/N}.
CplxVec dft(const CplxVec& x);
CplxVec dft(const RealVec& x);

/// Inverse DFT carrying the 1/N factor: x[n] = (1/N) sum_m X[m] e^{j2pi nm/N}.
CplxVec idft(const CplxVec& X);

/// N x M matrix with entry (n, m) = e^{-j2pi nm/N}. Applying the square case
/// to a vector is the forward DFT.
CplxMat vandermonde_w(int N, int M);

/// N x M matrix with entry (n, m) = e^{+j2pi nm/N} / N. The square case is the
/// inverse DFT, so vandermonde_v(N,N) * vandermonde_w(N,N) == I.
CplxMat vandermonde_v(int N, int M);

/// Circular convolution: out[m] = sum_n a[(m-n) mod N] * b[n].
CplxVec circ_conv(const CplxVec& a, const CplxVec& b);
RealVec circ_conv_real(const RealVec& a, const RealVec& b);

/// Least-squares deconvolution against a circulant operator: returns the x
/// minimizing ||g - a (*) x||_2 via the truncated spectral pseudoinverse.
/// DFT bins of `a` with magnitude below rel_threshold * max|a_hat| are dropped
/// (solution component set to zero there).
CplxVec circ_lsq(const CplxVec& a, const CplxVec& g, double rel_threshold);

/// Evaluates the real trigonometric interpolant of a length-N DFT spectrum at
/// an arbitrary time t in a window of the given length. Frequencies use the
/// signed (aliased) assignment; for even N the Nyquist bin contributes a
/// cosine so the interpolant is real and matches the samples at t = nT.
double trig_interp(const CplxVec& spectrum, double t, double window);

/// Circularly shifts a real vector by a fractional number of samples using
/// the signed-spectrum phase ramp: result[n] ~ x(n - shift_samples).
RealVec fractional_circular_shift(const RealVec& x, double shift_samples);

/// Polynomial helpers. Coefficient vectors are constant-term-first:
/// p(z) = c[0] + c[1] z + ... + c[D] z^D.
Complex poly_eval(const CplxVec& coeffs, Complex z);
CplxVec poly_derivative(const CplxVec& coeffs);

/// All roots of the polynomial via balanced companion-matrix eigenvalues.
/// Trailing coefficients with |c| <= 1e-14 * max|c| are trimmed first.
CplxVec poly_roots(const CplxVec& coeffs);

/// Expands prod_k (1 - z / r_k), normalized to constant term 1. Roots must be
/// nonzero. poly_roots(poly_from_roots(r)) recovers r up to permutation.
CplxVec poly_from_roots(const CplxVec& roots);

} // namespace tofsr
