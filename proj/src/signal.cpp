#include "tofsr/signal.hpp"

#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#ifndef M_PI
#define M_PI 3.14159265358979323846
#endif

namespace tofsr {

namespace {

Eigen::FFT<double>& fft_engine() {
  static thread_local Eigen::FFT<double> engine;
  return engine;
}

} // namespace

CplxVec dft(const CplxVec& x) {
  if (x.size() == 0) throw std::invalid_argument("empty signal");
  CplxVec out(x.size());
  fft_engine().fwd(out, x);
  return out;
}

CplxVec dft(const RealVec& x) {
  CplxVec xc = x.cast<Complex>();
  return dft(xc);
}

CplxVec idft(const CplxVec& X) {
  if (X.size() == 0) throw std::invalid_argument("empty signal");
  CplxVec out(X.size());
  fft_engine().inv(out, X);
  return out;
}

CplxMat vandermonde_w(int N, int M) {
  if (N < 1 || M < 1) throw std::invalid_argument("vandermonde sizes must be positive");
  CplxMat W(N, M);
  const double step = 2.0 * M_PI / N;
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      // reduce the exponent mod N to keep the phase argument small
      const long long e = static_cast<long long>(n) * m % N;
      W(n, m) = std::polar(1.0, -step * static_cast<double>(e));
    }
  return W;
}

CplxMat vandermonde_v(int N, int M) {
  if (N < 1 || M < 1) throw std::invalid_argument("vandermonde sizes must be positive");
  CplxMat V(N, M);
  const double step = 2.0 * M_PI / N;
  const double scale = 1.0 / N;
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      const long long e = static_cast<long long>(n) * m % N;
      V(n, m) = scale * std::polar(1.0, step * static_cast<double>(e));
    }
  return V;
}

CplxVec circ_conv(const CplxVec& a, const CplxVec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("circular convolution length mismatch");
  CplxVec prod = dft(a).cwiseProduct(dft(b));
  return idft(prod);
}

RealVec circ_conv_real(const RealVec& a, const RealVec& b) {
  CplxVec c = circ_conv(a.cast<Complex>().eval(), b.cast<Complex>().eval());
  return c.real();
}

CplxVec circ_lsq(const CplxVec& a, const CplxVec& g, double rel_threshold) {
  if (a.size() != g.size()) throw std::invalid_argument("circulant least squares length mismatch");
  if (!(rel_threshold > 0.0 && rel_threshold < 1.0))
    throw std::invalid_argument("rel_threshold must lie in (0, 1)");
  CplxVec ahat = dft(a);
  CplxVec ghat = dft(g);
  const double amax = ahat.cwiseAbs().maxCoeff();
  if (amax == 0.0) throw std::runtime_error("degenerate convolution kernel");
  const double floor = rel_threshold * amax;
  CplxVec xhat(a.size());
  for (Eigen::Index l = 0; l < a.size(); ++l) {
    const double mag = std::abs(ahat[l]);
    xhat[l] = (mag >= floor) ? ghat[l] * std::conj(ahat[l]) / (mag * mag) : Complex(0, 0);
  }
  return idft(xhat);
}

double trig_interp(const CplxVec& spectrum, double t, double window) {
  const Eigen::Index N = spectrum.size();
  if (N < 1) throw std::invalid_argument("empty spectrum");
  if (!(window > 0.0)) throw std::invalid_argument("window must be positive");
  const double theta = 2.0 * M_PI * t / window;
  Complex acc(0, 0);
  for (Eigen::Index l = 0; l < N; ++l) {
    if (2 * l == N) {
      acc += spectrum[l] * std::cos(0.5 * static_cast<double>(N) * theta);
    } else {
      const double m = (2 * l < N) ? static_cast<double>(l) : static_cast<double>(l - N);
      acc += spectrum[l] * std::polar(1.0, m * theta);
    }
  }
  return acc.real() / static_cast<double>(N);
}

RealVec fractional_circular_shift(const RealVec& x, double shift_samples) {
  const Eigen::Index N = x.size();
  if (N < 1) throw std::invalid_argument("empty vector");
  CplxVec xhat = dft(x);
  for (Eigen::Index l = 0; l < N; ++l) {
    if (2 * l == N) {
      // The Nyquist bin has no preferred rotation direction; the real shift of
      // a cosine at that frequency scales it by cos(pi * shift).
      xhat[l] *= std::cos(M_PI * shift_samples);
    } else {
      const double m = (2 * l < N) ? static_cast<double>(l) : static_cast<double>(l - N);
      xhat[l] *= std::polar(1.0, -2.0 * M_PI * m * shift_samples / static_cast<double>(N));
    }
  }
  return idft(xhat).real();
}

Complex poly_eval(const CplxVec& coeffs, Complex z) {
  Complex acc(0, 0);
  for (Eigen::Index i = coeffs.size() - 1; i >= 0; --i) acc = acc * z + coeffs[i];
  return acc;
}

CplxVec poly_derivative(const CplxVec& coeffs) {
  if (coeffs.size() <= 1) return CplxVec::Zero(1);
  CplxVec d(coeffs.size() - 1);
  for (Eigen::Index i = 1; i < coeffs.size(); ++i) d[i - 1] = static_cast<double>(i) * coeffs[i];
  return d;
}

namespace {

// One sweep of Parlett-Reinsch balancing with powers of two; improves the
// conditioning of companion matrices whose coefficients span many orders.
void balance_in_place(CplxMat& m) {
  const Eigen::Index n = m.rows();
  const double radix = 2.0;
  bool again = true;
  int sweeps = 0;
  while (again && sweeps++ < 32) {
    again = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0, r = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(m(j, i));
        r += std::abs(m(i, j));
      }
      if (c == 0 || r == 0) continue;
      double f = 1.0;
      const double s = c + r;
      while (c < r / radix) { c *= radix; r /= radix; f *= radix; }
      while (c >= r * radix) { c /= radix; r *= radix; f /= radix; }
      if ((c + r) < 0.95 * s && f != 1.0) {
        again = true;
        m.row(i) /= f;
        m.col(i) *= f;
      }
    }
  }
}

} // namespace

CplxVec poly_roots(const CplxVec& coeffs) {
  if (coeffs.size() == 0) throw std::invalid_argument("zero polynomial has no roots");
  const double cmax = coeffs.cwiseAbs().maxCoeff();
  if (cmax == 0.0) throw std::invalid_argument("zero polynomial has no roots");
  Eigen::Index degree = coeffs.size() - 1;
  while (degree > 0 && std::abs(coeffs[degree]) <= 1e-14 * cmax) --degree;
  if (degree < 1) throw std::invalid_argument("polynomial degree is zero after trimming");

  CplxMat companion = CplxMat::Zero(degree, degree);
  for (Eigen::Index i = 1; i < degree; ++i) companion(i, i - 1) = Complex(1, 0);
  for (Eigen::Index i = 0; i < degree; ++i) companion(i, degree - 1) = -coeffs[i] / coeffs[degree];
  balance_in_place(companion);

  Eigen::ComplexEigenSolver<CplxMat> solver(companion, false);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("companion eigenvalue computation failed");
  return solver.eigenvalues();
}

CplxVec poly_from_roots(const CplxVec& roots) {
  CplxVec coeffs(1);
  coeffs[0] = Complex(1, 0);
  for (Eigen::Index k = 0; k < roots.size(); ++k) {
    if (roots[k] == Complex(0, 0))
      throw std::invalid_argument("poly_from_roots requires nonzero roots");
    CplxVec next = CplxVec::Zero(coeffs.size() + 1);
    const Complex f = -1.0 / roots[k]; // factor (1 - z/r) = 1 + f z
    next.head(coeffs.size()) += coeffs;
    next.tail(coeffs.size()) += f * coeffs;
    coeffs.swap(next);
  }
  return coeffs;
}

} // namespace tofsr
