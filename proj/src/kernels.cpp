#include "tofsr/kernels.hpp"

#include <cmath>

namespace tofsr {

namespace {

double gaussian_sigma(const GaussianKernel& k) {
  return k.fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

// Value at a signed offset x from the family's center, without periodization.
double eval_centered(const KernelFamily& family, double x, double window) {
  struct Visitor {
    double x;
    double window;

    double operator()(const GaussianKernel& k) const {
      const double s = gaussian_sigma(k);
      return std::exp(-0.5 * x * x / (s * s));
    }
    double operator()(const RaisedCosineKernel& k) const {
      if (std::abs(x) >= 0.5 * k.width) return 0.0;
      return 0.5 * (1.0 + std::cos(2.0 * M_PI * x / k.width));
    }
    double operator()(const EmgKernel& k) const {
      // Gaussian at 0 convolved with (1/decay) e^{-t/decay} for t >= 0,
      // normalized so the expression stays O(1).
      const double lam = 1.0 / k.decay;
      const double s = k.sigma;
      const double arg = 0.5 * lam * (lam * s * s - 2.0 * x);
      const double z = (lam * s * s - x) / (s * std::sqrt(2.0));
      // exp(arg)*erfc(z) evaluated stably via the scaled complement for large z
      if (z > 25.0) {
        // erfc(z) ~ exp(-z^2)/(z sqrt(pi)) * (1 - 1/(2z^2))
        const double log_tail = arg - z * z - std::log(z * std::sqrt(M_PI));
        return 0.5 * lam * std::exp(log_tail) * (1.0 - 0.5 / (z * z));
      }
      return 0.5 * lam * std::exp(arg) * std::erfc(z);
    }
    double operator()(const MseqAutocorrKernel& k) const {
      const double pedestal = 1.0 / (std::pow(2.0, k.order) - 1.0);
      const double t = std::abs(x);
      if (t >= k.chip) return -pedestal;
      return 1.0 - (1.0 + pedestal) * t / k.chip;
    }
    double operator()(const BandlimitedDirichletKernel& k) const {
      const int span = 2 * k.band + 1;
      const double theta = M_PI * x / window;
      const double den = std::sin(theta);
      if (std::abs(den) < 1e-13) return std::cos(span * theta) / std::cos(theta); // l'Hopital near grid multiples
      return std::sin(span * theta) / (span * den);
    }
  };
  return std::visit(Visitor{x, window}, family);
}

// Half-width of the effective support used for the time-localization check,
// as (left, right) extents from the center.
std::pair<double, double> support_extent(const KernelFamily& family) {
  struct Visitor {
    std::pair<double, double> operator()(const GaussianKernel& k) const {
      const double s = gaussian_sigma(k);
      return {5.0 * s, 5.0 * s};
    }
    std::pair<double, double> operator()(const RaisedCosineKernel& k) const {
      return {0.5 * k.width, 0.5 * k.width};
    }
    std::pair<double, double> operator()(const EmgKernel& k) const {
      return {5.0 * k.sigma, 5.0 * k.sigma + 12.0 * k.decay};
    }
    std::pair<double, double> operator()(const MseqAutocorrKernel& k) const {
      return {k.chip, k.chip};
    }
    std::pair<double, double> operator()(const BandlimitedDirichletKernel&) const {
      return {0.0, 0.0}; // intrinsically periodic; always fits
    }
  };
  return std::visit(Visitor{}, family);
}

void validate_family(const KernelFamily& family, double window) {
  struct Visitor {
    double window;
    void operator()(const GaussianKernel& k) const {
      if (!(k.fwhm > 0)) throw std::invalid_argument("gaussian fwhm must be positive");
    }
    void operator()(const RaisedCosineKernel& k) const {
      if (!(k.width > 0)) throw std::invalid_argument("raised cosine width must be positive");
    }
    void operator()(const EmgKernel& k) const {
      if (!(k.sigma > 0) || !(k.decay > 0))
        throw std::invalid_argument("emg sigma and decay must be positive");
    }
    void operator()(const MseqAutocorrKernel& k) const {
      if (!(k.chip > 0)) throw std::invalid_argument("mseq chip must be positive");
      if (k.order < 2 || k.order > 24) throw std::invalid_argument("mseq order out of range");
    }
    void operator()(const BandlimitedDirichletKernel& k) const {
      if (k.band < 0) throw std::invalid_argument("dirichlet band must be non-negative");
    }
  };
  std::visit(Visitor{window}, family);

  const double center = kernel_family_center(family, window);
  auto [left, right] = support_extent(family);
  if (center - left < 0.0 || center + right >= window)
    throw std::invalid_argument("kernel not time-localized in window");
}

} // namespace

double kernel_family_center(const KernelFamily& family, double window) {
  struct Visitor {
    double window;
    double operator()(const GaussianKernel& k) const { return k.center; }
    double operator()(const RaisedCosineKernel& k) const { return k.center; }
    double operator()(const EmgKernel& k) const { return k.center; }
    double operator()(const MseqAutocorrKernel&) const { return 0.5 * window; }
    double operator()(const BandlimitedDirichletKernel&) const { return 0.5 * window; }
  };
  return std::visit(Visitor{window}, family);
}

double eval_kernel_family(const KernelFamily& family, double t, double window) {
  const double center = kernel_family_center(family, window);
  double x = std::fmod(t - center, window);
  if (x < 0) x += window;          // x in [0, window)
  if (x > 0.5 * window) x -= window; // signed offset in [-window/2, window/2)
  if (std::holds_alternative<BandlimitedDirichletKernel>(family) ||
      std::holds_alternative<MseqAutocorrKernel>(family))
    return eval_centered(family, x, window); // these forms are already periodic
  // sum the nearest periodic images for families with tails
  return eval_centered(family, x, window) + eval_centered(family, x - window, window) +
         eval_centered(family, x + window, window);
}

KernelTrace make_kernel(const KernelFamily& family, const AcquisitionGrid& grid) {
  grid.validate();
  const double window = grid.window();
  if (const auto* bl = std::get_if<BandlimitedDirichletKernel>(&family)) {
    if (2 * bl->band >= grid.num_samples)
      throw std::invalid_argument("dirichlet band must be below half the sample count");
  }
  validate_family(family, window);

  KernelTrace out;
  out.grid = grid;
  out.family = family;
  out.samples.resize(grid.num_samples);
  for (int n = 0; n < grid.num_samples; ++n)
    out.samples[n] = eval_kernel_family(family, n * grid.sample_period, window);
  return out;
}

double KernelTrace::eval(double t) const {
  if (!family) throw std::runtime_error("kernel has no analytic descriptor");
  return eval_kernel_family(*family, t, grid.window());
}

} // namespace tofsr
