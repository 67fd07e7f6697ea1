#include "tofsr/forward.hpp"

#include <cmath>
#include <random>

#include "tofsr/signal.hpp"

namespace tofsr {

CplxVec dirichlet_spikes(const SpikeTrain& spikes, const AcquisitionGrid& grid) {
  grid.validate();
  spikes.validate(grid.window());
  const int N = grid.num_samples;
  const int K = spikes.order();
  if (N < 2 * K) throw std::invalid_argument("sample count must be at least twice the spike count");

  const double T = grid.sample_period;
  CplxVec dhat = CplxVec::Zero(N);
  for (int l = 0; l < N; ++l) {
    if (2 * l == N) {
      // Nyquist bin of an even-length grid: split evenly between +N/2 and
      // -N/2 so the time-domain vector stays real.
      double v = 0.0;
      for (const auto& s : spikes.spikes) v += s.amplitude * std::cos(M_PI * s.delay / T);
      dhat[l] = v;
    } else {
      const double m = (2 * l < N) ? l : l - N;
      Complex v(0.0, 0.0);
      for (const auto& s : spikes.spikes)
        v += s.amplitude * std::polar(1.0, -2.0 * M_PI * m * s.delay / (N * T));
      dhat[l] = v;
    }
  }
  return idft(dhat);
}

MeasurementTrace simulate_trace(const KernelTrace& kernel, const SpikeTrain& spikes,
                                SimulationMode mode) {
  kernel.grid.validate();
  const double window = kernel.grid.window();
  spikes.validate(window);
  const int N = kernel.grid.num_samples;
  if (kernel.samples.size() != N) throw std::invalid_argument("kernel sample length mismatch");

  MeasurementTrace out;
  out.grid = kernel.grid;
  out.samples = RealVec::Zero(N);
  if (mode == SimulationMode::continuous) {
    const double T = kernel.grid.sample_period;
    for (int n = 0; n < N; ++n) {
      double acc = 0.0;
      for (const auto& s : spikes.spikes) acc += s.amplitude * kernel.eval(n * T - s.delay);
      out.samples[n] = acc;
    }
  } else {
    const CplxVec d = dirichlet_spikes(spikes, kernel.grid);
    out.samples = circ_conv(kernel.samples.cast<Complex>(), d).real();
  }
  return out;
}

MeasurementTrace add_noise(const MeasurementTrace& g, double snr_db, std::uint64_t seed) {
  g.grid.validate();
  if (std::isinf(snr_db) && snr_db > 0) return g;
  if (!(snr_db > 0)) throw std::invalid_argument("snr_db must be positive or infinite");

  const int N = g.grid.num_samples;
  const double s = g.samples.norm() / (std::sqrt(static_cast<double>(N)) * std::pow(10.0, snr_db / 20.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MeasurementTrace out = g;
  for (int n = 0; n < N; ++n) out.samples[n] += s * gauss(rng);
  return out;
}

ImageTensor simulate_tensor(const SpikeScene& scene, const KernelTrace& kernel, double snr_db,
                            std::uint64_t seed, SimulationMode mode) {
  kernel.grid.validate();
  scene.validate(kernel.grid.window());

  ImageTensor tensor;
  tensor.height = scene.height;
  tensor.width = scene.width;
  tensor.grid = kernel.grid;
  tensor.data.assign(static_cast<std::size_t>(scene.height) * scene.width * kernel.grid.num_samples,
                     0.0);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const std::uint64_t pixel_index = static_cast<std::uint64_t>(y) * scene.width + x;
      MeasurementTrace trace = simulate_trace(kernel, scene.at(y, x), mode);
      trace = add_noise(trace, snr_db, seed ^ pixel_index);
      tensor.set_trace(y, x, trace.samples);
    }
  }
  return tensor;
}

} // namespace tofsr
