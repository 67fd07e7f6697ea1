#pragma once

#include <cstdint>

#include "tofsr/tensor.hpp"
#include "tofsr/types.hpp"

namespace tofsr {

enum class SimulationMode { continuous, circular };

// Length-N complex vector d such that circular convolution of the kernel
// samples with d reproduces the spike-filtered trace for bandlimited kernels.
// Built in the DFT domain with the signed (aliased) frequency assignment so d
// is real-valued for real amplitudes; the even-N Nyquist bin carries the
// half-split cosine term. Requires N >= 2K.
CplxVec dirichlet_spikes(const SpikeTrain& spikes, const AcquisitionGrid& grid);

// Continuous mode: g[n] = sum_k gamma_k * phi(nT - tau_k) using the analytic
// kernel descriptor (periodized evaluation). Circular mode: g = phi (*) d with
// d from dirichlet_spikes.
MeasurementTrace simulate_trace(const KernelTrace& kernel, const SpikeTrain& spikes,
                                SimulationMode mode);

// Adds iid zero-mean Gaussian noise with per-sample standard deviation chosen
// so the expected SNR in dB equals snr_db. snr_db = +infinity returns the
// input unchanged. Deterministic given the seed.
MeasurementTrace add_noise(const MeasurementTrace& g, double snr_db, std::uint64_t seed);

// Simulates every pixel of the scene with the shared kernel, then perturbs
// each trace independently with per-pixel seed = seed XOR pixel_index.
ImageTensor simulate_tensor(const SpikeScene& scene, const KernelTrace& kernel, double snr_db,
                            std::uint64_t seed, SimulationMode mode = SimulationMode::continuous);

} // namespace tofsr
