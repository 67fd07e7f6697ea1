#pragma once

#include "tofsr/types.hpp"

namespace tofsr {

/// Samples the analytic kernel family on the grid and attaches the family for
/// later continuous-time evaluation. Throws "kernel not time-localized in
/// window" when the family's effective support does not fit inside one window.
KernelTrace make_kernel(const KernelFamily& family, const AcquisitionGrid& grid);

/// Continuous-time evaluation of a kernel family at time t (seconds), relative
/// to a window of the given length; the waveform is treated as periodic.
double eval_kernel_family(const KernelFamily& family, double t, double window);

/// Nominal peak location of the family within the window, in seconds.
double kernel_family_center(const KernelFamily& family, double window);

} // namespace tofsr
