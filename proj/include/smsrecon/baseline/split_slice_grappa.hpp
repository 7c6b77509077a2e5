#pragma once

#include "smsrecon/core/encoding.hpp"
#include "smsrecon/phantom/phantom.hpp"

#include <Eigen/Core>

#include <vector>

namespace smsrecon {

/// Kernel footprints. Readout offsets are contiguous; phase-encode offsets
/// step by R so every source lies on an acquired line.
struct SgOptions {
  Index sg_kx = 5, sg_ky = 5;           // slice separation, ky sources at 0, +-R, +-2R
  Index grappa_kx = 5, grappa_ky = 4;   // in-plane fill, sources straddle the target
  double tikhonov = 1e-4;               // relative to the largest eigenvalue of the Gram matrix
};

/// Split slice-GRAPPA kernels plus per-slice in-plane GRAPPA kernels.
/// slice_kernels[i] maps a source vector (coil-major, then kx, then ky) to
/// the C coil values of slice i at the kernel center.
struct SgKernelSet {
  Index num_slices = 0;
  Index num_coils = 0;
  int acceleration = 1;
  SgOptions options;
  std::vector<Eigen::MatrixXcd> slice_kernels;
  /// inplane_kernels[i][t-1] fills lines t = 1..R-1 past an acquired line.
  std::vector<std::vector<Eigen::MatrixXcd>> inplane_kernels;
  double slice_lambda = 0;
  std::vector<double> inplane_lambda;
};

/// Fits kernels from fully sampled single-slice data over phase-encode lines
/// [first_line, first_line + num_lines). The slice-separation fit stacks the
/// calibration of every slice: targets are slice i's samples for slice i and
/// zero for every other slice, all sharing one Tikhonov-regularized Gram matrix.
SgKernelSet calibrate_split_sg(std::vector<KSpaceVolume> const &single_slice_calibration, Index first_line,
                               Index num_lines, int acceleration, SgOptions const &opts = {});
SgKernelSet calibrate_split_sg(CalibrationData const &cal, int acceleration, SgOptions const &opts = {});

/// Collapsed source rows used by the slice-separation fit, one block per
/// slice, in the order the calibration loops over them. Exposed for testing.
struct SgCalibrationSystem {
  std::vector<Eigen::MatrixXcd> sources; // per slice: rows x P
  std::vector<Eigen::MatrixXcd> targets; // per slice: rows x C
};
SgCalibrationSystem split_sg_system(std::vector<KSpaceVolume> const &single_slice_calibration, Index first_line,
                                    Index num_lines, int acceleration, SgOptions const &opts);

/// Separates collapsed k-space into per-slice k-space on the R-grid lines
/// (other lines are zero). With one slice the acquired data pass through.
std::vector<KSpaceVolume> separate_slices(KSpaceVolume const &y, SgKernelSet const &kernels,
                                          SamplingMask const &mask);

/// Fills every line of `k` not marked in `present` with in-plane kernels
/// (kernels[t-1] for lines t past the previous R-grid line).
void grappa_fill(KSpaceVolume &k, std::vector<Eigen::MatrixXcd> const &kernels, int acceleration,
                 SgOptions const &opts, BoolGrid const &present);

/// Full baseline: separate, fill, remove the FOV shifts, inverse transform and
/// combine coils with the sensitivities of E.
SliceStackImage apply_split_sg(KSpaceVolume const &y, SgKernelSet const &kernels, SmsEncoding const &E);

/// Output energy of slice j divided by the energy of the slice that was
/// present, for separation of single-slice collapsed data.
double slice_leakage(std::vector<KSpaceVolume> const &separated, Index present_slice);

} // namespace smsrecon
