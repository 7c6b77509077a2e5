#pragma once

#include "smsrecon/core/encoding.hpp"
#include "smsrecon/core/types.hpp"

#include <cstdint>
#include <vector>

namespace smsrecon {

/// Ellipse in pixel units. Rows run along readout, columns along phase-encode.
struct Ellipse {
  double center_row = 0, center_col = 0;
  double semi_row = 1, semi_col = 1;
  double angle = 0; // radians, counter-clockwise from the row axis
  double intensity = 1;
};

struct PhantomSpec {
  Grid grid{64, 64};
  Index num_slices = 3;
  Index num_coils = 8;
  /// ellipses[slice], painted in order; later ellipses cover earlier ones.
  std::vector<std::vector<Ellipse>> ellipses;
  std::uint64_t seed = 0;
  /// Peak magnitude of the smooth background phase, radians.
  double phase_scale = 0.6;
};

void validate(PhantomSpec const &spec);

/// Brain-like spec: head, white matter, ventricles and a few random blobs,
/// varied per slice. Deterministic in `seed`.
PhantomSpec random_phantom_spec(Grid grid, Index num_slices, Index num_coils, std::uint64_t seed);

/// Anti-aliased (4x4 supersampled) ellipse magnitude times a smooth
/// low-order polynomial phase drawn from the spec seed.
SliceStackImage make_phantom(PhantomSpec const &spec);

/// Object support dilated by two pixels, stacked like the phantom.
BoolGrid phantom_support(PhantomSpec const &spec);

/// Coil array layout in FOV units: coils alternate between two rings at
/// +-ring_z; slices sit slice_spacing apart along z, centered on zero.
struct CoilGeometry {
  double radius = 0.7;
  double ring_z = 0.5;
  double width = 0.25;
  double phase_slope = 4.0;
  double slice_spacing = 0.7;
};

/// Gaussian coil lobes on two rings around the slab, normalized so that the
/// per-pixel sum of |s|^2 over coils is 1 on the support and 0 elsewhere.
CoilSensitivities make_sensitivities(PhantomSpec const &spec, CoilGeometry const &geom = {});

struct ActivationSpec {
  double task_period = 32.0;   // seconds
  double repetition_time = 1.0; // seconds
  Index num_frames = 128;
  double amplitude = 0.05; // fraction of baseline
  BoolGrid active;         // stacked (S*M) x N
  ReImage phase_offset;    // radians, stacked (S*M) x N

  double task_frequency() const { return 1.0 / task_period; }
};

void validate(ActivationSpec const &spec);

/// Posterior ring of the head in each slice; the phase offset follows twice
/// the polar angle around the slice center so it spans (-pi, pi].
ActivationSpec make_wedge_activation(PhantomSpec const &spec, double task_period = 32.0,
                                     double repetition_time = 1.0, Index num_frames = 128, double amplitude = 0.05);

enum class Run { kCounterClockwise, kClockwise };

/// Ground truth of frame t. CCW: baseline * (1 + a cos(w t TR - phi)).
/// CW: baseline * (1 + a cos(-w (t + 1) TR - phi)); the wedge turns the other
/// way and starts so that plain frame reversal lines it up with CCW.
SliceStackImage activation_frame(SliceStackImage const &baseline, ActivationSpec const &act, Run run, Index t);

struct TimeSeries {
  std::vector<SliceStackImage> ccw;
  std::vector<SliceStackImage> cw;
};

TimeSeries simulate_timeseries(SliceStackImage const &baseline, ActivationSpec const &act);

struct NoiseModel {
  double sigma = 0.0; // std of the complex noise, E|n|^2 = sigma^2
  std::uint64_t seed = 0;
};

/// Independent stream per (seed, stream id...). Used for frame-level noise.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

/// Unshifted per-slice fully sampled multi-coil k-space, F(s_ic x_i).
std::vector<KSpaceVolume> full_kspace(SliceStackImage const &truth, CoilSensitivities const &sens);

/// Collapse the slices with their FOV shifts, keep the sampled set and add
/// complex Gaussian noise to sampled locations only.
KSpaceVolume sample_kspace(std::vector<KSpaceVolume> const &per_slice_full, SamplingMask const &mask,
                           std::vector<double> const &fov_shifts, NoiseModel const &noise, std::uint64_t stream);

/// Per-slice single-band reference data over the ACS block (FOV shifts
/// included), for kernel calibration.
struct CalibrationData {
  std::vector<KSpaceVolume> single_slice; // zero outside the block
  Index first_line = 0;
  Index num_lines = 0;
};

CalibrationData make_calibration(std::vector<KSpaceVolume> const &per_slice_full, SamplingMask const &mask,
                                 std::vector<double> const &fov_shifts, NoiseModel const &noise,
                                 std::uint64_t stream);

/// Noise std giving mean |x| over the support divided by sigma equal to snr.
double sigma_for_snr(SliceStackImage const &truth, BoolGrid const &support, double snr);

struct AcquisitionSpec {
  Grid grid{64, 64};
  Index num_slices = 3;
  Index num_coils = 8;
  int inplane_acceleration = 2;
  Index acs_lines = 24;
  double snr = 20.0;
};

/// One simulated subject: phantom, coils, encoding and single-band
/// calibration. Frames are acquired on demand with acquire_frame.
struct SimulatedSubject {
  std::uint64_t seed = 0;
  PhantomSpec phantom;
  SliceStackImage truth;
  BoolGrid support;
  CoilSensitivities sens;
  SamplingMask mask;
  std::vector<double> fov_shifts;
  double noise_sigma = 0;
  CalibrationData calibration;

  SmsEncoding encoding() const { return SmsEncoding(sens, mask, fov_shifts); }
};

SimulatedSubject simulate_subject(AcquisitionSpec const &acq, std::uint64_t seed);

/// Undersampled noisy SMS k-space of `frame_truth` with the noise stream of
/// (subject seed, run, t).
KSpaceVolume acquire_frame(SimulatedSubject const &subject, SliceStackImage const &frame_truth, Run run, Index t);

} // namespace smsrecon
