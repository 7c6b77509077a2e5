#pragma once

#include "smsrecon/core/fft.hpp"
#include "smsrecon/core/types.hpp"

#include <vector>

namespace smsrecon {

/// Blipped-CAIPI default: slice i is shifted by (i mod S)/S of the FOV along
/// phase-encode.
std::vector<double> caipi_shifts(Index num_slices);

/// Linear phase along phase-encode that shifts image content by
/// shift_fraction * N pixels (circularly). Row vector of length N.
Eigen::Array<Complex, 1, Eigen::Dynamic> fov_shift_ramp(Index phase_lines, double shift_fraction);

/// Circularly shifts `img` along phase-encode by shift_fraction * N pixels. With
/// `inverse` set the shift is undone exactly.
CxImage apply_fov_shift(CxImage const &img, double shift_fraction, bool inverse = false);

/// Multi-coil SMS encoding E = [E_1 ... E_S]: per slice, multiply by coil
/// sensitivities, shift the FOV, Fourier transform; sum over slices; keep the
/// sampled locations. Immutable once constructed.
class SmsEncoding {
public:
  SmsEncoding(CoilSensitivities sens, SamplingMask mask, std::vector<double> fov_shifts);
  /// Uses caipi_shifts(S).
  SmsEncoding(CoilSensitivities sens, SamplingMask mask);

  KSpaceVolume forward(SliceStackImage const &x) const;
  SliceStackImage adjoint(KSpaceVolume const &y) const;
  /// E^H E x
  SliceStackImage normal(SliceStackImage const &x) const;

  /// Zeroes every unsampled location of y. Selection, not multiplication, so
  /// non-finite values outside the mask never propagate.
  KSpaceVolume apply_mask(KSpaceVolume const &y) const;

  /// Same coils and shifts, different sampling pattern.
  SmsEncoding with_mask(SamplingMask mask) const;

  CoilSensitivities const &sensitivities() const { return sens_; }
  SamplingMask const &mask() const { return mask_; }
  std::vector<double> const &fov_shifts() const { return shifts_; }
  Index num_slices() const { return sens_.num_slices(); }
  Index num_coils() const { return sens_.num_coils(); }
  Grid grid() const { return sens_.grid(); }

private:
  CoilSensitivities sens_;
  SamplingMask mask_;
  std::vector<double> shifts_;
  std::vector<Eigen::Array<Complex, 1, Eigen::Dynamic>> ramps_;
  CenteredFft2 const *fft_ = nullptr;
  std::vector<std::vector<CxImage>> image_weights_; // pre * s_ic
  std::vector<CxImage> kspace_weights_;             // mask * post * ramp_i
};

KSpaceVolume forward_sms(SliceStackImage const &x, SmsEncoding const &E);
SliceStackImage adjoint_sms(KSpaceVolume const &y, SmsEncoding const &E);

/// Per-slice fully sampled multi-coil k-space of one slice, FOV shift included:
/// F(shift_i(s_ic x_i)). Used for calibration data and supervised targets.
KSpaceVolume single_slice_kspace(CxImage const &slice_image, SmsEncoding const &E, Index slice);

} // namespace smsrecon
