#include "smsrecon/core/encoding.hpp"

#include "smsrecon/core/fft.hpp"

#include <cmath>
#include <numbers>

namespace smsrecon {

std::vector<double> caipi_shifts(Index num_slices)
{
  std::vector<double> s(static_cast<size_t>(num_slices));
  for (Index i = 0; i < num_slices; ++i) s[static_cast<size_t>(i)] = double(i % num_slices) / double(num_slices);
  return s;
}

Eigen::Array<Complex, 1, Eigen::Dynamic> fov_shift_ramp(Index phase_lines, double shift_fraction)
{
  Eigen::Array<Complex, 1, Eigen::Dynamic> r(phase_lines);
  for (Index l = 0; l < phase_lines; ++l) {
    r(l) = std::polar(1.0, -2.0 * std::numbers::pi * centered_frequency(l, phase_lines) * shift_fraction);
  }
  return r;
}

CxImage apply_fov_shift(CxImage const &img, double shift_fraction, bool inverse)
{
  if (!(std::abs(shift_fraction) < 1.0)) throw ShapeError("apply_fov_shift: |shift| must be < 1");
  if (img.size() == 0) throw ShapeError("apply_fov_shift: empty image");
  if (shift_fraction == 0.0) return img;
  auto const &fft = fft_for(img.rows(), img.cols());
  CxImage k = img;
  fft.forward(k);
  auto ramp = fov_shift_ramp(img.cols(), shift_fraction);
  if (inverse) ramp = ramp.conjugate();
  k.rowwise() *= ramp;
  fft.inverse(k);
  return k;
}

SmsEncoding::SmsEncoding(CoilSensitivities sens, SamplingMask mask, std::vector<double> fov_shifts)
  : sens_(std::move(sens)), mask_(std::move(mask)), shifts_(std::move(fov_shifts))
{
  Index const S = sens_.num_slices();
  if (S < 1) throw ShapeError("encoding: at least one slice required");
  if (sens_.num_coils() < 1) throw ShapeError("encoding: at least one coil required");
  if (static_cast<Index>(shifts_.size()) != S) throw ShapeError("encoding: one FOV shift per slice required");
  Grid const g = sens_.grid();
  for (auto const &per_slice : sens_.maps) {
    if (static_cast<Index>(per_slice.size()) != sens_.num_coils()) throw ShapeError("encoding: ragged coil list");
    for (auto const &m : per_slice) {
      if (m.rows() != g.readout || m.cols() != g.phase) throw ShapeError("encoding: sensitivity grid mismatch");
    }
  }
  if (mask_.grid() != g) throw ShapeError("encoding: mask grid " + to_string(mask_.grid()) + " != " + to_string(g));
  for (double s : shifts_) {
    if (!(std::abs(s) < 1.0)) throw ShapeError("encoding: |FOV shift| must be < 1");
    ramps_.push_back(fov_shift_ramp(g.phase, s));
  }
  fft_ = &fft_for(g.readout, g.phase);
  ReImage const keep = mask_.kept.cast<double>();
  for (Index i = 0; i < S; ++i) {
    CxImage kw = fft_->post() * keep.cast<Complex>();
    kw.rowwise() *= ramps_[size_t(i)];
    kspace_weights_.push_back(std::move(kw));
    image_weights_.emplace_back();
    for (auto const &m : sens_.maps[size_t(i)]) image_weights_.back().push_back(fft_->pre() * m);
  }
}

SmsEncoding::SmsEncoding(CoilSensitivities sens, SamplingMask mask)
  : SmsEncoding(sens, std::move(mask), caipi_shifts(sens.num_slices()))
{
}

KSpaceVolume SmsEncoding::forward(SliceStackImage const &x) const
{
  Grid const g = grid();
  if (x.num_slices != num_slices()) throw ShapeError("forward_sms: slice count mismatch");
  if (x.data.rows() != num_slices() * g.readout || x.data.cols() != g.phase) {
    throw ShapeError("forward_sms: stack shape mismatch");
  }
  KSpaceVolume y(num_coils(), g);
  CxImage tmp(g.readout, g.phase);
  for (Index i = 0; i < num_slices(); ++i) {
    auto const xi = x.slice(i);
    auto const &kw = kspace_weights_[size_t(i)];
    for (Index c = 0; c < num_coils(); ++c) {
      tmp = image_weights_[size_t(i)][size_t(c)] * xi;
      fft_->raw_forward(tmp);
      y.coils[size_t(c)] += kw * tmp;
    }
  }
  return y;
}

SliceStackImage SmsEncoding::adjoint(KSpaceVolume const &y) const
{
  Grid const g = grid();
  if (y.num_coils() != num_coils() || y.grid() != g) throw ShapeError("adjoint_sms: k-space shape mismatch");
  SliceStackImage x(num_slices(), g);
  CxImage masked(g.readout, g.phase), tmp(g.readout, g.phase);
  for (Index c = 0; c < num_coils(); ++c) {
    // select, not multiply: samples outside the mask may hold anything
    masked = mask_.kept.select(y.coils[size_t(c)], Complex(0));
    for (Index i = 0; i < num_slices(); ++i) {
      tmp = kspace_weights_[size_t(i)].conjugate() * masked;
      fft_->raw_inverse(tmp);
      x.slice(i) += image_weights_[size_t(i)][size_t(c)].conjugate() * tmp;
    }
  }
  return x;
}

SliceStackImage SmsEncoding::normal(SliceStackImage const &x) const { return adjoint(forward(x)); }

KSpaceVolume SmsEncoding::apply_mask(KSpaceVolume const &y) const
{
  if (y.grid() != grid()) throw ShapeError("apply_mask: grid mismatch");
  KSpaceVolume out = y;
  for (auto &c : out.coils) c = mask_.kept.select(c, Complex(0));
  return out;
}

SmsEncoding SmsEncoding::with_mask(SamplingMask mask) const { return SmsEncoding(sens_, std::move(mask), shifts_); }

KSpaceVolume forward_sms(SliceStackImage const &x, SmsEncoding const &E) { return E.forward(x); }

SliceStackImage adjoint_sms(KSpaceVolume const &y, SmsEncoding const &E) { return E.adjoint(y); }

KSpaceVolume single_slice_kspace(CxImage const &slice_image, SmsEncoding const &E, Index slice)
{
  Grid const g = E.grid();
  if (slice < 0 || slice >= E.num_slices()) throw ShapeError("single_slice_kspace: slice out of range");
  if (slice_image.rows() != g.readout || slice_image.cols() != g.phase) throw ShapeError("single_slice_kspace: grid");
  auto const &fft = fft_for(g.readout, g.phase);
  auto const ramp = fov_shift_ramp(g.phase, E.fov_shifts()[size_t(slice)]);
  KSpaceVolume y(E.num_coils(), g);
  for (Index c = 0; c < E.num_coils(); ++c) {
    auto &yc = y.coils[size_t(c)];
    yc = E.sensitivities().maps[size_t(slice)][size_t(c)] * slice_image;
    fft.forward(yc);
    yc.rowwise() *= ramp;
  }
  return y;
}

} // namespace smsrecon
