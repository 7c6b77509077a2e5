#include "smsrecon/core/types.hpp"

#include <sstream>

namespace smsrecon {

std::string to_string(Grid const &g)
{
  std::ostringstream os;
  os << g.readout << "x" << g.phase;
  return os.str();
}

SamplingMask SamplingMask::full(Grid g)
{
  SamplingMask m;
  m.kept = BoolGrid::Constant(g.readout, g.phase, true);
  m.acceleration = 1.0;
  return m;
}

bool on_acceleration_grid(Index n, Index phase_lines, int acceleration)
{
  Index const d = n - phase_lines / 2;
  return ((d % acceleration) + acceleration) % acceleration == 0;
}

SamplingMask make_uniform_mask(Grid g, int acceleration, Index acs_lines)
{
  if (acceleration < 1) throw ConfigError("mask: acceleration must be >= 1");
  if (acs_lines < 0 || acs_lines > g.phase) throw ConfigError("mask: ACS block does not fit the grid");
  SamplingMask m;
  m.kept = BoolGrid::Constant(g.readout, g.phase, false);
  m.acs = BoolGrid::Constant(g.readout, g.phase, false);
  m.acceleration = acceleration;
  Index const acs_start = g.phase / 2 - acs_lines / 2;
  for (Index n = 0; n < g.phase; ++n) {
    bool const in_acs = n >= acs_start && n < acs_start + acs_lines;
    if (in_acs) m.acs.col(n).setConstant(true);
    if (in_acs || on_acceleration_grid(n, g.phase, acceleration)) m.kept.col(n).setConstant(true);
  }
  return m;
}

void validate_line_mask(SamplingMask const &mask)
{
  for (Index n = 0; n < mask.kept.cols(); ++n) {
    Index const c = mask.kept.col(n).count();
    if (c != 0 && c != mask.kept.rows()) throw ShapeError("mask: phase-encode line only partly sampled");
  }
  if (mask.has_acs() && (mask.acs && !mask.kept).any()) throw ShapeError("mask: ACS outside the sampled set");
}

KSpaceVolume::KSpaceVolume(Index num_coils, Grid g)
  : coils(static_cast<size_t>(num_coils), CxImage::Zero(g.readout, g.phase))
{
}

Grid KSpaceVolume::grid() const
{
  if (coils.empty()) return {};
  return {coils.front().rows(), coils.front().cols()};
}

double KSpaceVolume::squared_norm() const
{
  double s = 0;
  for (auto const &c : coils) s += c.abs2().sum();
  return s;
}

void KSpaceVolume::set_zero()
{
  for (auto &c : coils) c.setZero();
}

SliceStackImage::SliceStackImage(Index slices, Grid g)
  : data(CxImage::Zero(slices * g.readout, g.phase)), num_slices(slices)
{
}

SliceStackImage::SliceStackImage(CxImage stacked, Index slices)
  : data(std::move(stacked)), num_slices(slices)
{
  if (slices < 1 || data.rows() % slices != 0) throw ShapeError("stack: rows not divisible by slice count");
}

std::vector<CxImage> split_stack(SliceStackImage const &x)
{
  if (x.num_slices < 1) throw ShapeError("split_stack: empty stack");
  std::vector<CxImage> out;
  out.reserve(static_cast<size_t>(x.num_slices));
  for (Index i = 0; i < x.num_slices; ++i) out.emplace_back(x.slice(i));
  return out;
}

SliceStackImage concat_slices(std::vector<CxImage> const &slices)
{
  if (slices.empty()) throw ShapeError("concat_slices: no slices");
  Index const M = slices.front().rows(), N = slices.front().cols();
  for (auto const &s : slices) {
    if (s.rows() != M || s.cols() != N) throw ShapeError("concat_slices: inconsistent slice shapes");
  }
  Index const S = static_cast<Index>(slices.size());
  SliceStackImage out(S, Grid{M, N});
  for (Index i = 0; i < S; ++i) out.slice(i) = slices[static_cast<size_t>(i)];
  return out;
}

Grid CoilSensitivities::grid() const
{
  if (maps.empty() || maps.front().empty()) return {};
  return {maps.front().front().rows(), maps.front().front().cols()};
}

BoolGrid CoilSensitivities::support(Index slice) const
{
  Grid const g = grid();
  BoolGrid s = BoolGrid::Constant(g.readout, g.phase, false);
  for (auto const &m : maps[static_cast<size_t>(slice)]) s = s || (m != Complex(0));
  return s;
}

BoolGrid CoilSensitivities::stacked_support() const
{
  Grid const g = grid();
  BoolGrid s(num_slices() * g.readout, g.phase);
  for (Index i = 0; i < num_slices(); ++i) s.middleRows(i * g.readout, g.readout) = support(i);
  return s;
}

double real_dot(CxImage const &a, CxImage const &b)
{
  return (a.real() * b.real() + a.imag() * b.imag()).sum();
}

double real_dot(KSpaceVolume const &a, KSpaceVolume const &b)
{
  double s = 0;
  for (size_t c = 0; c < a.coils.size(); ++c) s += real_dot(a.coils[c], b.coils[c]);
  return s;
}

Complex inner(KSpaceVolume const &a, KSpaceVolume const &b)
{
  Complex s = 0;
  for (size_t c = 0; c < a.coils.size(); ++c) s += (a.coils[c].conjugate() * b.coils[c]).sum();
  return s;
}

} // namespace smsrecon
