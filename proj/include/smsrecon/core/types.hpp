#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace smsrecon {

using Index = Eigen::Index;
using Complex = std::complex<double>;

// Row-major 2-D arrays. Rows run along readout, columns along phase-encode.
using CxImage = Eigen::Array<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ReImage = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Grid {
  Index readout = 0; // M
  Index phase = 0;   // N

  Index size() const { return readout * phase; }
  bool operator==(Grid const &) const = default;
};

std::string to_string(Grid const &g);

/// Boolean k-space sampling pattern shared by all coils. `acs` marks the fully
/// sampled calibration block (subset of `kept`); it may be empty.
struct SamplingMask {
  BoolGrid kept;
  BoolGrid acs;
  double acceleration = 1.0;

  Grid grid() const { return {kept.rows(), kept.cols()}; }
  Index count() const { return kept.count(); }
  bool has_acs() const { return acs.size() > 0; }

  static SamplingMask full(Grid g);
};

/// Uniform line skipping along phase-encode plus a fully sampled center block
/// of `acs_lines` lines. Line n is on the acceleration grid when
/// (n - N/2) is a multiple of R.
SamplingMask make_uniform_mask(Grid g, int acceleration, Index acs_lines);

/// True when phase-encode line n lies on the R-grid of make_uniform_mask.
bool on_acceleration_grid(Index n, Index phase_lines, int acceleration);

/// Every column that has any kept sample must be kept along its full readout.
void validate_line_mask(SamplingMask const &mask);

struct KSpaceVolume {
  std::vector<CxImage> coils; // each M x N

  KSpaceVolume() = default;
  KSpaceVolume(Index num_coils, Grid g);

  Index num_coils() const { return static_cast<Index>(coils.size()); }
  Grid grid() const;
  double squared_norm() const;
  void set_zero();
};

/// S slices of M x N concatenated along readout into an (S*M) x N image.
struct SliceStackImage {
  CxImage data;
  Index num_slices = 0;

  SliceStackImage() = default;
  SliceStackImage(Index slices, Grid g);
  SliceStackImage(CxImage stacked, Index slices);

  Index slice_extent() const { return num_slices > 0 ? data.rows() / num_slices : 0; }
  Grid slice_grid() const { return {slice_extent(), data.cols()}; }

  auto slice(Index i) { return data.middleRows(i * slice_extent(), slice_extent()); }
  auto slice(Index i) const { return data.middleRows(i * slice_extent(), slice_extent()); }
};

std::vector<CxImage> split_stack(SliceStackImage const &x);
SliceStackImage concat_slices(std::vector<CxImage> const &slices);

/// maps[slice][coil], each M x N.
struct CoilSensitivities {
  std::vector<std::vector<CxImage>> maps;

  Index num_slices() const { return static_cast<Index>(maps.size()); }
  Index num_coils() const { return maps.empty() ? 0 : static_cast<Index>(maps.front().size()); }
  Grid grid() const;
  /// Pixels where any coil of slice i is nonzero.
  BoolGrid support(Index slice) const;
  /// Support of every slice stacked like a SliceStackImage.
  BoolGrid stacked_support() const;
};

// Real inner product of the underlying R^2n vectors: Re sum conj(a) b.
double real_dot(CxImage const &a, CxImage const &b);
double real_dot(KSpaceVolume const &a, KSpaceVolume const &b);
Complex inner(KSpaceVolume const &a, KSpaceVolume const &b);

} // namespace smsrecon
