#pragma once

#include "smsrecon/core/types.hpp"

#include <memory>

namespace smsrecon {

/// Orthonormal centered 2-D DFT. Index k of a dimension of length L maps to the
/// signed frequency k - floor(L/2), and likewise for image-domain positions:
///   X[k] = L^-1/2 sum_n x[n] exp(-2 pi i (k - c)(n - c) / L),  c = floor(L/2).
class CenteredFft2 {
public:
  CenteredFft2(Index rows, Index cols);

  void forward(CxImage &img) const;
  void inverse(CxImage &img) const;

  /// Unnormalized, unmodulated FFTW transforms: forward(x) is
  /// post * raw_forward(pre * x), inverse(k) is conj(pre) * raw_inverse(conj(post) * k).
  void raw_forward(CxImage &img) const;
  void raw_inverse(CxImage &img) const;
  CxImage const &pre() const { return pre_; }
  CxImage const &post() const { return post_; }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

private:
  struct Plans;
  Index rows_, cols_;
  CxImage pre_, post_;
  std::shared_ptr<Plans const> plans_;
};

/// Timed FFTW planning for plans created afterwards. Faster, but the chosen
/// algorithm, and so the last bits of every result, can change between runs.
void set_fft_measured_planning(bool on);

/// Shared transform for a grid. Plans are created once and reused.
CenteredFft2 const &fft_for(Index rows, Index cols);

/// Signed frequency of phase-encode column l.
inline double centered_frequency(Index l, Index length) { return static_cast<double>(l - length / 2); }

} // namespace smsrecon
