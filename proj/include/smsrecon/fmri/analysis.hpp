#pragma once

#include "smsrecon/core/types.hpp"
#include "smsrecon/phantom/phantom.hpp"

#include <Eigen/Core>

#include <vector>

namespace smsrecon {

/// values(voxel, frame).
struct VoxelTimeSeries {
  Eigen::MatrixXd values;
  double tr = 1.0;
  Run run = Run::kCounterClockwise;

  Index num_voxels() const { return values.rows(); }
  Index num_frames() const { return values.cols(); }
};

/// Magnitude of the pixels in `where` (row-major order) across frames.
VoxelTimeSeries magnitude_series(std::vector<SliceStackImage> const &frames, BoolGrid const &where, double tr,
                                 Run run);

struct ScaledSeries {
  VoxelTimeSeries series;
  Eigen::Array<bool, Eigen::Dynamic, 1> excluded; // zero-mean voxels, left at 0
};

/// Per voxel, values * 100 / mean.
ScaledSeries scale_to_mean100(VoxelTimeSeries const &s);

/// Legendre polynomials P_0..P_order on frames mapped to [-1, 1], columns of
/// a frames x (order + 1) matrix.
Eigen::MatrixXd legendre_regressors(Index frames, Index order);

struct NuisanceFit {
  Eigen::MatrixXd residual; // voxels x frames
  Eigen::MatrixXd fitted;
  Index num_regressors = 0; // rank of the design
};

/// Orthogonal projection off the span of the Legendre polynomials up to
/// `order` plus any extra regressor columns (frames x q).
NuisanceFit project_out_nuisance(Eigen::MatrixXd const &values, Index order = 3,
                                 Eigen::MatrixXd const &extra = Eigen::MatrixXd());

/// Reverses the frame order, then shifts circularly: out[t] = rev[(t - shift) mod T].
VoxelTimeSeries align_runs(VoxelTimeSeries const &cw, Index hemodynamic_shift);

struct PhaseAmplitude {
  Eigen::VectorXd amplitude;
  Eigen::VectorXd phase; // (-pi, pi]
};

/// c = sum_t x_t exp(+2 pi i b t / T) at bin b = T TR / period, so that
/// cos(2 pi f t TR - phi) has phase phi. amplitude = 2|c| / T. A period that
/// does not fit a whole number of times into the run is rejected.
PhaseAmplitude task_phase_amplitude(Eigen::MatrixXd const &values, double tr, double period);

struct WelchOptions {
  Index segment_frames = 16;
  double overlap = 0.5; // fraction of a segment
  /// 0: evaluate each windowed segment directly at the frequency (infinitely
  /// zero-padded). Otherwise the frequency must sit on a bin of an nfft-point DFT.
  Index nfft = 0;
};

/// Magnitude-squared coherence at `frequency` (Hz) from Hann-windowed,
/// averaged cross- and auto-spectra. Voxels with zero power get 0.
Eigen::VectorXd coherence_between_runs(Eigen::MatrixXd const &run1, Eigen::MatrixXd const &run2, double tr,
                                       double frequency, WelchOptions const &opts = {});

/// Number of segments Welch averages for a run of `frames`.
Index welch_segment_count(Index frames, WelchOptions const &opts);

/// mean(processed) / std(residual), std with denominator T - dof. A zero
/// residual gives +inf.
Eigen::VectorXd tsnr(Eigen::MatrixXd const &processed, Eigen::MatrixXd const &residual, Index dof);

/// 100 (a - b) / b; NaN where b is 0 or either side is not finite.
Eigen::VectorXd percent_change(Eigen::VectorXd const &a, Eigen::VectorXd const &b);

/// Mean over finite entries (the +inf tSNR sentinel is skipped). NaN if none.
double finite_mean(Eigen::VectorXd const &v);

struct PhaseMap {
  Eigen::VectorXd phase; // NaN where not retained
  Eigen::VectorXd coherence;
  Eigen::Array<bool, Eigen::Dynamic, 1> retained;
  double threshold = 0.55;
  Index surviving = 0;
};

PhaseMap threshold_phase_map(Eigen::VectorXd const &phase, Eigen::VectorXd const &coherence, double threshold = 0.55);

struct AnalysisConfig {
  double tr = 1.0;
  double task_period = 32.0;
  Index poly_order = 3;
  Index hemodynamic_shift = 0;
  double coherence_threshold = 0.55;
  WelchOptions welch;

  double task_frequency() const { return 1.0 / task_period; }
  void validate() const;
};

/// The full chain on both runs of one reconstruction.
struct RunAnalysis {
  Eigen::VectorXd tsnr;       // mean of the per-run tSNR
  Eigen::VectorXd amplitude;  // of the run-averaged aligned series, in % of mean
  Eigen::VectorXd phase;
  Eigen::VectorXd coherence;
  PhaseMap map;
  Eigen::Array<bool, Eigen::Dynamic, 1> excluded;
  Index num_regressors = 0;
};

RunAnalysis analyze_runs(VoxelTimeSeries const &ccw, VoxelTimeSeries const &cw, AnalysisConfig const &cfg);

/// Wraps to (-pi, pi].
double wrap_phase(double a);

} // namespace smsrecon
