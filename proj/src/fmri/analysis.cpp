#include "smsrecon/fmri/analysis.hpp"

#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <numbers>

namespace smsrecon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Integer b with |x - b| tiny, or -1.
Index exact_bin(double x)
{
  double const r = std::round(x);
  return std::abs(x - r) < 1e-9 * std::max(1.0, std::abs(x)) ? Index(r) : -1;
}

} // namespace

double wrap_phase(double a)
{
  double const two_pi = 2 * std::numbers::pi;
  a = std::remainder(a, two_pi); // [-pi, pi]
  return a <= -std::numbers::pi ? a + two_pi : a;
}

VoxelTimeSeries magnitude_series(std::vector<SliceStackImage> const &frames, BoolGrid const &where, double tr,
                                 Run run)
{
  if (frames.empty()) throw ShapeError("magnitude_series: no frames");
  Index const nv = where.count();
  VoxelTimeSeries s;
  s.values.resize(nv, Index(frames.size()));
  s.tr = tr;
  s.run = run;
  for (size_t t = 0; t < frames.size(); ++t) {
    auto const &d = frames[t].data;
    if (d.rows() != where.rows() || d.cols() != where.cols()) throw ShapeError("magnitude_series: frame shape mismatch");
    Index v = 0;
    for (Index p = 0; p < where.size(); ++p)
      if (where.data()[p]) s.values(v++, Index(t)) = std::abs(d.data()[p]);
  }
  return s;
}

ScaledSeries scale_to_mean100(VoxelTimeSeries const &s)
{
  if (!s.values.allFinite()) throw NumericalError("scale_to_mean100: non-finite values");
  ScaledSeries out{s, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(s.num_voxels(), false)};
  for (Index v = 0; v < s.num_voxels(); ++v) {
    double const m = s.values.row(v).mean();
    if (m == 0.0) {
      out.excluded(v) = true;
      out.series.values.row(v).setZero();
    } else {
      out.series.values.row(v) *= 100.0 / m;
    }
  }
  return out;
}

Eigen::MatrixXd legendre_regressors(Index frames, Index order)
{
  if (frames < 2) throw ConfigError("legendre_regressors: need at least 2 frames");
  if (order < 0) throw ConfigError("legendre_regressors: order must be >= 0");
  Eigen::MatrixXd P(frames, order + 1);
  for (Index t = 0; t < frames; ++t) {
    double const x = 2.0 * double(t) / double(frames - 1) - 1.0;
    P(t, 0) = 1.0;
    if (order >= 1) P(t, 1) = x;
    for (Index n = 1; n < order; ++n) P(t, n + 1) = ((2.0 * n + 1.0) * x * P(t, n) - double(n) * P(t, n - 1)) / (n + 1.0);
  }
  return P;
}

NuisanceFit project_out_nuisance(Eigen::MatrixXd const &values, Index order, Eigen::MatrixXd const &extra)
{
  Index const T = values.cols();
  if (extra.size() > 0 && extra.rows() != T) throw ShapeError("project_out_nuisance: extra regressors need one row per frame");
  Eigen::MatrixXd D = legendre_regressors(T, order);
  if (extra.size() > 0) {
    D.conservativeResize(T, D.cols() + extra.cols());
    D.rightCols(extra.cols()) = extra;
  }
  if (D.cols() >= T) throw ConfigError("project_out_nuisance: as many regressors as frames");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  Index const rank = qr.rank();
  Eigen::MatrixXd const Q = Eigen::MatrixXd(qr.householderQ()).leftCols(rank);
  NuisanceFit fit;
  fit.fitted = (values * Q) * Q.transpose();
  fit.residual = values - fit.fitted;
  fit.num_regressors = rank;
  return fit;
}

VoxelTimeSeries align_runs(VoxelTimeSeries const &cw, Index hemodynamic_shift)
{
  Index const T = cw.num_frames();
  if (T < 1) throw ShapeError("align_runs: empty series");
  VoxelTimeSeries out = cw;
  for (Index t = 0; t < T; ++t) {
    Index const src = ((t - hemodynamic_shift) % T + T) % T; // index into the reversed run
    out.values.col(t) = cw.values.col(T - 1 - src);
  }
  return out;
}

PhaseAmplitude task_phase_amplitude(Eigen::MatrixXd const &values, double tr, double period)
{
  Index const T = values.cols();
  if (!(tr > 0) || !(period > 0)) throw ConfigError("task_phase_amplitude: TR and period must be > 0");
  Index const bin = exact_bin(double(T) * tr / period);
  if (bin < 1) throw ConfigError("task_phase_amplitude: period does not divide the run length");
  if (2 * bin >= T) throw ConfigError("task_phase_amplitude: task frequency at or above Nyquist");
  Eigen::VectorXd c(T), s(T);
  for (Index t = 0; t < T; ++t) {
    double const a = 2.0 * std::numbers::pi * double(bin * t % T) / double(T);
    c(t) = std::cos(a);
    s(t) = std::sin(a);
  }
  Eigen::VectorXd const re = values * c, im = values * s;
  PhaseAmplitude out{Eigen::VectorXd(values.rows()), Eigen::VectorXd(values.rows())};
  for (Index v = 0; v < values.rows(); ++v) {
    out.amplitude(v) = 2.0 * std::hypot(re(v), im(v)) / double(T);
    out.phase(v) = wrap_phase(std::atan2(im(v), re(v)));
  }
  return out;
}

Index welch_segment_count(Index frames, WelchOptions const &opts)
{
  Index const step = opts.segment_frames - Index(std::llround(opts.overlap * double(opts.segment_frames)));
  if (opts.segment_frames < 2 || opts.segment_frames > frames) return 0;
  if (step < 1) return 0;
  return (frames - opts.segment_frames) / step + 1;
}

Eigen::VectorXd coherence_between_runs(Eigen::MatrixXd const &run1, Eigen::MatrixXd const &run2, double tr,
                                       double frequency, WelchOptions const &opts)
{
  if (run1.rows() != run2.rows() || run1.cols() != run2.cols()) throw ShapeError("coherence: run shapes differ");
  if (!(opts.overlap >= 0 && opts.overlap < 1)) throw ConfigError("coherence: overlap must be in [0, 1)");
  Index const L = opts.segment_frames;
  Index const nseg = welch_segment_count(run1.cols(), opts);
  if (nseg < 1) throw ConfigError("coherence: segment length does not fit the run");
  if (!(frequency >= 0 && 2 * frequency * tr <= 1)) throw ConfigError("coherence: frequency outside [0, Nyquist]");
  Index bin = -1;
  if (opts.nfft > 0) {
    if (opts.nfft < L) throw ConfigError("coherence: nfft shorter than the segment");
    bin = exact_bin(double(opts.nfft) * tr * frequency);
    if (bin < 0) throw ConfigError("coherence: frequency is not on a DFT bin");
  }
  Index const step = L - Index(std::llround(opts.overlap * double(L)));

  Eigen::VectorXd wc(L), ws(L); // periodic Hann times the bin's exp(-i ...)
  for (Index n = 0; n < L; ++n) {
    double const w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(n) / double(L)));
    double const cycles = bin >= 0 ? double(bin * n % opts.nfft) / double(opts.nfft)
                                   : std::fmod(frequency * tr * double(n), 1.0);
    double const a = 2.0 * std::numbers::pi * cycles;
    wc(n) = w * std::cos(a);
    ws(n) = -w * std::sin(a);
  }
  Index const V = run1.rows();
  Eigen::ArrayXd sxy_re = Eigen::ArrayXd::Zero(V), sxy_im = Eigen::ArrayXd::Zero(V);
  Eigen::ArrayXd sxx = Eigen::ArrayXd::Zero(V), syy = Eigen::ArrayXd::Zero(V);
  for (Index j = 0; j < nseg; ++j) {
    auto const a = run1.middleCols(j * step, L);
    auto const b = run2.middleCols(j * step, L);
    Eigen::ArrayXd const ar = (a * wc).array(), ai = (a * ws).array();
    Eigen::ArrayXd const br = (b * wc).array(), bi = (b * ws).array();
    // same expression for cross and auto terms, so run2 == run1 gives exactly 1
    sxy_re += ar * br + ai * bi;
    sxy_im += ai * br - ar * bi;
    sxx += ar * ar + ai * ai;
    syy += br * br + bi * bi;
  }
  Eigen::VectorXd out(V);
  for (Index v = 0; v < V; ++v) {
    double const den = sxx(v) * syy(v);
    double const num = sxy_re(v) * sxy_re(v) + sxy_im(v) * sxy_im(v);
    out(v) = den > 0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
  }
  return out;
}

Eigen::VectorXd tsnr(Eigen::MatrixXd const &processed, Eigen::MatrixXd const &residual, Index dof)
{
  if (processed.rows() != residual.rows() || processed.cols() != residual.cols()) throw ShapeError("tsnr: shape mismatch");
  Index const T = residual.cols();
  if (dof < 0 || dof >= T) throw ConfigError("tsnr: degrees of freedom must leave at least one frame");
  Eigen::VectorXd out(processed.rows());
  for (Index v = 0; v < processed.rows(); ++v) {
    double const sd = std::sqrt(residual.row(v).squaredNorm() / double(T - dof));
    double const m = processed.row(v).mean();
    out(v) = sd > 0 ? m / sd : std::numeric_limits<double>::infinity();
  }
  return out;
}

Eigen::VectorXd percent_change(Eigen::VectorXd const &a, Eigen::VectorXd const &b)
{
  if (a.size() != b.size()) throw ShapeError("percent_change: size mismatch");
  Eigen::VectorXd out(a.size());
  for (Index i = 0; i < a.size(); ++i) {
    bool const ok = std::isfinite(a(i)) && std::isfinite(b(i)) && b(i) != 0;
    out(i) = ok ? 100.0 * (a(i) - b(i)) / b(i) : kNaN;
  }
  return out;
}

double finite_mean(Eigen::VectorXd const &v)
{
  double sum = 0;
  Index n = 0;
  for (Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v(i))) sum += v(i), ++n;
  return n ? sum / double(n) : kNaN;
}

PhaseMap threshold_phase_map(Eigen::VectorXd const &phase, Eigen::VectorXd const &coherence, double threshold)
{
  if (phase.size() != coherence.size()) throw ShapeError("threshold_phase_map: size mismatch");
  if (std::isnan(threshold)) throw ConfigError("threshold_phase_map: threshold is NaN");
  PhaseMap m;
  m.threshold = threshold;
  m.coherence = coherence;
  m.retained = coherence.array() >= threshold;
  m.phase = m.retained.select(phase.array(), kNaN).matrix();
  m.surviving = m.retained.count();
  return m;
}

void AnalysisConfig::validate() const
{
  if (!(tr > 0)) throw ConfigError("analysis: tr must be > 0");
  if (!(task_period > 0)) throw ConfigError("analysis: task_period must be > 0");
  if (poly_order < 0) throw ConfigError("analysis: poly_order must be >= 0");
  if (!(coherence_threshold >= 0)) throw ConfigError("analysis: coherence_threshold must be >= 0");
  if (welch.segment_frames < 2) throw ConfigError("analysis: Welch segment must have at least 2 frames");
  if (!(welch.overlap >= 0 && welch.overlap < 1)) throw ConfigError("analysis: Welch overlap must be in [0, 1)");
  if (welch.nfft < 0) throw ConfigError("analysis: Welch nfft must be >= 0");
}

RunAnalysis analyze_runs(VoxelTimeSeries const &ccw, VoxelTimeSeries const &cw, AnalysisConfig const &cfg)
{
  cfg.validate();
  if (ccw.values.rows() != cw.values.rows() || ccw.values.cols() != cw.values.cols()) {
    throw ShapeError("analyze_runs: runs differ in shape");
  }
  Index const T = ccw.num_frames();
  if (double(T) * cfg.tr < 2.0 * cfg.task_period) throw ConfigError("analyze_runs: fewer than 2 task cycles");

  ScaledSeries const a = scale_to_mean100(ccw), b = scale_to_mean100(cw);
  NuisanceFit const fa = project_out_nuisance(a.series.values, cfg.poly_order);
  NuisanceFit const fb = project_out_nuisance(b.series.values, cfg.poly_order);
  RunAnalysis out;
  out.num_regressors = fa.num_regressors;
  out.excluded = a.excluded || b.excluded;
  out.tsnr = 0.5 * (tsnr(a.series.values, fa.residual, fa.num_regressors) +
                    tsnr(b.series.values, fb.residual, fb.num_regressors));

  VoxelTimeSeries const aligned = align_runs(VoxelTimeSeries{fb.residual, cfg.tr, Run::kClockwise}, cfg.hemodynamic_shift);
  Eigen::MatrixXd const mean = 0.5 * (fa.residual + aligned.values);
  PhaseAmplitude const pa = task_phase_amplitude(mean, cfg.tr, cfg.task_period);
  out.amplitude = pa.amplitude;
  out.phase = pa.phase;
  out.coherence = coherence_between_runs(fa.residual, aligned.values, cfg.tr, cfg.task_frequency(), cfg.welch);
  for (Index v = 0; v < out.excluded.size(); ++v) {
    if (!out.excluded(v)) continue;
    out.tsnr(v) = kNaN;
    out.coherence(v) = 0;
  }
  out.map = threshold_phase_map(out.phase, out.coherence, cfg.coherence_threshold);
  return out;
}

} // namespace smsrecon
