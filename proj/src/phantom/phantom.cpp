#include "smsrecon/phantom/phantom.hpp"

#include "smsrecon/core/fft.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace smsrecon {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_phase(double p)
{
  p = std::remainder(p, 2.0 * kPi);
  return p <= -kPi ? p + 2.0 * kPi : p;
}

bool inside(Ellipse const &e, double r, double c)
{
  double const dr = r - e.center_row, dc = c - e.center_col;
  double const u = dr * std::cos(e.angle) + dc * std::sin(e.angle);
  double const v = -dr * std::sin(e.angle) + dc * std::cos(e.angle);
  return (u * u) / (e.semi_row * e.semi_row) + (v * v) / (e.semi_col * e.semi_col) <= 1.0;
}

// Fraction of the 4x4 subsamples of pixel (m, n) inside the ellipse.
double coverage(Ellipse const &e, Index m, Index n)
{
  constexpr int kSub = 4;
  int hits = 0;
  for (int a = 0; a < kSub; ++a) {
    for (int b = 0; b < kSub; ++b) {
      double const r = double(m) + (a + 0.5) / kSub - 0.5;
      double const c = double(n) + (b + 0.5) / kSub - 0.5;
      hits += inside(e, r, c) ? 1 : 0;
    }
  }
  return double(hits) / (kSub * kSub);
}

ReImage render_magnitude(std::vector<Ellipse> const &ellipses, Grid g)
{
  ReImage mag = ReImage::Zero(g.readout, g.phase);
  for (auto const &e : ellipses) {
    // Bounding box keeps rendering linear in the ellipse area.
    double const ext = std::max(e.semi_row, e.semi_col) + 1.0;
    Index const m0 = std::max<Index>(0, Index(std::floor(e.center_row - ext)));
    Index const m1 = std::min<Index>(g.readout - 1, Index(std::ceil(e.center_row + ext)));
    Index const n0 = std::max<Index>(0, Index(std::floor(e.center_col - ext)));
    Index const n1 = std::min<Index>(g.phase - 1, Index(std::ceil(e.center_col + ext)));
    for (Index m = m0; m <= m1; ++m) {
      for (Index n = n0; n <= n1; ++n) {
        double const f = coverage(e, m, n);
        if (f > 0) mag(m, n) = mag(m, n) * (1.0 - f) + e.intensity * f;
      }
    }
  }
  return mag;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
{
  return std::mt19937_64(derive_seed(seed, ids));
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
{
  std::vector<std::uint32_t> words{std::uint32_t(seed), std::uint32_t(seed >> 32)};
  for (auto id : ids) {
    words.push_back(std::uint32_t(id));
    words.push_back(std::uint32_t(id >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t(out[0]) << 32) | out[1];
}

void validate(PhantomSpec const &spec)
{
  if (spec.grid.readout < 1 || spec.grid.phase < 1) throw ConfigError("phantom: empty grid");
  if (spec.num_slices < 1 || spec.num_coils < 1) throw ConfigError("phantom: need at least one slice and coil");
  if (static_cast<Index>(spec.ellipses.size()) != spec.num_slices) {
    throw ConfigError("phantom: one ellipse list per slice required");
  }
  for (auto const &per_slice : spec.ellipses) {
    for (auto const &e : per_slice) {
      if (!(e.intensity >= 0.0 && e.intensity <= 1.0)) throw ConfigError("phantom: intensity outside [0, 1]");
      if (!(e.semi_row > 0 && e.semi_col > 0)) throw ConfigError("phantom: ellipse axes must be positive");
      if (!(e.center_row >= 0 && e.center_row <= double(spec.grid.readout - 1) && e.center_col >= 0 &&
            e.center_col <= double(spec.grid.phase - 1))) {
        throw ConfigError("phantom: ellipse center outside the grid");
      }
    }
  }
}

PhantomSpec random_phantom_spec(Grid grid, Index num_slices, Index num_coils, std::uint64_t seed)
{
  PhantomSpec spec;
  spec.grid = grid;
  spec.num_slices = num_slices;
  spec.num_coils = num_coils;
  spec.seed = seed;
  double const M = double(grid.readout), N = double(grid.phase);
  for (Index i = 0; i < num_slices; ++i) {
    auto rng = stream_rng(seed, {1, std::uint64_t(i)});
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
    std::vector<Ellipse> es;
    double const cr = M / 2 + uni(-1.5, 1.5), cc = N / 2 + uni(-1.5, 1.5);
    double const hr = uni(0.36, 0.42) * M, hc = uni(0.30, 0.36) * N, ang = uni(-0.15, 0.15);
    es.push_back({cr, cc, hr, hc, ang, 0.55});
    es.push_back({cr, cc, 0.78 * hr, 0.74 * hc, ang, uni(0.75, 0.85)});
    for (int b = 0; b < 3; ++b) {
      double const r = uni(0.0, 0.55), t = uni(0.0, 2.0 * kPi);
      es.push_back({cr + r * hr * std::cos(t), cc + r * hc * std::sin(t), uni(0.05, 0.12) * M, uni(0.05, 0.12) * N,
                    uni(0.0, kPi), uni(0.35, 0.95)});
    }
    double const vr = uni(0.10, 0.16) * M, vc = uni(0.03, 0.05) * N, off = uni(0.05, 0.08) * N;
    es.push_back({cr, cc - off, vr, vc, ang + 0.25, 0.15});
    es.push_back({cr, cc + off, vr, vc, ang - 0.25, 0.15});
    spec.ellipses.push_back(std::move(es));
  }
  return spec;
}

SliceStackImage make_phantom(PhantomSpec const &spec)
{
  validate(spec);
  Grid const g = spec.grid;
  SliceStackImage out(spec.num_slices, g);
  for (Index i = 0; i < spec.num_slices; ++i) {
    ReImage const mag = render_magnitude(spec.ellipses[size_t(i)], g);
    auto rng = stream_rng(spec.seed, {2, std::uint64_t(i)});
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    double const a0 = kPi * U(rng);
    std::array<double, 5> a{};
    for (auto &v : a) v = spec.phase_scale * U(rng) / 3.0;
    for (Index m = 0; m < g.readout; ++m) {
      double const u = 2.0 * double(m) / double(g.readout) - 1.0;
      for (Index n = 0; n < g.phase; ++n) {
        double const v = 2.0 * double(n) / double(g.phase) - 1.0;
        double const ph = a0 + a[0] * u + a[1] * v + a[2] * u * v + a[3] * u * u + a[4] * v * v;
        out.slice(i)(m, n) = std::polar(mag(m, n), ph);
      }
    }
  }
  return out;
}

BoolGrid phantom_support(PhantomSpec const &spec)
{
  validate(spec);
  Grid const g = spec.grid;
  constexpr Index kDilate = 2;
  BoolGrid out = BoolGrid::Constant(spec.num_slices * g.readout, g.phase, false);
  for (Index i = 0; i < spec.num_slices; ++i) {
    ReImage const mag = render_magnitude(spec.ellipses[size_t(i)], g);
    for (Index m = 0; m < g.readout; ++m) {
      for (Index n = 0; n < g.phase; ++n) {
        if (mag(m, n) <= 0) continue;
        for (Index dm = -kDilate; dm <= kDilate; ++dm) {
          for (Index dn = -kDilate; dn <= kDilate; ++dn) {
            Index const mm = m + dm, nn = n + dn;
            if (dm * dm + dn * dn > kDilate * kDilate) continue;
            if (mm < 0 || mm >= g.readout || nn < 0 || nn >= g.phase) continue;
            out(i * g.readout + mm, nn) = true;
          }
        }
      }
    }
  }
  return out;
}

CoilSensitivities make_sensitivities(PhantomSpec const &spec, CoilGeometry const &geom)
{
  BoolGrid const support = phantom_support(spec);
  Grid const g = spec.grid;
  Index const S = spec.num_slices, C = spec.num_coils;
  CoilSensitivities sens;
  sens.maps.assign(size_t(S), std::vector<CxImage>(size_t(C), CxImage::Zero(g.readout, g.phase)));
  double const kRadius = geom.radius, kRingZ = geom.ring_z, kWidth = geom.width, kPhaseSlope = geom.phase_slope;
  for (Index i = 0; i < S; ++i) {
    double const z = (double(i) - 0.5 * double(S - 1)) * geom.slice_spacing;
    for (Index c = 0; c < C; ++c) {
      double const theta = 2.0 * kPi * double(c) / double(C);
      double const cx = kRadius * std::cos(theta), cy = kRadius * std::sin(theta);
      double const cz = (C > 1) ? ((c % 2 == 0) ? kRingZ : -kRingZ) : 0.0;
      for (Index m = 0; m < g.readout; ++m) {
        double const y = (double(m) - 0.5 * double(g.readout)) / double(g.readout);
        for (Index n = 0; n < g.phase; ++n) {
          double const x = (double(n) - 0.5 * double(g.phase)) / double(g.phase);
          double const d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
          double const ph = theta + kPhaseSlope * (x * std::cos(theta) + y * std::sin(theta));
          sens.maps[size_t(i)][size_t(c)](m, n) = std::polar(std::exp(-d2 / (2 * kWidth * kWidth)), ph);
        }
      }
    }
    for (Index m = 0; m < g.readout; ++m) {
      for (Index n = 0; n < g.phase; ++n) {
        bool const on = support(i * g.readout + m, n);
        double ss = 0;
        for (Index c = 0; c < C; ++c) ss += std::norm(sens.maps[size_t(i)][size_t(c)](m, n));
        double const scale = (on && ss > 0) ? 1.0 / std::sqrt(ss) : 0.0;
        for (Index c = 0; c < C; ++c) sens.maps[size_t(i)][size_t(c)](m, n) *= scale;
      }
    }
  }
  return sens;
}

void validate(ActivationSpec const &spec)
{
  if (!(spec.task_period > 0 && spec.repetition_time > 0)) throw ConfigError("activation: period and TR must be > 0");
  if (!(spec.amplitude >= 0.0 && spec.amplitude < 0.2)) throw ConfigError("activation: amplitude must be in [0, 0.2)");
  if (double(spec.num_frames) * spec.repetition_time < 2.0 * spec.task_period) {
    throw ConfigError("activation: need at least two task cycles");
  }
  if (spec.active.rows() != spec.phase_offset.rows() || spec.active.cols() != spec.phase_offset.cols()) {
    throw ShapeError("activation: mask and phase map shapes differ");
  }
}

ActivationSpec make_wedge_activation(PhantomSpec const &spec, double task_period, double repetition_time,
                                     Index num_frames, double amplitude)
{
  ActivationSpec act;
  act.task_period = task_period;
  act.repetition_time = repetition_time;
  act.num_frames = num_frames;
  act.amplitude = amplitude;
  Grid const g = spec.grid;
  act.active = BoolGrid::Constant(spec.num_slices * g.readout, g.phase, false);
  act.phase_offset = ReImage::Zero(spec.num_slices * g.readout, g.phase);
  for (Index i = 0; i < spec.num_slices; ++i) {
    auto const &per_slice = spec.ellipses[size_t(i)];
    if (per_slice.empty()) continue;
    Ellipse const &head = per_slice.front();
    ReImage const mag = render_magnitude(per_slice, g);
    for (Index m = 0; m < g.readout; ++m) {
      for (Index n = 0; n < g.phase; ++n) {
        double const dr = double(m) - head.center_row, dc = double(n) - head.center_col;
        double const rho = std::hypot(dr / head.semi_row, dc / head.semi_col);
        if (dr <= 0 || rho < 0.45 || rho > 0.85 || mag(m, n) < 0.05) continue;
        act.active(i * g.readout + m, n) = true;
        act.phase_offset(i * g.readout + m, n) = wrap_phase(2.0 * std::atan2(dc, dr));
      }
    }
  }
  validate(act);
  return act;
}

SliceStackImage activation_frame(SliceStackImage const &baseline, ActivationSpec const &act, Run run, Index t)
{
  if (act.active.rows() != baseline.data.rows() || act.active.cols() != baseline.data.cols()) {
    throw ShapeError("activation_frame: activation grid does not match the phantom");
  }
  double const w = 2.0 * kPi / act.task_period;
  double const time = double(t) * act.repetition_time;
  double const sweep = run == Run::kCounterClockwise ? w * time : -w * (time + act.repetition_time);
  SliceStackImage out = baseline;
  for (Index r = 0; r < out.data.rows(); ++r) {
    for (Index c = 0; c < out.data.cols(); ++c) {
      if (act.active(r, c)) out.data(r, c) *= 1.0 + act.amplitude * std::cos(sweep - act.phase_offset(r, c));
    }
  }
  return out;
}

TimeSeries simulate_timeseries(SliceStackImage const &baseline, ActivationSpec const &act)
{
  validate(act);
  TimeSeries ts;
  ts.ccw.reserve(size_t(act.num_frames));
  ts.cw.reserve(size_t(act.num_frames));
  for (Index t = 0; t < act.num_frames; ++t) {
    ts.ccw.push_back(activation_frame(baseline, act, Run::kCounterClockwise, t));
    ts.cw.push_back(activation_frame(baseline, act, Run::kClockwise, t));
  }
  return ts;
}

std::vector<KSpaceVolume> full_kspace(SliceStackImage const &truth, CoilSensitivities const &sens)
{
  Grid const g = sens.grid();
  if (truth.num_slices != sens.num_slices() || truth.slice_grid() != g) throw ShapeError("full_kspace: shape mismatch");
  auto const &fft = fft_for(g.readout, g.phase);
  std::vector<KSpaceVolume> out;
  for (Index i = 0; i < truth.num_slices; ++i) {
    KSpaceVolume k(sens.num_coils(), g);
    for (Index c = 0; c < sens.num_coils(); ++c) {
      k.coils[size_t(c)] = sens.maps[size_t(i)][size_t(c)] * truth.slice(i);
      fft.forward(k.coils[size_t(c)]);
    }
    out.push_back(std::move(k));
  }
  return out;
}

namespace {

void add_noise(CxImage &img, BoolGrid const &where, double sigma, std::mt19937_64 &rng)
{
  if (sigma <= 0) return;
  std::normal_distribution<double> n(0.0, sigma / std::sqrt(2.0));
  for (Index m = 0; m < img.rows(); ++m) {
    for (Index k = 0; k < img.cols(); ++k) {
      if (!where(m, k)) continue;
      double const re = n(rng);
      double const im = n(rng);
      img(m, k) += Complex(re, im);
    }
  }
}

void check_per_slice(std::vector<KSpaceVolume> const &per_slice, SamplingMask const &mask,
                     std::vector<double> const &shifts)
{
  if (per_slice.empty()) throw ShapeError("sample_kspace: no slices");
  if (per_slice.size() != shifts.size()) throw ShapeError("sample_kspace: one FOV shift per slice required");
  for (auto const &k : per_slice) {
    if (k.grid() != mask.grid() || k.num_coils() != per_slice.front().num_coils()) {
      throw ShapeError("sample_kspace: k-space shape mismatch");
    }
  }
}

} // namespace

KSpaceVolume sample_kspace(std::vector<KSpaceVolume> const &per_slice_full, SamplingMask const &mask,
                           std::vector<double> const &fov_shifts, NoiseModel const &noise, std::uint64_t stream)
{
  check_per_slice(per_slice_full, mask, fov_shifts);
  Grid const g = mask.grid();
  Index const C = per_slice_full.front().num_coils();
  KSpaceVolume y(C, g);
  for (size_t i = 0; i < per_slice_full.size(); ++i) {
    auto const ramp = fov_shift_ramp(g.phase, fov_shifts[i]);
    for (Index c = 0; c < C; ++c) {
      CxImage shifted = per_slice_full[i].coils[size_t(c)];
      shifted.rowwise() *= ramp;
      y.coils[size_t(c)] += shifted;
    }
  }
  std::mt19937_64 rng(derive_seed(noise.seed, {stream}));
  for (auto &yc : y.coils) {
    yc = mask.kept.select(yc, Complex(0));
    add_noise(yc, mask.kept, noise.sigma, rng);
  }
  return y;
}

CalibrationData make_calibration(std::vector<KSpaceVolume> const &per_slice_full, SamplingMask const &mask,
                                 std::vector<double> const &fov_shifts, NoiseModel const &noise,
                                 std::uint64_t stream)
{
  check_per_slice(per_slice_full, mask, fov_shifts);
  if (!mask.has_acs() || mask.acs.count() == 0) throw ConfigError("calibration: mask has no ACS block");
  Grid const g = mask.grid();
  CalibrationData cal;
  cal.first_line = -1;
  for (Index n = 0; n < g.phase; ++n) {
    if (mask.acs(0, n)) {
      if (cal.first_line < 0) cal.first_line = n;
      ++cal.num_lines;
    }
  }
  std::mt19937_64 rng(derive_seed(noise.seed, {stream}));
  for (size_t i = 0; i < per_slice_full.size(); ++i) {
    auto const ramp = fov_shift_ramp(g.phase, fov_shifts[i]);
    KSpaceVolume k(per_slice_full[i].num_coils(), g);
    for (Index c = 0; c < k.num_coils(); ++c) {
      CxImage shifted = per_slice_full[i].coils[size_t(c)];
      shifted.rowwise() *= ramp;
      k.coils[size_t(c)] = mask.acs.select(shifted, Complex(0));
      add_noise(k.coils[size_t(c)], mask.acs, noise.sigma, rng);
    }
    cal.single_slice.push_back(std::move(k));
  }
  return cal;
}

double sigma_for_snr(SliceStackImage const &truth, BoolGrid const &support, double snr)
{
  if (!(snr > 0) || std::isinf(snr)) return 0.0;
  Index const n = support.count();
  if (n == 0) throw ShapeError("sigma_for_snr: empty support");
  double const mean = support.select(truth.data.abs(), 0.0).sum() / double(n);
  return mean / snr;
}

SimulatedSubject simulate_subject(AcquisitionSpec const &acq, std::uint64_t seed)
{
  SimulatedSubject s;
  s.seed = seed;
  s.phantom = random_phantom_spec(acq.grid, acq.num_slices, acq.num_coils, seed);
  s.truth = make_phantom(s.phantom);
  s.support = phantom_support(s.phantom);
  s.sens = make_sensitivities(s.phantom);
  s.mask = make_uniform_mask(acq.grid, acq.inplane_acceleration, acq.acs_lines);
  s.fov_shifts = caipi_shifts(acq.num_slices);
  s.noise_sigma = sigma_for_snr(s.truth, s.support, acq.snr);
  if (acq.acs_lines > 0) {
    s.calibration = make_calibration(full_kspace(s.truth, s.sens), s.mask, s.fov_shifts,
                                     NoiseModel{s.noise_sigma, seed}, derive_seed(seed, {7}));
  }
  return s;
}

KSpaceVolume acquire_frame(SimulatedSubject const &subject, SliceStackImage const &frame_truth, Run run, Index t)
{
  std::uint64_t const stream = derive_seed(subject.seed, {run == Run::kCounterClockwise ? 11u : 13u, std::uint64_t(t)});
  return sample_kspace(full_kspace(frame_truth, subject.sens), subject.mask, subject.fov_shifts,
                       NoiseModel{subject.noise_sigma, subject.seed}, stream);
}

} // namespace smsrecon
