#include "smsrecon/baseline/split_slice_grappa.hpp"

#include "smsrecon/core/fft.hpp"

#include <Eigen/Dense>

namespace smsrecon {

namespace {

using Offsets = std::vector<std::pair<Index, Index>>; // (readout, phase-encode)

Offsets sg_offsets(SgOptions const &o, int R)
{
  Offsets off;
  for (Index a = 0; a < o.sg_kx; ++a)
    for (Index b = 0; b < o.sg_ky; ++b) off.emplace_back(a - o.sg_kx / 2, (b - o.sg_ky / 2) * R);
  return off;
}

Offsets grappa_offsets(SgOptions const &o, int R, Index t)
{
  Offsets off;
  for (Index a = 0; a < o.grappa_kx; ++a)
    for (Index b = 0; b < o.grappa_ky; ++b) off.emplace_back(a - o.grappa_kx / 2, -t + R * (b - (o.grappa_ky / 2 - 1)));
  return off;
}

struct Region {
  Index first_line, num_lines;
};

// Source rows and center targets of every position whose footprint lies in
// the calibration region.
void fit_rows(KSpaceVolume const &cal, Region reg, Offsets const &off, Eigen::MatrixXcd &A, Eigen::MatrixXcd &B)
{
  Index const M = cal.grid().readout, C = cal.num_coils(), P = C * Index(off.size());
  Index dm_lo = 0, dm_hi = 0, dn_lo = 0, dn_hi = 0;
  for (auto [dm, dn] : off) {
    dm_lo = std::min(dm_lo, dm);
    dm_hi = std::max(dm_hi, dm);
    dn_lo = std::min(dn_lo, dn);
    dn_hi = std::max(dn_hi, dn);
  }
  Index const m0 = -dm_lo, m1 = M - dm_hi;
  Index const n0 = reg.first_line - dn_lo, n1 = reg.first_line + reg.num_lines - dn_hi;
  Index const rows = std::max<Index>(0, m1 - m0) * std::max<Index>(0, n1 - n0);
  if (rows < P) throw ConfigError("split slice-GRAPPA: calibration region smaller than the kernel footprint");
  A.resize(rows, P);
  B.resize(rows, C);
  Index row = 0;
  for (Index m = m0; m < m1; ++m) {
    for (Index n = n0; n < n1; ++n, ++row) {
      for (Index c = 0; c < C; ++c) {
        auto const &k = cal.coils[size_t(c)];
        for (size_t o = 0; o < off.size(); ++o) A(row, c * Index(off.size()) + Index(o)) = k(m + off[o].first, n + off[o].second);
        B(row, c) = k(m, n);
      }
    }
  }
}

double largest_eigenvalue(Eigen::MatrixXcd const &G)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Eigen::MatrixXcd regularized_solve(Eigen::MatrixXcd G, Eigen::MatrixXcd const &rhs, double lambda)
{
  if (lambda > 0) {
    G.diagonal().array() += lambda;
    return G.ldlt().solve(rhs);
  }
  return G.completeOrthogonalDecomposition().solve(rhs);
}

// Source matrix for every target position in `targets` of k.
Eigen::MatrixXcd gather_sources(KSpaceVolume const &k, Offsets const &off, std::vector<std::pair<Index, Index>> const &targets)
{
  Grid const g = k.grid();
  Index const C = k.num_coils(), O = Index(off.size());
  Eigen::MatrixXcd src(Index(targets.size()), C * O);
  for (size_t r = 0; r < targets.size(); ++r) {
    auto [m, n] = targets[r];
    for (Index c = 0; c < C; ++c) {
      auto const &kc = k.coils[size_t(c)];
      for (Index o = 0; o < O; ++o) {
        Index const mm = m + off[size_t(o)].first, nn = n + off[size_t(o)].second;
        bool const in = mm >= 0 && mm < g.readout && nn >= 0 && nn < g.phase;
        src(Index(r), c * O + o) = in ? kc(mm, nn) : Complex(0);
      }
    }
  }
  return src;
}

Index line_offset(Index n, Index N, int R) { return (((n - N / 2) % R) + R) % R; }

void check_calibration(std::vector<KSpaceVolume> const &cal)
{
  if (cal.empty()) throw ShapeError("split slice-GRAPPA: no calibration data");
  for (auto const &k : cal) {
    if (k.grid() != cal.front().grid() || k.num_coils() != cal.front().num_coils()) {
      throw ShapeError("split slice-GRAPPA: calibration shapes differ across slices");
    }
  }
}

} // namespace

SgCalibrationSystem split_sg_system(std::vector<KSpaceVolume> const &cal, Index first_line, Index num_lines,
                                    int acceleration, SgOptions const &opts)
{
  check_calibration(cal);
  Offsets const off = sg_offsets(opts, acceleration);
  SgCalibrationSystem sys;
  for (auto const &k : cal) {
    Eigen::MatrixXcd A, B;
    fit_rows(k, {first_line, num_lines}, off, A, B);
    sys.sources.push_back(std::move(A));
    sys.targets.push_back(std::move(B));
  }
  return sys;
}

SgKernelSet calibrate_split_sg(std::vector<KSpaceVolume> const &cal, Index first_line, Index num_lines,
                               int acceleration, SgOptions const &opts)
{
  if (acceleration < 1) throw ConfigError("split slice-GRAPPA: acceleration must be >= 1");
  if (opts.tikhonov < 0) throw ConfigError("split slice-GRAPPA: tikhonov must be >= 0");
  if (opts.sg_kx < 1 || opts.sg_ky < 1 || opts.grappa_kx < 1 || opts.grappa_ky < 2) {
    throw ConfigError("split slice-GRAPPA: invalid kernel size");
  }
  Index const M = cal.empty() ? 0 : cal.front().grid().readout;
  Index const N = cal.empty() ? 0 : cal.front().grid().phase;
  if (first_line < 0 || num_lines < 1 || first_line + num_lines > N || M < 1) {
    throw ConfigError("split slice-GRAPPA: calibration region outside the grid");
  }
  SgCalibrationSystem const sys = split_sg_system(cal, first_line, num_lines, acceleration, opts);

  SgKernelSet set;
  set.num_slices = Index(cal.size());
  set.num_coils = cal.front().num_coils();
  set.acceleration = acceleration;
  set.options = opts;

  Index const P = sys.sources.front().cols();
  Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(P, P);
  for (auto const &A : sys.sources) G.noalias() += A.adjoint() * A;
  set.slice_lambda = opts.tikhonov * largest_eigenvalue(G);
  Eigen::MatrixXcd rhs(P, set.num_coils * set.num_slices);
  for (Index i = 0; i < set.num_slices; ++i) {
    rhs.middleCols(i * set.num_coils, set.num_coils) = sys.sources[size_t(i)].adjoint() * sys.targets[size_t(i)];
  }
  Eigen::MatrixXcd const W = regularized_solve(G, rhs, set.slice_lambda);
  for (Index i = 0; i < set.num_slices; ++i) set.slice_kernels.push_back(W.middleCols(i * set.num_coils, set.num_coils));

  set.inplane_kernels.resize(size_t(set.num_slices));
  for (Index t = 1; t < acceleration; ++t) {
    Offsets const off = grappa_offsets(opts, acceleration, t);
    for (Index i = 0; i < set.num_slices; ++i) {
      Eigen::MatrixXcd A, B;
      fit_rows(cal[size_t(i)], {first_line, num_lines}, off, A, B);
      Eigen::MatrixXcd const Gi = A.adjoint() * A;
      double const lam = opts.tikhonov * largest_eigenvalue(Gi);
      set.inplane_lambda.push_back(lam);
      set.inplane_kernels[size_t(i)].push_back(regularized_solve(Gi, A.adjoint() * B, lam));
    }
  }
  return set;
}

SgKernelSet calibrate_split_sg(CalibrationData const &cal, int acceleration, SgOptions const &opts)
{
  return calibrate_split_sg(cal.single_slice, cal.first_line, cal.num_lines, acceleration, opts);
}

std::vector<KSpaceVolume> separate_slices(KSpaceVolume const &y, SgKernelSet const &kernels, SamplingMask const &mask)
{
  Grid const g = y.grid();
  if (y.num_coils() != kernels.num_coils) throw ShapeError("separate_slices: coil count mismatch");
  if (mask.grid() != g) throw ShapeError("separate_slices: mask grid mismatch");
  Index const C = y.num_coils(), S = kernels.num_slices;
  std::vector<KSpaceVolume> out(size_t(S), KSpaceVolume(C, g));
  if (S == 1) {
    for (Index c = 0; c < C; ++c) out[0].coils[size_t(c)] = mask.kept.select(y.coils[size_t(c)], Complex(0));
    return out;
  }
  std::vector<std::pair<Index, Index>> targets;
  for (Index n = 0; n < g.phase; ++n) {
    if (!on_acceleration_grid(n, g.phase, kernels.acceleration) || !mask.kept(0, n)) continue;
    for (Index m = 0; m < g.readout; ++m) targets.emplace_back(m, n);
  }
  KSpaceVolume const masked = [&] {
    KSpaceVolume k = y;
    for (auto &c : k.coils) c = mask.kept.select(c, Complex(0));
    return k;
  }();
  Eigen::MatrixXcd const src = gather_sources(masked, sg_offsets(kernels.options, kernels.acceleration), targets);
  for (Index i = 0; i < S; ++i) {
    Eigen::MatrixXcd const est = src * kernels.slice_kernels[size_t(i)];
    for (size_t r = 0; r < targets.size(); ++r) {
      for (Index c = 0; c < C; ++c) out[size_t(i)].coils[size_t(c)](targets[r].first, targets[r].second) = est(Index(r), c);
    }
  }
  return out;
}

void grappa_fill(KSpaceVolume &k, std::vector<Eigen::MatrixXcd> const &kernels, int acceleration, SgOptions const &opts,
                 BoolGrid const &present)
{
  Grid const g = k.grid();
  Index const C = k.num_coils();
  for (Index t = 1; t < acceleration; ++t) {
    std::vector<std::pair<Index, Index>> targets;
    for (Index n = 0; n < g.phase; ++n) {
      if (present(0, n) || line_offset(n, g.phase, acceleration) != t) continue;
      for (Index m = 0; m < g.readout; ++m) targets.emplace_back(m, n);
    }
    if (targets.empty()) continue;
    Eigen::MatrixXcd const est =
      gather_sources(k, grappa_offsets(opts, acceleration, t), targets) * kernels[size_t(t - 1)];
    for (size_t r = 0; r < targets.size(); ++r) {
      for (Index c = 0; c < C; ++c) k.coils[size_t(c)](targets[r].first, targets[r].second) = est(Index(r), c);
    }
  }
}

SliceStackImage apply_split_sg(KSpaceVolume const &y, SgKernelSet const &kernels, SmsEncoding const &E)
{
  if (kernels.num_slices != E.num_slices() || kernels.num_coils != E.num_coils()) {
    throw ShapeError("apply_split_sg: kernel set does not match the encoding");
  }
  Grid const g = E.grid();
  auto separated = separate_slices(y, kernels, E.mask());
  BoolGrid present = BoolGrid::Constant(g.readout, g.phase, false);
  for (Index n = 0; n < g.phase; ++n) {
    bool const has = kernels.num_slices == 1 ? E.mask().kept(0, n)
                                             : (E.mask().kept(0, n) && on_acceleration_grid(n, g.phase, kernels.acceleration));
    if (has) present.col(n).setConstant(true);
  }
  auto const &fft = fft_for(g.readout, g.phase);
  SliceStackImage x(E.num_slices(), g);
  for (Index i = 0; i < E.num_slices(); ++i) {
    auto &k = separated[size_t(i)];
    if (kernels.acceleration > 1) grappa_fill(k, kernels.inplane_kernels[size_t(i)], kernels.acceleration, kernels.options, present);
    auto const unshift = fov_shift_ramp(g.phase, E.fov_shifts()[size_t(i)]).conjugate().eval();
    for (Index c = 0; c < E.num_coils(); ++c) {
      CxImage img = k.coils[size_t(c)];
      img.rowwise() *= unshift;
      fft.inverse(img);
      x.slice(i) += E.sensitivities().maps[size_t(i)][size_t(c)].conjugate() * img;
    }
  }
  return x;
}

double slice_leakage(std::vector<KSpaceVolume> const &separated, Index present_slice)
{
  double const own = separated.at(size_t(present_slice)).squared_norm();
  if (own == 0) throw NumericalError("slice_leakage: present slice has no energy");
  double worst = 0;
  for (size_t j = 0; j < separated.size(); ++j) {
    if (Index(j) != present_slice) worst = std::max(worst, separated[j].squared_norm() / own);
  }
  return worst;
}

} // namespace smsrecon
