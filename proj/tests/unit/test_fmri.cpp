#include "smsrecon/fmri/analysis.hpp"
#include "smsrecon/phantom/phantom.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace smsrecon;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd sinusoid(Index T, double bin, double phi, double amp = 1.0, double offset = 0.0)
{
  Eigen::MatrixXd m(1, T);
  for (Index t = 0; t < T; ++t) m(0, t) = offset + amp * std::cos(2 * kPi * bin * double(t) / double(T) - phi);
  return m;
}

Eigen::MatrixXd white(Index V, Index T, std::mt19937_64 &rng, double sd = 1.0)
{
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(V, T);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

} // namespace

TEST_CASE("scale_to_mean100")
{
  VoxelTimeSeries s;
  s.values.resize(3, 8);
  s.values.row(0).setConstant(3.7);
  s.values.row(1) << 1, 2, 3, 4, 5, 6, 7, 9;
  s.values.row(2).setZero();
  auto out = scale_to_mean100(s);
  CHECK((out.series.values.row(0).array() - 100.0).abs().maxCoeff() < 1e-12);
  CHECK(std::abs(out.series.values.row(1).mean() - 100.0) < 1e-10);
  CHECK_FALSE(out.excluded(0));
  CHECK(out.excluded(2));
  CHECK(out.series.values.row(2).isZero());
}

TEST_CASE("project_out_nuisance")
{
  Index const T = 128;
  Eigen::MatrixXd cubic(1, T);
  for (Index t = 0; t < T; ++t) {
    double const x = double(t) / 10.0;
    cubic(0, t) = 3.0 - 2.0 * x + 0.5 * x * x - 0.01 * x * x * x;
  }
  auto fit = project_out_nuisance(cubic);
  CHECK(fit.num_regressors == 4);
  CHECK(fit.residual.cwiseAbs().maxCoeff() < 1e-8);

  SUBCASE("task cosine survives with < 1% amplitude loss")
  {
    auto s = sinusoid(T, 4, 0.0);
    auto r = project_out_nuisance(s).residual;
    double const before = task_phase_amplitude(s, 1.0, 32.0).amplitude(0);
    double const after = task_phase_amplitude(r, 1.0, 32.0).amplitude(0);
    MESSAGE("amplitude loss " << 1 - after / before);
    CHECK(std::abs(1 - after / before) < 0.01);
  }

  SUBCASE("matches a dense monomial least-squares projection")
  {
    Eigen::MatrixXd X(T, 4);
    for (Index t = 0; t < T; ++t)
      for (Index k = 0; k < 4; ++k) X(t, k) = std::pow((double(t) - 63.5) / 64.0, double(k));
    for (double phi : {0.0, 0.7, kPi / 2}) {
      Eigen::VectorXd s = sinusoid(T, 4, phi).row(0).transpose();
      Eigen::VectorXd ref = s - X * (X.transpose() * X).ldlt().solve(X.transpose() * s);
      auto r = project_out_nuisance(sinusoid(T, 4, phi)).residual;
      CHECK((r.row(0).transpose() - ref).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  SUBCASE("idempotent and blind to nuisance-span additions")
  {
    std::mt19937_64 rng(2);
    Eigen::MatrixXd x = white(5, T, rng);
    auto r1 = project_out_nuisance(x).residual;
    CHECK((project_out_nuisance(r1).residual - r1).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd y = x + Eigen::MatrixXd::Random(5, 4) * legendre_regressors(T, 3).transpose();
    auto r2 = project_out_nuisance(y).residual;
    CHECK((r2 - r1).cwiseAbs().maxCoeff() < 1e-10);
    auto pa1 = task_phase_amplitude(r1, 1.0, 32.0), pa2 = task_phase_amplitude(r2, 1.0, 32.0);
    CHECK((pa1.amplitude - pa2.amplitude).cwiseAbs().maxCoeff() < 1e-10);
    auto c1 = coherence_between_runs(r1, r1.reverse(), 1.0, 1.0 / 32);
    auto c2 = coherence_between_runs(r2, r2.reverse(), 1.0, 1.0 / 32);
    CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("extra regressors")
  {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd motion = white(6, T, rng).transpose();
    auto f = project_out_nuisance(white(2, T, rng), 3, motion);
    CHECK(f.num_regressors == 10);
    CHECK((f.residual * motion).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS_AS(project_out_nuisance(white(1, 4, rng), 3), ConfigError);
  }
}

TEST_CASE("align_runs")
{
  std::mt19937_64 rng(5);
  VoxelTimeSeries s{white(3, 16, rng), 1.0, Run::kClockwise};
  auto twice = align_runs(align_runs(s, 0), 0);
  CHECK(twice.values == s.values);
  auto shifted = align_runs(s, 3);
  for (Index t = 0; t < 16; ++t) CHECK(shifted.values.col(t) == s.values.col(15 - ((t - 3 + 16) % 16)));
}

TEST_CASE("task_phase_amplitude")
{
  Index const T = 128;
  auto pa = task_phase_amplitude(sinusoid(T, 4, 0.0), 1.0, 32.0);
  CHECK(std::abs(pa.amplitude(0) - 1.0) < 1e-12);
  CHECK(std::abs(pa.phase(0)) < 1e-12);
  for (double phi : {-3.0, -1.2, 0.4, 2.0, 3.1, kPi}) {
    CAPTURE(phi);
    auto p = task_phase_amplitude(sinusoid(T, 4, phi), 1.0, 32.0);
    CHECK(std::abs(wrap_phase(p.phase(0) - phi)) < 1e-12);
    CHECK(p.phase(0) > -kPi);
    CHECK(p.phase(0) <= kPi);
  }
  CHECK_THROWS_AS(task_phase_amplitude(sinusoid(T, 4, 0), 1.0, 30.0), ConfigError);
  CHECK_THROWS_AS(task_phase_amplitude(sinusoid(T, 4, 0), 1.0, 2.0), ConfigError);

  SUBCASE("5% activation at SNR 20 over 128 frames, Monte Carlo over noise seeds")
  {
    std::mt19937_64 rng(11);
    Index const trials = 4000;
    Eigen::MatrixXd x = white(trials, T, rng, 100.0 / 20.0);
    x.rowwise() += sinusoid(T, 4, 0.7, 5.0, 100.0).row(0);
    auto sc = scale_to_mean100(VoxelTimeSeries{x}).series.values;
    double const mean_amp = task_phase_amplitude(sc, 1.0, 32.0).amplitude.mean();
    MESSAGE("mean recovered amplitude " << mean_amp);
    CHECK(std::abs(mean_amp / 5.0 - 1.0) < 0.02);
  }
}

TEST_CASE("coherence_between_runs")
{
  Index const T = 128;
  std::mt19937_64 rng(13);

  SUBCASE("identical runs give exactly 1")
  {
    Eigen::MatrixXd x = white(50, T, rng);
    x.row(0) = sinusoid(T, 4, 0.3).row(0);
    auto c = coherence_between_runs(x, x, 1.0, 1.0 / 32);
    CHECK((c.array() == 1.0).all());
  }

  SUBCASE("scaling either run leaves coherence unchanged and it stays in [0, 1]")
  {
    Eigen::MatrixXd a = white(40, T, rng), b = white(40, T, rng) + 0.5 * a;
    auto c = coherence_between_runs(a, b, 1.0, 1.0 / 32);
    CHECK((coherence_between_runs(3.5 * a, b, 1.0, 1.0 / 32) - c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((coherence_between_runs(a, 0.01 * b, 1.0, 1.0 / 32) - c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(c.minCoeff() >= 0.0);
    CHECK(c.maxCoeff() <= 1.0);
  }

  SUBCASE("independent white noise sits at the 1/n small-sample floor")
  {
    // non-overlapping segments are independent: MSC ~ Beta(1, n - 1), mean 1/n
    WelchOptions w{32, 0.0, 32};
    Index const n = welch_segment_count(T, w);
    REQUIRE(n == 4);
    Index const V = 20000;
    auto c = coherence_between_runs(white(V, T, rng), white(V, T, rng), 1.0, 1.0 / 32, w);
    double const mean = c.mean();
    double const se = std::sqrt((c.array() - mean).square().sum() / double(V - 1) / double(V));
    MESSAGE("mean " << mean << " expected " << 1.0 / double(n) << " se " << se);
    CHECK(std::abs(mean - 1.0 / double(n)) < 3 * se);
  }

  SUBCASE("direct evaluation equals the zero-padded DFT bin")
  {
    Eigen::MatrixXd a = white(30, T, rng), b = white(30, T, rng) + a;
    auto direct = coherence_between_runs(a, b, 1.0, 1.0 / 32);
    auto padded = coherence_between_runs(a, b, 1.0, 1.0 / 32, WelchOptions{16, 0.5, 64});
    CHECK((direct - padded).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("bad frequencies and segment settings are rejected")
  {
    Eigen::MatrixXd a = white(2, T, rng);
    CHECK_THROWS_AS(coherence_between_runs(a, a, 1.0, 1.0 / 30, WelchOptions{16, 0.5, 32}), ConfigError);
    CHECK_THROWS_AS(coherence_between_runs(a, a, 1.0, 0.6), ConfigError);
    CHECK_THROWS_AS(coherence_between_runs(a, a, 1.0, 1.0 / 32, WelchOptions{256, 0.5}), ConfigError);
    CHECK_THROWS_AS(coherence_between_runs(a, a, 1.0, 1.0 / 32, WelchOptions{16, 0.5, 8}), ConfigError);
  }
}

TEST_CASE("tsnr and percent change")
{
  Index const T = 128;
  std::mt19937_64 rng(17);
  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(2, T, 100.0);
  auto t0 = tsnr(flat, Eigen::MatrixXd::Zero(2, T), 4);
  CHECK(std::isinf(t0(0)));
  Eigen::VectorXd mixed(3);
  mixed << 10.0, std::numeric_limits<double>::infinity(), 20.0;
  CHECK(finite_mean(mixed) == 15.0);

  SUBCASE("doubling the noise halves tSNR")
  {
    Index const V = 2000;
    auto run = [&](double sd) {
      Eigen::MatrixXd x = white(V, T, rng, sd).array() + 100.0;
      auto sc = scale_to_mean100(VoxelTimeSeries{x}).series.values;
      auto fit = project_out_nuisance(sc);
      return finite_mean(tsnr(sc, fit.residual, fit.num_regressors));
    };
    double const ratio = run(2.0) / run(1.0);
    MESSAGE("ratio " << ratio);
    CHECK(std::abs(ratio - 0.5) < 0.01);
  }

  Eigen::VectorXd a(3), b(3);
  a << 150, 100, 1;
  b << 100, 100, 0;
  auto pc = percent_change(a, b);
  CHECK(pc(0) == 50.0);
  CHECK(pc(1) == 0.0);
  CHECK(std::isnan(pc(2)));
}

TEST_CASE("threshold_phase_map")
{
  Eigen::VectorXd phase(4), coh(4);
  phase << 0.1, -0.2, 3.0, 1.0;
  coh << 0.0, 0.3, 0.55, 1.0;
  auto all = threshold_phase_map(phase, coh, 0.0);
  CHECK(all.surviving == 4);
  auto none = threshold_phase_map(phase, coh, 1.0 + 1e-12);
  CHECK(none.surviving == 0);
  auto m = threshold_phase_map(phase, coh);
  CHECK(m.surviving == 2);
  CHECK(std::isnan(m.phase(1)));
  CHECK(m.phase(2) == 3.0);
}

TEST_CASE("analysis chain on a noiseless simulated wedge")
{
  auto spec = random_phantom_spec({32, 32}, 2, 4, 21);
  auto base = make_phantom(spec);
  auto act = make_wedge_activation(spec);
  auto ts = simulate_timeseries(base, act);
  AnalysisConfig cfg;
  auto ccw = magnitude_series(ts.ccw, act.active, 1.0, Run::kCounterClockwise);
  auto cw = magnitude_series(ts.cw, act.active, 1.0, Run::kClockwise);
  REQUIRE(ccw.num_voxels() > 20);

  Eigen::VectorXd truth(ccw.num_voxels());
  Index v = 0;
  for (Index p = 0; p < act.active.size(); ++p)
    if (act.active.data()[p]) truth(v++) = act.phase_offset.data()[p];

  SUBCASE("clockwise run aligns with the counter-clockwise run")
  {
    auto aligned = align_runs(cw, 0);
    double worst = 1;
    for (Index i = 0; i < ccw.num_voxels(); ++i) {
      Eigen::RowVectorXd a = ccw.values.row(i).array() - ccw.values.row(i).mean();
      Eigen::RowVectorXd b = aligned.values.row(i).array() - aligned.values.row(i).mean();
      worst = std::min(worst, a.dot(b) / (a.norm() * b.norm()));
    }
    MESSAGE("worst correlation " << worst);
    CHECK(worst > 0.99);
  }

  SUBCASE("phase and amplitude match the projected-cosine oracle; all voxels retained")
  {
    auto res = analyze_runs(ccw, cw, cfg);
    Index const T = ccw.num_frames();
    Eigen::MatrixXd X(T, 4);
    for (Index t = 0; t < T; ++t)
      for (Index k = 0; k < 4; ++k) X(t, k) = std::pow(2.0 * double(t) / double(T - 1) - 1.0, double(k));
    Eigen::MatrixXd const P = Eigen::MatrixXd::Identity(T, T) - X * (X.transpose() * X).ldlt().solve(X.transpose());
    double worst_oracle = 0, worst_amp = 0;
    for (Index i = 0; i < truth.size(); ++i) {
      Eigen::VectorXd s(T);
      for (Index t = 0; t < T; ++t) s(t) = 5.0 * std::cos(2 * kPi * double(t) / 32.0 - truth(i));
      Eigen::VectorXd const r = P * s;
      std::complex<double> c = 0;
      for (Index t = 0; t < T; ++t) c += r(t) * std::polar(1.0, 2 * kPi * double(t) / 32.0);
      worst_oracle = std::max(worst_oracle, std::abs(wrap_phase(res.phase(i) - std::arg(c))));
      worst_amp = std::max(worst_amp, std::abs(res.amplitude(i) - 2 * std::abs(c) / double(T)));
    }
    CHECK(worst_oracle < 1e-8);
    CHECK(worst_amp < 1e-8);
    auto ccw_only = task_phase_amplitude(project_out_nuisance(scale_to_mean100(ccw).series.values).residual, 1.0, 32.0);
    double worst = 0, worst_ccw = 0;
    for (Index i = 0; i < truth.size(); ++i) {
      worst = std::max(worst, std::abs(wrap_phase(res.phase(i) - truth(i))));
      worst_ccw = std::max(worst_ccw, std::abs(wrap_phase(res.phase(i) - ccw_only.phase(i))));
    }
    MESSAGE("worst phase error " << worst << ", vs CCW only " << worst_ccw);
    CHECK(worst < 0.0571); // cubic projection bias at 4 cycles peaks at 0.05705 rad
    CHECK(worst_ccw < 1e-10);
    CHECK(res.map.surviving == truth.size());
    CHECK(res.num_regressors == 4);
  }
}

TEST_CASE("pure-noise voxels rarely pass the default threshold")
{
  std::mt19937_64 rng(23);
  Index const V = 20000, T = 128;
  VoxelTimeSeries ccw{white(V, T, rng, 5.0).array() + 100.0, 1.0, Run::kCounterClockwise};
  VoxelTimeSeries cw{white(V, T, rng, 5.0).array() + 100.0, 1.0, Run::kClockwise};
  auto res = analyze_runs(ccw, cw, AnalysisConfig{});
  double const rate = double(res.map.surviving) / double(V);
  MESSAGE("false-positive rate " << rate);
  CHECK(rate < 0.01);
}
