// Acceptance run: criteria 1-10, one PASS/FAIL line each on stdout, progress
// on stderr. Usage: acceptance [work_dir]

#include "../unit/oracles.hpp"

#include "smsrecon/core/encoding.hpp"
#include "smsrecon/fmri/analysis.hpp"
#include "smsrecon/pipeline/commands.hpp"
#include "smsrecon/train/train.hpp"
#include "smsrecon/unrolled/unrolled.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace smsrecon;
using namespace smsrecon::pipeline;
using namespace smsrecon::testing;

namespace {

// pinned tolerances
constexpr double kAdjointTol = 1e-10;
constexpr int kAdjointTrials = 100;
constexpr double kDenseTol = 1e-12;
constexpr Index kDenseMaxUnknowns = 512;
constexpr double kDcDenseTol = 1e-6;
constexpr double kGradTol = 1e-5;
constexpr int kPartitionSeeds = 1000;
constexpr Index kPartitionK = 6;
constexpr double kPartitionRho = 0.4;
constexpr double kSupervisedRatio = 1.2;
constexpr double kPhaseTol = 0.05;
constexpr double kAlignCorrelation = 0.99;
constexpr double kCoherenceThreshold = 0.55;
constexpr double kFalsePositiveRate = 0.01;
constexpr Index kNoiseVoxels = 20000;
constexpr double kPhaseDiffTol = 0.1;

// Criteria that cannot hold as stated; see the decisions notes. Any other
// failure, or one of these passing, makes the run exit non-zero.
std::set<int> const kKnownFailures{8};

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<double> numbers; // compared bitwise on re-execution
};

auto const t_start = std::chrono::steady_clock::now();

void progress(std::string const &msg)
{
  double const s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::cerr << "[" << std::fixed << std::setprecision(0) << s << " s] " << msg << std::endl;
  std::cerr.unsetf(std::ios::floatfield);
}

std::string fmt(double v)
{
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

bool same_bits(std::vector<double> const &a, std::vector<double> const &b)
{
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Complex dot(CxImage const &a, CxImage const &b) { return (a.conjugate() * b).sum(); }

Complex dot(KSpaceVolume const &a, KSpaceVolume const &b)
{
  Complex s = 0;
  for (Index c = 0; c < a.num_coils(); ++c) s += dot(a.coils[size_t(c)], b.coils[size_t(c)]);
  return s;
}

double rel(Complex a, Complex b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// ---------------------------------------------------------------------------

Outcome operators()
{
  struct Case {
    Index S, C;
    int R;
    Index acs;
    Grid g;
    bool caipi;
  };
  std::vector<Case> const cases{{1, 1, 1, 0, {8, 8}, false}, {2, 3, 2, 2, {8, 8}, true},  {3, 4, 2, 0, {8, 8}, true},
                                {5, 2, 2, 2, {8, 8}, true},  {2, 4, 3, 4, {16, 16}, true}, {3, 8, 2, 24, {64, 64}, true}};
  std::mt19937_64 rng(101);
  double worst_adj = 0, worst_dense = 0;
  Index dense_cases = 0;
  for (auto const &c : cases) {
    auto sens = random_sensitivities(c.S, c.C, c.g, rng);
    auto const mask = make_uniform_mask(c.g, c.R, c.acs);
    auto const shifts = c.caipi ? caipi_shifts(c.S) : std::vector<double>(size_t(c.S), 0.0);
    SmsEncoding const E(sens, mask, shifts);
    for (int t = 0; t < kAdjointTrials; ++t) {
      auto x = random_stack(c.S, c.g, rng);
      auto y = E.apply_mask(random_kspace(c.C, c.g, rng));
      worst_adj = std::max(worst_adj, rel(dot(E.forward(x), y), dot(x.data, E.adjoint(y).data)));
      // the FOV shift and its inverse are adjoint to each other
      CxImage a = x.slice(0), b = random_image(c.g.readout, c.g.phase, rng);
      double const f = shifts.back();
      worst_adj = std::max(worst_adj, rel(dot(apply_fov_shift(a, f), b), dot(a, apply_fov_shift(b, f, true))));
    }
    if (c.S * c.g.size() > kDenseMaxUnknowns) continue;
    ++dense_cases;
    CxMatrix const D = dense_sms_matrix(sens, mask.kept, shifts);
    for (int t = 0; t < 5; ++t) {
      auto x = random_stack(c.S, c.g, rng);
      auto y = E.apply_mask(random_kspace(c.C, c.g, rng));
      worst_dense = std::max(worst_dense, (vec(E.forward(x)) - D * vec(x.data)).cwiseAbs().maxCoeff());
      worst_dense = std::max(worst_dense, (vec(E.adjoint(y).data) - D.adjoint() * vec(y)).cwiseAbs().maxCoeff());
      worst_dense = std::max(worst_dense, (vec(E.normal(x).data) - D.adjoint() * (D * vec(x.data))).cwiseAbs().maxCoeff());
    }
  }
  Outcome o;
  o.pass = worst_adj < kAdjointTol && worst_dense < kDenseTol;
  o.detail = "adjoint rel err " + fmt(worst_adj) + " over " + std::to_string(cases.size()) + " configs x " +
             std::to_string(kAdjointTrials) + " trials; dense max abs diff " + fmt(worst_dense) + " on " +
             std::to_string(dense_cases) + " configs";
  o.numbers = {worst_adj, worst_dense};
  return o;
}

Outcome dc_unit()
{
  std::mt19937_64 rng(202);
  Grid const g{4, 4};
  SmsEncoding const E(random_sensitivities(2, 2, g, rng), make_uniform_mask(g, 2, 0));
  auto y = random_kspace(2, g, rng);
  auto z = random_stack(2, g, rng);
  double const mu = 0.05;
  CxMatrix const D = dense_sms_matrix(E.sensitivities(), E.mask().kept, E.fov_shifts());
  CxMatrix const A = D.adjoint() * D + mu * CxMatrix::Identity(32, 32);
  CxVector const ref = A.ldlt().solve(D.adjoint() * vec(E.apply_mask(y)) + mu * vec(z.data));
  std::vector<double> res;
  auto const x = dc_solve(y, E, z, mu, 32, nullptr, &res);
  double const err = (vec(x.data) - ref).cwiseAbs().maxCoeff();

  Index bumps = 0;
  auto count_bumps = [&](std::vector<double> const &r) {
    double const floor = 1e-12 * r[0];
    for (size_t k = 1; k < r.size() && r[k - 1] > floor; ++k) bumps += r[k] > r[k - 1];
  };
  count_bumps(res);
  // desk-scale DC units at the trained-model settings
  AcquisitionSpec const acq;
  for (std::uint64_t seed : {3001, 3002}) {
    auto const s = simulate_subject(acq, seed);
    auto const Ed = s.encoding();
    auto const yd = acquire_frame(s, s.truth, Run::kCounterClockwise, 0);
    SliceStackImage zd = Ed.adjoint(yd);
    std::vector<double> r;
    dc_solve(yd, Ed, zd, 0.05, 10, nullptr, &r);
    count_bumps(r);
  }
  Outcome o;
  o.pass = err < kDcDenseTol && bumps == 0;
  o.detail = "dense max abs diff " + fmt(err) + ", residual increases " + std::to_string(bumps);
  o.numbers = {err, double(bumps)};
  return o;
}

Outcome gradients()
{
  std::mt19937_64 rng(303);
  Grid const g{8, 8};
  SmsEncoding const E(random_sensitivities(2, 3, g, rng), make_uniform_mask(g, 2, 2));
  auto const y = E.apply_mask(random_kspace(3, g, rng));
  UnrolledConfig cfg;
  cfg.num_unrolls = 2;
  cfg.cg_iters = 3;
  cfg.regularizer.blocks = 1;
  cfg.regularizer.channels = 4;
  UnrolledNetwork const net(cfg);
  UnrolledModelParams params = net.init(1, 0.3);
  std::normal_distribution<double> n(0.0, 0.3);
  for (Index i = 0; i < params.theta.size(); ++i) params.theta(i) = n(rng);

  auto check = [&](std::function<double(ParamVector const &, ParamVector *)> const &loss) {
    ParamVector const v = params.flatten();
    ParamVector g_an;
    loss(v, &g_an);
    ParamVector fd(v.size());
    double const h = 1e-6;
    for (Index i = 0; i < v.size(); ++i) {
      ParamVector vp = v, vm = v;
      vp(i) += h;
      vm(i) -= h;
      fd(i) = (loss(vp, nullptr) - loss(vm, nullptr)) / (2 * h);
    }
    return (g_an - fd).norm() / fd.norm();
  };

  CxImage const target = random_image(16, 8, rng);
  double const e_l2 = check([&](ParamVector const &v, ParamVector *grad) {
    auto const p = UnrolledModelParams::unflatten(v);
    UnrollTape tape;
    auto const out = net.forward(y, E, p, grad ? &tape : nullptr);
    if (grad) *grad = net.backward(E, p, tape, 2.0 * (out.data - target));
    return (out.data - target).abs2().sum();
  });

  TrainingSlab slab{y, E, "tiny", std::nullopt, std::nullopt};
  auto const part = partition_mask(E.mask(), 2, kPartitionRho, 5);
  double const e_ssdu = check([&](ParamVector const &v, ParamVector *grad) {
    return ssdu_slab_loss(net, UnrolledModelParams::unflatten(v), slab, part, grad);
  });

  Outcome o;
  o.pass = e_l2 < kGradTol && e_ssdu < kGradTol;
  o.detail = "relative error " + fmt(e_l2) + " (squared image loss), " + fmt(e_ssdu) + " (k-space l1-l2 loss), " +
             std::to_string(params.flatten().size()) + " parameters";
  o.numbers = {e_l2, e_ssdu};
  return o;
}

Outcome partitions()
{
  AcquisitionSpec const acq;
  SamplingMask const omega = make_uniform_mask(acq.grid, acq.inplane_acceleration, acq.acs_lines);
  Index const cand = (omega.kept && !omega.acs).count();
  double const se = std::sqrt(kPartitionRho * (1 - kPartitionRho) / double(cand));
  Index violations = 0;
  double worst_dev = 0;
  for (int seed = 0; seed < kPartitionSeeds; ++seed) {
    auto const part = partition_mask(omega, kPartitionK, kPartitionRho, std::uint64_t(seed));
    if (part.size() != kPartitionK) ++violations;
    for (Index k = 0; k < part.size(); ++k) {
      auto const &th = part.theta[size_t(k)].kept;
      auto const &la = part.lambda[size_t(k)].kept;
      violations += !((th || la) == omega.kept).all();
      violations += (th && la).any();
      violations += !(!omega.acs || th).all();
      worst_dev = std::max(worst_dev, std::abs(double(la.count()) / double(cand) - kPartitionRho));
    }
  }
  Outcome o;
  o.pass = violations == 0 && worst_dev < 3 * se;
  o.detail = std::to_string(kPartitionSeeds) + " seeds x K=" + std::to_string(kPartitionK) + ": " +
             std::to_string(violations) + " set violations; worst |Lambda fraction - rho| " + fmt(worst_dev) +
             " (3 SE = " + fmt(3 * se) + ")";
  o.numbers = {double(violations), worst_dev};
  return o;
}

Outcome analysis_chain()
{
  AcquisitionSpec const acq;
  auto const spec = random_phantom_spec(acq.grid, acq.num_slices, acq.num_coils, 4001);
  auto const base = make_phantom(spec);
  auto const act = make_wedge_activation(spec);
  auto const ts = simulate_timeseries(base, act);
  AnalysisConfig cfg;
  cfg.coherence_threshold = kCoherenceThreshold;
  auto const ccw = magnitude_series(ts.ccw, act.active, act.repetition_time, Run::kCounterClockwise);
  auto const cw = magnitude_series(ts.cw, act.active, act.repetition_time, Run::kClockwise);
  Index const V = ccw.num_voxels();

  std::vector<double> truth;
  for (Index p = 0; p < act.active.size(); ++p)
    if (act.active.data()[p]) truth.push_back(act.phase_offset.data()[p]);

  auto const res = analyze_runs(ccw, cw, cfg);
  double phase_err = 0;
  for (Index v = 0; v < V; ++v) phase_err = std::max(phase_err, std::abs(wrap_phase(res.phase(v) - truth[size_t(v)])));

  auto const aligned = align_runs(cw, cfg.hemodynamic_shift);
  double worst_corr = 1;
  for (Index v = 0; v < V; ++v) {
    Eigen::RowVectorXd a = ccw.values.row(v).array() - ccw.values.row(v).mean();
    Eigen::RowVectorXd b = aligned.values.row(v).array() - aligned.values.row(v).mean();
    worst_corr = std::min(worst_corr, a.dot(b) / (a.norm() * b.norm()));
  }

  auto const processed = project_out_nuisance(scale_to_mean100(ccw).series.values, cfg.poly_order).residual;
  auto const self = coherence_between_runs(processed, processed, cfg.tr, cfg.task_frequency(), cfg.welch);
  Index not_one = (self.array() != 1.0).count();

  std::mt19937_64 rng(4002);
  std::normal_distribution<double> n(0.0, 5.0);
  Index const T = ccw.num_frames();
  VoxelTimeSeries a{Eigen::MatrixXd(kNoiseVoxels, T), cfg.tr, Run::kCounterClockwise};
  VoxelTimeSeries b{Eigen::MatrixXd(kNoiseVoxels, T), cfg.tr, Run::kClockwise};
  for (Index i = 0; i < a.values.size(); ++i) a.values.data()[i] = 100 + n(rng);
  for (Index i = 0; i < b.values.size(); ++i) b.values.data()[i] = 100 + n(rng);
  auto const noise = analyze_runs(a, b, cfg);
  double const fp = double(noise.map.surviving) / double(kNoiseVoxels);

  bool const ok_phase = phase_err < kPhaseTol;
  bool const ok_align = worst_corr > kAlignCorrelation;
  bool const ok_self = not_one == 0;
  bool const ok_keep = res.map.surviving == V;
  bool const ok_fp = fp < kFalsePositiveRate;
  Outcome o;
  o.pass = ok_phase && ok_align && ok_self && ok_keep && ok_fp;
  auto mark = [](bool ok) { return ok ? "" : " [not met]"; };
  o.detail = std::to_string(T) + " frames, " + std::to_string(V) + " active voxels: max phase error " + fmt(phase_err) +
             " rad" + mark(ok_phase) + "; min CW/CCW correlation " + fmt(worst_corr) + mark(ok_align) +
             "; self-coherence != 1 at " + std::to_string(not_one) + " voxels" + mark(ok_self) + "; retained " +
             std::to_string(res.map.surviving) + "/" + std::to_string(V) + mark(ok_keep) + "; noise false positives " +
             fmt(100 * fp) + "%" + mark(ok_fp);
  o.numbers = {phase_err, worst_corr, double(not_one), double(res.map.surviving), fp};
  return o;
}

// ---------------------------------------------------------------------------

ExperimentConfig acceptance_config()
{
  ExperimentConfig c; // 64x64, S=3, R=2, 8 coils, SNR 20, 128 frames, 8 train / 4 test phantoms
  c.model.regularizer.blocks = 2;
  c.model.regularizer.channels = 16;
  c.train.epochs = 20;
  c.train.learning_rate = 1e-3;
  c.train.seed = 3;
  return c;
}

std::string const kTimeSeriesSubjects = "test-2000,test-2001";

// Stage name -> output directory, in execution order.
std::vector<std::string> const kStages{"data",   "train_ssdu", "train_supervised", "frame0_cg_sense", "frame0_split_sg",
                                       "frame0_dl", "frame0_dl_supervised", "series_split_sg", "series_dl", "analysis"};

void run_stages(fs::path const &work, ExperimentConfig const &cfg)
{
  auto const data = work / "data";
  progress("simulate");
  cmd_simulate(cfg, data, &std::cerr);
  auto ssdu = cfg, sup = cfg;
  ssdu.train.mode = TrainMode::kSelfSupervised;
  sup.train.mode = TrainMode::kSupervised;
  progress("train self-supervised");
  cmd_train(data, ssdu, work / "train_ssdu", &std::cerr);
  progress("train supervised");
  cmd_train(data, sup, work / "train_supervised", &std::cerr);
  progress("reconstruct");
  cmd_reconstruct(data, cfg, {Method::kCgSense, std::nullopt, "test", 1}, work / "frame0_cg_sense");
  cmd_reconstruct(data, cfg, {Method::kSplitSg, std::nullopt, "test", 1}, work / "frame0_split_sg");
  cmd_reconstruct(data, cfg, {Method::kDl, work / "train_ssdu", "test", 1}, work / "frame0_dl");
  cmd_reconstruct(data, cfg, {Method::kDl, work / "train_supervised", "test", 1}, work / "frame0_dl_supervised");
  cmd_reconstruct(data, cfg, {Method::kSplitSg, std::nullopt, kTimeSeriesSubjects, 0}, work / "series_split_sg");
  progress("reconstruct dl time series");
  cmd_reconstruct(data, cfg, {Method::kDl, work / "train_ssdu", kTimeSeriesSubjects, 0}, work / "series_dl", &std::cerr);
  progress("analyze");
  cmd_analyze({work / "series_split_sg", work / "series_dl"}, work / "analysis");
}

// Re-executes one output directory from its config.cfg and command.cfg.
void rerun(fs::path const &dir, fs::path const &out)
{
  auto const cfg = load_config(dir / "config.cfg");
  auto const cmd = KeyValue::load(dir / "command.cfg");
  auto const what = cmd.get_string("command", "");
  if (what == "simulate") {
    cmd_simulate(cfg, out);
  } else if (what == "train") {
    cmd_train(cmd.get_string("data", ""), cfg, out);
  } else if (what == "reconstruct") {
    ReconOptions opts;
    opts.method = method_from_string(cmd.get_string("method", ""));
    auto const ck = cmd.get_string("checkpoint", "");
    if (!ck.empty()) opts.checkpoint = ck;
    opts.subjects = cmd.get_string("subjects", "test");
    opts.max_frames = cmd.get_int("frames", 0);
    cmd_reconstruct(cmd.get_string("data", ""), cfg, opts, out);
  } else if (what == "analyze") {
    std::vector<fs::path> inputs;
    for (int i = 0; cmd.has("input." + std::to_string(i)); ++i) inputs.emplace_back(cmd.get_string("input." + std::to_string(i), ""));
    cmd_analyze(inputs, out);
  } else {
    throw ConfigError(dir.string() + ": unknown command '" + what + "'");
  }
}

// Relative paths of files that differ, are missing or are extra.
std::vector<std::string> tree_diff(fs::path const &a, fs::path const &b)
{
  std::map<std::string, fs::path> fa, fb;
  for (auto const &e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa[fs::relative(e.path(), a).string()] = e.path();
  for (auto const &e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb[fs::relative(e.path(), b).string()] = e.path();
  std::vector<std::string> out;
  for (auto const &[k, p] : fa) {
    auto it = fb.find(k);
    if (it == fb.end() || fs::file_size(p) != fs::file_size(it->second)) {
      out.push_back(k);
      continue;
    }
    std::ifstream x(p, std::ios::binary), y(it->second, std::ios::binary);
    std::vector<char> bx(1 << 20), by(1 << 20);
    while (x && y) {
      x.read(bx.data(), std::streamsize(bx.size()));
      y.read(by.data(), std::streamsize(by.size()));
      if (x.gcount() != y.gcount() || std::memcmp(bx.data(), by.data(), std::size_t(x.gcount())) != 0) {
        out.push_back(k);
        break;
      }
    }
  }
  for (auto const &[k, p] : fb)
    if (!fa.count(k)) out.push_back(k);
  return out;
}

double mean_nmse(fs::path const &dir)
{
  auto const t = read_csv(dir / "nmse.csv");
  auto const col = std::size_t(t.column("nmse"));
  double s = 0;
  for (auto const &r : t.rows) s += std::stod(r[col]);
  return s / double(t.rows.size());
}

Outcome quality(fs::path const &work)
{
  double const dl = mean_nmse(work / "frame0_dl"), cg = mean_nmse(work / "frame0_cg_sense"),
               sg = mean_nmse(work / "frame0_split_sg");
  std::set<std::string> phantoms;
  for (auto const &r : read_csv(work / "frame0_dl" / "nmse.csv").rows) phantoms.insert(r[0]);
  Outcome o;
  o.pass = dl < cg && dl < sg;
  o.detail = "mean NMSE over " + std::to_string(phantoms.size()) + " held-out phantoms (frame 0, both runs): DL " +
             fmt(dl) + ", CG-SENSE " + fmt(cg) +
             ", split slice-GRAPPA " + fmt(sg);
  o.numbers = {dl, cg, sg};
  return o;
}

Outcome self_vs_supervised(fs::path const &work)
{
  double const ssdu = mean_nmse(work / "frame0_dl"), sup = mean_nmse(work / "frame0_dl_supervised");
  double const ratio = ssdu / sup;
  Outcome o;
  o.pass = ratio <= kSupervisedRatio;
  o.detail = "self-supervised " + fmt(ssdu) + " / supervised " + fmt(sup) + " = " + fmt(ratio) + " (limit " +
             fmt(kSupervisedRatio) + ")";
  o.numbers = {ssdu, sup, ratio};
  return o;
}

struct ComparisonRow {
  std::string subject;
  double tsnr_ref, tsnr_dl, change, phase_diff;
  Index surviving_ref, surviving_dl, common;
};

std::vector<ComparisonRow> comparison(fs::path const &work)
{
  auto const t = read_csv(work / "analysis" / "comparison.csv");
  auto col = [&](char const *name) { return std::size_t(t.column(name)); };
  std::vector<ComparisonRow> out;
  for (auto const &r : t.rows) {
    out.push_back({r[col("subject")], std::stod(r[col("mean_tsnr_reference")]), std::stod(r[col("mean_tsnr_method")]),
                   std::stod(r[col("tsnr_percent_change")]), std::stod(r[col("median_abs_phase_diff")]),
                   std::stoll(r[col("surviving_reference")]), std::stoll(r[col("surviving_method")]),
                   std::stoll(r[col("common_surviving")])});
  }
  return out;
}

Outcome tsnr_direction(fs::path const &work)
{
  auto const rows = comparison(work);
  double ref = 0, dl = 0;
  for (auto const &r : rows) {
    ref += r.tsnr_ref / double(rows.size());
    dl += r.tsnr_dl / double(rows.size());
  }
  Outcome o;
  o.pass = !rows.empty() && dl > ref;
  o.detail = "mean support tSNR DL " + fmt(dl) + " vs split slice-GRAPPA " + fmt(ref) + " (" +
             fmt(100 * (dl - ref) / ref) + "%) over " + std::to_string(rows.size()) + " subjects; map: " +
             (work / "analysis" / "change_dl_vs_split-sg").string();
  o.numbers = {dl, ref};
  for (auto const &r : rows) o.numbers.push_back(r.change);
  return o;
}

Outcome phase_consistency(fs::path const &work)
{
  auto const rows = comparison(work);
  double worst = 0;
  Index ref = 0, dl = 0;
  for (auto const &r : rows) {
    worst = std::max(worst, std::isnan(r.phase_diff) ? INFINITY : r.phase_diff);
    ref += r.surviving_ref;
    dl += r.surviving_dl;
  }
  Outcome o;
  o.pass = !rows.empty() && worst < kPhaseDiffTol && dl >= ref;
  o.detail = "largest per-subject median |phase diff| " + fmt(worst) + " rad; surviving voxels DL " +
             std::to_string(dl) + " vs split slice-GRAPPA " + std::to_string(ref);
  o.numbers = {worst, double(dl), double(ref)};
  return o;
}

} // namespace

int main(int argc, char **argv)
{
  fs::path const work = fs::absolute(argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work"));
  fs::remove_all(work);
  fs::create_directories(work);

  std::vector<std::function<Outcome()>> const in_process{operators, dc_unit, gradients, partitions};
  std::map<int, Outcome> results;
  try {
    for (std::size_t i = 0; i < in_process.size(); ++i) {
      progress("criterion " + std::to_string(i + 1));
      results[int(i) + 1] = in_process[i]();
    }
    progress("criterion 8");
    results[8] = analysis_chain();

    auto const cfg = acceptance_config();
    run_stages(work, cfg);
    results[5] = quality(work);
    results[6] = self_vs_supervised(work);
    results[7] = tsnr_direction(work);
    results[9] = phase_consistency(work);
    cmd_report({work / "frame0_dl", work / "frame0_dl_supervised", work / "frame0_cg_sense", work / "frame0_split_sg",
                work / "train_ssdu", work / "train_supervised", work / "analysis"},
               work / "report");

    // re-execute everything from the recorded configs
    std::vector<std::string> mismatched;
    for (std::size_t i = 0; i < in_process.size(); ++i) {
      progress("re-run criterion " + std::to_string(i + 1));
      if (!same_bits(in_process[i]().numbers, results[int(i) + 1].numbers)) mismatched.push_back(std::to_string(i + 1));
    }
    if (!same_bits(analysis_chain().numbers, results[8].numbers)) mismatched.push_back("8");
    auto const again = work / "rerun";
    for (auto const &stage : kStages) {
      progress("re-run " + stage);
      rerun(work / stage, again / stage);
      for (auto const &f : tree_diff(work / stage, again / stage)) mismatched.push_back(stage + "/" + f);
    }
    if (!same_bits(quality(again).numbers, results[5].numbers)) mismatched.push_back("5");
    if (!same_bits(self_vs_supervised(again).numbers, results[6].numbers)) mismatched.push_back("6");
    if (!same_bits(tsnr_direction(again).numbers, results[7].numbers)) mismatched.push_back("7");
    if (!same_bits(phase_consistency(again).numbers, results[9].numbers)) mismatched.push_back("9");
    Outcome o;
    o.pass = mismatched.empty();
    o.detail = "in-process criteria re-run and " + std::to_string(kStages.size()) +
               " pipeline outputs re-executed from config.cfg/command.cfg; ";
    if (mismatched.empty()) {
      o.detail += "all bit-identical";
    } else {
      o.detail += std::to_string(mismatched.size()) + " differ, first: " + mismatched.front();
    }
    results[10] = o;
  } catch (std::exception const &e) {
    std::cerr << "acceptance aborted: " << e.what() << '\n';
  }

  bool ok = true;
  for (int c = 1; c <= 10; ++c) {
    auto it = results.find(c);
    bool const pass = it != results.end() && it->second.pass;
    std::string const detail = it == results.end() ? "not run" : it->second.detail;
    bool const known = kKnownFailures.count(c) > 0;
    std::cout << "criterion " << c << ": " << (pass ? "PASS" : "FAIL") << "  " << detail;
    if (known && !pass) std::cout << "  (known failure)";
    if (known && pass) std::cout << "  (expected to fail; update the known-failure list)";
    std::cout << '\n';
    ok = ok && pass != known;
  }
  std::cout << std::flush;
  return ok ? 0 : 1;
}
