#include "smsrecon/pipeline/commands.hpp"

#include "smsrecon/train/ssdu.hpp"
#include "smsrecon/util/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

namespace smsrecon::pipeline {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string subject_id(std::string const &role, std::uint64_t seed) { return role + "-" + std::to_string(seed); }

void note(std::ostream *log, std::string const &msg)
{
  if (log) *log << msg << std::endl;
}

std::vector<Complex> flatten(std::vector<KSpaceVolume> const &frames)
{
  std::vector<Complex> out;
  for (auto const &k : frames)
    for (auto const &c : k.coils) out.insert(out.end(), c.data(), c.data() + c.size());
  return out;
}

std::vector<Complex> flatten(CoilSensitivities const &s)
{
  std::vector<Complex> out;
  for (auto const &slice : s.maps)
    for (auto const &c : slice) out.insert(out.end(), c.data(), c.data() + c.size());
  return out;
}

std::vector<CxImage> images_from(std::vector<Complex> const &flat, Index count, Grid g, Index offset = 0)
{
  std::vector<CxImage> out;
  for (Index i = 0; i < count; ++i) {
    CxImage img(g.readout, g.phase);
    std::copy_n(flat.begin() + std::ptrdiff_t(offset + i * g.size()), g.size(), img.data());
    out.push_back(std::move(img));
  }
  return out;
}

ReImage reimage(std::vector<double> const &v, Index rows, Index cols)
{
  ReImage out(rows, cols);
  std::copy_n(v.begin(), rows * cols, out.data());
  return out;
}

/// Values at the `where` pixels back into a NaN-filled image.
ReImage scatter(Eigen::VectorXd const &v, BoolGrid const &where)
{
  ReImage out = ReImage::Constant(where.rows(), where.cols(), kNaN);
  Index k = 0;
  for (Index p = 0; p < where.size(); ++p)
    if (where.data()[p]) out.data()[p] = v(k++);
  return out;
}

void check_compatible(ExperimentConfig const &data, ExperimentConfig const &cfg)
{
  auto const a = to_keyvalue(data), b = to_keyvalue(cfg);
  for (auto const &key : a.keys()) {
    bool const shapes_data = key.rfind("acq.", 0) == 0 || key.rfind("activation.", 0) == 0 || key.rfind("subjects.", 0) == 0;
    if (shapes_data && a.get_string(key, "") != b.get_string(key, "")) {
      throw ConfigError("config: '" + key + "' differs from the experiment that produced the data");
    }
  }
}

void write_command(fs::path const &dir, KeyValue kv, std::string const &command)
{
  kv.set("command", command);
  kv.set("software_version", std::string(SMSRECON_VERSION));
  kv.save(dir / "command.cfg");
}

std::vector<SubjectRecord> select_subjects(Experiment const &ex, std::string const &which)
{
  if (which == "all") return ex.subjects();
  if (which == "test" || which == "train") return ex.subjects(which);
  std::vector<SubjectRecord> out;
  std::stringstream ss(which);
  std::string id;
  while (std::getline(ss, id, ',')) {
    auto it = std::find_if(ex.subjects().begin(), ex.subjects().end(), [&](auto const &r) { return r.id == id; });
    if (it == ex.subjects().end()) throw ConfigError("no subject '" + id + "' in " + ex.dir().string());
    out.push_back(*it);
  }
  if (out.empty()) throw ConfigError("no subjects selected");
  return out;
}

void write_subject(ExperimentConfig const &cfg, SubjectRecord const &rec, fs::path const &dir)
{
  auto const &acq = cfg.acq;
  auto const subj = simulate_subject(acq, rec.seed);
  auto const act = make_wedge_activation(subj.phantom, cfg.activation.task_period, cfg.activation.repetition_time,
                                         cfg.activation.num_frames, cfg.activation.amplitude);
  Index const S = acq.num_slices, C = acq.num_coils, M = acq.grid.readout, N = acq.grid.phase;

  DatasetWriter w(dir, "subject");
  w.add_c64("truth", {S * M, N}, subj.truth.data.data());
  w.add_mask("support", subj.support);
  auto const sens = flatten(subj.sens);
  w.add_c64("sensitivities", {S, C, M, N}, sens.data());
  w.add_mask("mask", subj.mask.kept);
  w.add_mask("acs", subj.mask.has_acs() ? subj.mask.acs : BoolGrid::Constant(M, N, false));
  w.add_f64("fov_shifts", {S}, subj.fov_shifts.data());
  if (!subj.calibration.single_slice.empty()) {
    auto const cal = flatten(subj.calibration.single_slice);
    w.add_c64("calibration", {S, C, M, N}, cal.data());
  }
  w.add_mask("active", act.active);
  w.add_f64("phase_offset", {S * M, N}, act.phase_offset.data());

  std::vector<Run> runs{Run::kCounterClockwise};
  if (rec.role == "test") runs.push_back(Run::kClockwise);
  json run_names = json::array();
  for (Run run : runs) {
    std::vector<KSpaceVolume> k(std::size_t(rec.frames));
    parallel_for(k.size(), [&](std::size_t t) {
      k[t] = acquire_frame(subj, activation_frame(subj.truth, act, run, Index(t)), run, Index(t));
    });
    auto const flat = flatten(k);
    w.add_c64("kspace_" + run_name(run), {rec.frames, C, M, N}, flat.data());
    run_names.push_back(run_name(run));
  }

  auto &p = w.provenance();
  p["subject"] = rec.id;
  p["seed"] = rec.seed;
  p["role"] = rec.role;
  p["frames"] = rec.frames;
  p["runs"] = run_names;
  p["noise_sigma"] = subj.noise_sigma;
  p["snr"] = acq.snr;
  p["acceleration"] = subj.mask.acceleration;
  p["calibration_first_line"] = subj.calibration.first_line;
  p["calibration_num_lines"] = subj.calibration.num_lines;
  p["task_period"] = act.task_period;
  p["repetition_time"] = act.repetition_time;
  p["activation_frames"] = act.num_frames;
  p["amplitude"] = act.amplitude;
  p["software_version"] = SMSRECON_VERSION;
  w.finish();
}

} // namespace

std::string run_name(Run r) { return r == Run::kCounterClockwise ? "ccw" : "cw"; }

std::string to_string(Method m)
{
  switch (m) {
  case Method::kSplitSg: return "split-sg";
  case Method::kCgSense: return "cg-sense";
  case Method::kDl: return "dl";
  }
  return "?";
}

Method method_from_string(std::string const &s)
{
  if (s == "split-sg") return Method::kSplitSg;
  if (s == "cg-sense") return Method::kCgSense;
  if (s == "dl") return Method::kDl;
  throw ConfigError("unknown method '" + s + "' (split-sg, cg-sense, dl)");
}

std::vector<SubjectRecord> cmd_simulate(ExperimentConfig const &cfg, fs::path const &out, std::ostream *log)
{
  cfg.validate();
  std::vector<SubjectRecord> recs;
  for (auto s : cfg.train_seeds()) recs.push_back({subject_id("train", s), s, "train", cfg.subjects.train_frames});
  for (auto s : cfg.test_seeds()) recs.push_back({subject_id("test", s), s, "test", cfg.activation.num_frames});

  fs::create_directories(out / "subjects");
  save_config(out / "config.cfg", cfg);
  write_command(out, KeyValue{}, "simulate");
  json subjects = json::array();
  for (auto const &rec : recs) {
    note(log, "simulate " + rec.id);
    write_subject(cfg, rec, out / "subjects" / rec.id);
    subjects.push_back({{"id", rec.id}, {"seed", rec.seed}, {"role", rec.role}, {"frames", rec.frames},
                        {"dir", "subjects/" + rec.id}});
  }
  DatasetWriter top(out, "experiment");
  top.provenance()["subjects"] = subjects;
  top.provenance()["config"] = "config.cfg";
  top.provenance()["software_version"] = SMSRECON_VERSION;
  top.finish();
  return recs;
}

Experiment Experiment::open(fs::path const &dir)
{
  Experiment ex;
  ex.dir_ = dir;
  auto const m = validate_dataset(dir);
  if (m.kind != "experiment") throw ConfigError(dir.string() + " is not a simulated experiment (kind " + m.kind + ")");
  ex.config_ = load_config(dir / "config.cfg");
  try {
    for (auto const &s : m.provenance.at("subjects")) {
      ex.subjects_.push_back({s.at("id").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                              s.at("role").get<std::string>(), s.at("frames").get<Index>()});
    }
  } catch (json::exception const &e) {
    throw ConfigError(dir.string() + ": bad subject list: " + e.what());
  }
  std::set<std::uint64_t> train_seeds;
  for (auto const &r : ex.subjects_) {
    if (r.role != "train" && r.role != "test") throw ConfigError(r.id + ": unknown role " + r.role);
    if (r.role == "train") train_seeds.insert(r.seed);
  }
  for (auto const &r : ex.subjects_) {
    if (r.role == "test" && train_seeds.count(r.seed)) throw ConfigError("phantom " + r.id + " is both train and test");
  }
  return ex;
}

std::vector<SubjectRecord> Experiment::subjects(std::string const &role) const
{
  std::vector<SubjectRecord> out;
  for (auto const &r : subjects_)
    if (r.role == role) out.push_back(r);
  return out;
}

SubjectData Experiment::load_subject(SubjectRecord const &rec) const
{
  auto const d = Dataset::open(dir_ / "subjects" / rec.id);
  auto const &acq = config_.acq;
  Index const S = acq.num_slices, C = acq.num_coils, M = acq.grid.readout, N = acq.grid.phase;
  SubjectData s;
  s.record = rec;
  auto truth = d.c64("truth", {S * M, N});
  s.truth = SliceStackImage(Eigen::Map<CxImage>(truth.data(), S * M, N), S);
  s.support = d.mask("support");
  auto const sens = d.c64("sensitivities", {S, C, M, N});
  for (Index i = 0; i < S; ++i) s.sens.maps.push_back(images_from(sens, C, acq.grid, i * C * M * N));
  s.mask.kept = d.mask("mask");
  s.mask.acs = d.mask("acs");
  if (!s.mask.acs.any()) s.mask.acs.resize(0, 0);
  try {
    auto const &p = d.provenance();
    s.mask.acceleration = p.at("acceleration").get<double>();
    s.noise_sigma = p.at("noise_sigma").get<double>();
    s.calibration.first_line = p.at("calibration_first_line").get<Index>();
    s.calibration.num_lines = p.at("calibration_num_lines").get<Index>();
    s.activation.task_period = p.at("task_period").get<double>();
    s.activation.repetition_time = p.at("repetition_time").get<double>();
    s.activation.num_frames = p.at("activation_frames").get<Index>();
    s.activation.amplitude = p.at("amplitude").get<double>();
  } catch (json::exception const &e) {
    throw ConfigError(rec.id + ": bad provenance: " + e.what());
  }
  s.fov_shifts = d.real("fov_shifts", {S});
  if (d.manifest().has("calibration")) {
    auto const cal = d.c64("calibration", {S, C, M, N});
    for (Index i = 0; i < S; ++i) {
      KSpaceVolume k;
      k.coils = images_from(cal, C, acq.grid, i * C * M * N);
      s.calibration.single_slice.push_back(std::move(k));
    }
  }
  s.activation.active = d.mask("active");
  s.activation.phase_offset = reimage(d.real("phase_offset", {S * M, N}), S * M, N);
  validate(s.activation);
  return s;
}

std::vector<KSpaceVolume> Experiment::load_run(SubjectRecord const &rec, Run run, Index count) const
{
  auto const d = Dataset::open(dir_ / "subjects" / rec.id);
  auto const &acq = config_.acq;
  Index const C = acq.num_coils, M = acq.grid.readout, N = acq.grid.phase;
  std::string const name = "kspace_" + run_name(run);
  if (!d.manifest().has(name)) throw ConfigError(rec.id + " has no " + run_name(run) + " run");
  auto const flat = d.c64(name, {rec.frames, C, M, N});
  if (count > rec.frames) throw ConfigError(rec.id + ": only " + std::to_string(rec.frames) + " frames stored");
  std::vector<KSpaceVolume> out;
  for (Index t = 0; t < count; ++t) {
    KSpaceVolume k;
    k.coils = images_from(flat, C, acq.grid, t * C * M * N);
    out.push_back(std::move(k));
  }
  return out;
}

TrainResult cmd_train(fs::path const &data, ExperimentConfig const &cfg, fs::path const &out, std::ostream *log)
{
  auto const ex = Experiment::open(data);
  cfg.validate();
  check_compatible(ex.config(), cfg);
  auto const train_recs = ex.subjects("train"), test_recs = ex.subjects("test");
  if (train_recs.empty()) throw ConfigError("experiment has no training subjects");
  for (auto const &a : train_recs)
    for (auto const &b : test_recs)
      if (a.seed == b.seed) throw ConfigError("train and test phantoms overlap");

  std::vector<TrainingSlab> train_set, val_set;
  json train_ids = json::array(), test_ids = json::array();
  for (auto const &rec : train_recs) {
    auto const s = ex.load_subject(rec);
    auto k = ex.load_run(rec, Run::kCounterClockwise, cfg.subjects.train_frames);
    for (Index t = 0; t < Index(k.size()); ++t) {
      auto truth = s.frame_truth(Run::kCounterClockwise, t);
      auto full = full_kspace(truth, s.sens);
      train_set.push_back(TrainingSlab{std::move(k[std::size_t(t)]), s.encoding(), rec.id + "/ccw/" + std::to_string(t),
                                       std::move(truth), std::move(full)});
    }
    train_ids.push_back(rec.id);
  }
  for (auto const &rec : test_recs) {
    auto const s = ex.load_subject(rec);
    auto k = ex.load_run(rec, Run::kCounterClockwise, 1);
    val_set.push_back(TrainingSlab{std::move(k[0]), s.encoding(), rec.id + "/ccw/0",
                                   s.frame_truth(Run::kCounterClockwise, 0), std::nullopt});
    test_ids.push_back(rec.id);
  }

  fs::create_directories(out);
  save_config(out / "config.cfg", cfg);
  KeyValue cmd;
  cmd.set("data", fs::absolute(data).string());
  write_command(out, cmd, "train");

  UnrolledNetwork const net(cfg.model);
  note(log, "train " + to_string(cfg.train.mode) + " on " + std::to_string(train_set.size()) + " slabs, " +
                std::to_string(net.num_theta() + 1) + " parameters");
  auto const result = train(net, train_set, val_set, cfg.train, [&](EpochRecord const &r) {
    note(log, "epoch " + std::to_string(r.epoch) + " loss " + format_double(r.train_loss) + " val_nmse " +
                  format_double(r.val_nmse));
  });
  write_loss_csv(out / "loss.csv", result.history);

  json info{{"mode", to_string(cfg.train.mode)},
            {"epochs_run", result.history.size()},
            {"aborted", result.aborted},
            {"diagnostics", result.diagnostics},
            {"train_subjects", train_ids},
            {"test_subjects", test_ids},
            {"final_loss", result.history.empty() ? kNaN : result.history.back().train_loss}};
  save_checkpoint(out, Checkpoint{cfg.model, result.params, cfg.train.seed, info.dump()});
  if (result.aborted) throw NumericalError("training stopped: " + result.diagnostics);
  return result;
}

void cmd_reconstruct(fs::path const &data, ExperimentConfig const &cfg, ReconOptions const &opts, fs::path const &out,
                     std::ostream *log)
{
  if (opts.method == Method::kDl && !opts.checkpoint) throw ConfigError("method dl needs a checkpoint");
  if (opts.max_frames < 0) throw ConfigError("frames must be >= 0");
  auto const ex = Experiment::open(data);
  cfg.validate();
  check_compatible(ex.config(), cfg);
  auto const recs = select_subjects(ex, opts.subjects);

  std::optional<Checkpoint> ck;
  std::optional<UnrolledNetwork> net;
  if (opts.method == Method::kDl) {
    ck = load_checkpoint(*opts.checkpoint);
    net.emplace(ck->config);
    net->check(ck->params);
  }

  fs::create_directories(out);
  save_config(out / "config.cfg", cfg);
  KeyValue cmd;
  cmd.set("data", fs::absolute(data).string());
  cmd.set("method", to_string(opts.method));
  cmd.set("checkpoint", opts.checkpoint ? fs::absolute(*opts.checkpoint).string() : std::string());
  cmd.set("subjects", opts.subjects);
  cmd.set("frames", std::int64_t(opts.max_frames));
  write_command(out, cmd, "reconstruct");

  std::ostringstream csv;
  csv << kNmseHeader << '\n';
  json subjects = json::array();
  for (auto const &rec : recs) {
    auto const s = ex.load_subject(rec);
    auto const E = s.encoding();
    BoolGrid const coil_support = s.sens.stacked_support();
    std::optional<SgKernelSet> kernels;
    if (opts.method == Method::kSplitSg) {
      if (s.calibration.single_slice.empty()) throw ConfigError(rec.id + ": split-sg needs calibration data");
      kernels = calibrate_split_sg(s.calibration, cfg.acq.inplane_acceleration, cfg.split_sg);
    }
    Index const F = opts.max_frames > 0 ? std::min(opts.max_frames, rec.frames) : rec.frames;
    std::vector<Run> runs{Run::kCounterClockwise};
    if (rec.role == "test") runs.push_back(Run::kClockwise);

    DatasetWriter w(out / rec.id, "reconstruction");
    json run_names = json::array();
    for (Run run : runs) {
      note(log, "reconstruct " + rec.id + " " + run_name(run) + " (" + std::to_string(F) + " frames, " +
                    to_string(opts.method) + ")");
      auto const k = ex.load_run(rec, run, F);
      auto x = std::vector<SliceStackImage>(std::size_t(F));
      parallel_for(x.size(), [&](std::size_t t) {
        switch (opts.method) {
        case Method::kSplitSg: x[t] = apply_split_sg(k[t], *kernels, E); break;
        case Method::kCgSense: x[t] = cg_sense(k[t], E, cfg.cg_sense).x; break;
        case Method::kDl: x[t] = net->forward(k[t], E, ck->params); break;
        }
      });
      Index const P = x.front().data.size();
      std::vector<double> mag(std::size_t(F * P)), phase(std::size_t(F * P));
      for (Index t = 0; t < F; ++t) {
        auto const &d = x[std::size_t(t)].data;
        if (!d.allFinite()) throw NumericalError(rec.id + ": non-finite reconstruction at frame " + std::to_string(t));
        for (Index p = 0; p < P; ++p) {
          mag[std::size_t(t * P + p)] = std::abs(d.data()[p]);
          phase[std::size_t(t * P + p)] = std::arg(d.data()[p]);
        }
        double const e = nmse(d, s.frame_truth(run, t).data, coil_support);
        csv << rec.id << ',' << run_name(run) << ',' << t << ',' << format_double(e) << '\n';
      }
      Index const rows = x.front().data.rows(), cols = x.front().data.cols();
      w.add_f32(run_name(run) + "_magnitude", {F, rows, cols}, mag.data());
      w.add_f32(run_name(run) + "_phase", {F, rows, cols}, phase.data());
      run_names.push_back(run_name(run));
    }
    w.add_mask("support", s.support);
    w.add_mask("coil_support", coil_support);
    w.add_mask("active", s.activation.active);
    w.add_f64("phase_offset", {s.activation.phase_offset.rows(), s.activation.phase_offset.cols()},
              s.activation.phase_offset.data());
    auto &p = w.provenance();
    p["subject"] = rec.id;
    p["seed"] = rec.seed;
    p["role"] = rec.role;
    p["method"] = to_string(opts.method);
    p["frames"] = F;
    p["runs"] = run_names;
    p["num_slices"] = cfg.acq.num_slices;
    p["repetition_time"] = cfg.activation.repetition_time;
    w.finish();
    subjects.push_back({{"id", rec.id}, {"dir", rec.id}, {"frames", F}, {"runs", run_names}});
  }
  std::ofstream(out / "nmse.csv") << csv.str();
  DatasetWriter top(out, "reconstruction-set");
  top.provenance()["method"] = to_string(opts.method);
  top.provenance()["subjects"] = subjects;
  top.provenance()["software_version"] = SMSRECON_VERSION;
  top.finish();
}

namespace {

struct AnalyzedSubject {
  BoolGrid support;
  BoolGrid active;
  Index num_slices = 1;
  RunAnalysis result;
};

VoxelTimeSeries load_series(Dataset const &d, std::string const &run, BoolGrid const &where, double tr)
{
  auto const &a = d.manifest().find(run + "_magnitude");
  if (a.shape.size() != 3 || a.shape[1] != where.rows() || a.shape[2] != where.cols()) {
    throw ConfigError(d.dir().string() + ": " + run + " magnitude does not match the support");
  }
  auto const mag = d.real(run + "_magnitude");
  Index const T = a.shape[0], P = where.size();
  VoxelTimeSeries s;
  s.tr = tr;
  s.run = run == "ccw" ? Run::kCounterClockwise : Run::kClockwise;
  s.values.resize(where.count(), T);
  for (Index t = 0; t < T; ++t) {
    Index v = 0;
    for (Index p = 0; p < P; ++p)
      if (where.data()[p]) s.values(v++, t) = mag[std::size_t(t * P + p)];
  }
  return s;
}

AnalyzedSubject analyze_subject(fs::path const &dir, AnalysisConfig const &cfg)
{
  auto const d = Dataset::open(dir);
  AnalyzedSubject a;
  a.support = d.mask("support");
  a.active = d.mask("active");
  a.num_slices = d.provenance().value("num_slices", Index(1));
  if (!d.manifest().has("ccw_magnitude") || !d.manifest().has("cw_magnitude")) {
    throw ConfigError(dir.string() + ": the analysis needs both runs");
  }
  a.result = analyze_runs(load_series(d, "ccw", a.support, cfg.tr), load_series(d, "cw", a.support, cfg.tr), cfg);
  return a;
}

double median(std::vector<double> v)
{
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  std::size_t const n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double finite_max(ReImage const &v)
{
  double m = 0;
  for (Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v.data()[i])) m = std::max(m, v.data()[i]);
  return m;
}

void write_maps(fs::path const &dir, AnalyzedSubject const &a, std::string const &label)
{
  auto const &r = a.result;
  Eigen::VectorXd thresholded = r.map.phase;
  DatasetWriter w(dir, "analysis");
  Index const rows = a.support.rows(), cols = a.support.cols();
  auto add = [&](std::string const &name, Eigen::VectorXd const &v) {
    ReImage img = scatter(v, a.support);
    w.add_f64(name, {rows, cols}, img.data());
    return img;
  };
  auto const tsnr = add("tsnr", r.tsnr);
  add("amplitude", r.amplitude);
  auto const phase = add("phase", r.phase);
  auto const coh = add("coherence", r.coherence);
  auto const thr = add("thresholded_phase", thresholded);
  w.add_mask("support", a.support);
  w.provenance()["label"] = label;
  w.provenance()["surviving"] = r.map.surviving;
  w.provenance()["threshold"] = r.map.threshold;
  w.provenance()["regressors"] = r.num_regressors;
  w.finish();
  write_pgm(dir / "tsnr.pgm", tsnr, 0, finite_max(tsnr));
  write_pgm(dir / "coherence.pgm", coh, 0, 1);
  write_phase_ppm(dir / "phase.ppm", phase);
  write_phase_ppm(dir / "thresholded_phase.ppm", thr);
}

std::string regressor_list(Index poly_order) { return "legendre_0.." + std::to_string(poly_order); }

} // namespace

void cmd_analyze(std::vector<fs::path> const &recons, fs::path const &out, std::ostream *log)
{
  if (recons.empty()) throw ConfigError("analyze needs at least one reconstruction");
  std::vector<std::string> labels;
  std::vector<Dataset> sets;
  std::optional<ExperimentConfig> cfg;
  for (auto const &dir : recons) {
    auto d = Dataset::open(dir);
    if (d.manifest().kind != "reconstruction-set") throw ConfigError(dir.string() + " is not a reconstruction output");
    auto const c = load_config(dir / "config.cfg");
    if (!cfg) cfg = c;
    auto const a = to_keyvalue(*cfg), b = to_keyvalue(c);
    for (auto const &key : a.keys()) {
      bool const relevant = key.rfind("analysis.", 0) == 0 || key.rfind("activation.", 0) == 0 || key.rfind("acq.", 0) == 0;
      if (relevant && a.get_string(key, "") != b.get_string(key, "")) {
        throw ConfigError("reconstructions disagree on '" + key + "'");
      }
    }
    std::string label = d.provenance().value("method", std::string("recon"));
    std::string unique = label;
    for (int n = 2; std::find(labels.begin(), labels.end(), unique) != labels.end(); ++n) unique = label + "-" + std::to_string(n);
    labels.push_back(unique);
    sets.push_back(std::move(d));
  }

  std::vector<std::string> subjects;
  for (auto const &s : sets.front().provenance().at("subjects")) {
    auto const id = s.at("id").get<std::string>();
    bool everywhere = true;
    for (auto const &d : sets) everywhere &= fs::exists(d.dir() / id / "manifest.json");
    if (everywhere) subjects.push_back(id);
  }
  if (subjects.empty()) throw ConfigError("no subject is present in every reconstruction");

  fs::create_directories(out);
  save_config(out / "config.cfg", *cfg);
  KeyValue cmd;
  for (std::size_t i = 0; i < recons.size(); ++i) cmd.set("input." + std::to_string(i), fs::absolute(recons[i]).string());
  write_command(out, cmd, "analyze");

  std::ostringstream metrics, comparison;
  metrics << kMetricsHeader << '\n';
  comparison << kComparisonHeader << '\n';
  for (auto const &id : subjects) {
    std::vector<AnalyzedSubject> res;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      note(log, "analyze " + labels[i] + " " + id);
      res.push_back(analyze_subject(sets[i].dir() / id, cfg->analysis));
      if ((res.back().support != res.front().support).any()) throw ConfigError(id + ": supports differ between inputs");
      write_maps(out / labels[i] / id, res.back(), labels[i]);
    }
    auto const &sup = res.front().support;
    Index const rows = sup.rows(), S = std::max<Index>(res.front().num_slices, 1);
    // region masks over the analyzed voxels
    std::vector<std::pair<std::string, std::vector<bool>>> regions;
    std::vector<bool> all, active;
    auto slices = std::vector<std::vector<bool>>(std::size_t(S));
    for (Index p = 0; p < sup.size(); ++p) {
      if (!sup.data()[p]) continue;
      all.push_back(true);
      active.push_back(res.front().active.data()[p]);
      Index const slice = (p / sup.cols()) / std::max<Index>(rows / S, 1);
      for (Index i = 0; i < S; ++i) slices[std::size_t(i)].push_back(i == slice);
    }
    regions.emplace_back("support", all);
    regions.emplace_back("active", active);
    for (Index i = 0; i < S; ++i) regions.emplace_back("slice" + std::to_string(i), slices[std::size_t(i)]);

    for (std::size_t i = 0; i < res.size(); ++i) {
      auto const &r = res[i].result;
      for (auto const &[name, in] : regions) {
        std::vector<double> vals;
        Index surviving = 0;
        for (std::size_t v = 0; v < in.size(); ++v) {
          if (!in[v]) continue;
          vals.push_back(r.tsnr(Index(v)));
          surviving += r.map.retained(Index(v)) ? 1 : 0;
        }
        double const mean = finite_mean(Eigen::Map<Eigen::VectorXd>(vals.data(), Index(vals.size())));
        metrics << labels[i] << ',' << id << ',' << name << ',' << vals.size() << ',' << format_double(mean) << ','
                << surviving << ',' << format_double(r.map.threshold) << ',' << regressor_list(cfg->analysis.poly_order)
                << '\n';
      }
    }
    auto const &ref = res.front().result;
    for (std::size_t i = 1; i < res.size(); ++i) {
      auto const &r = res[i].result;
      Eigen::VectorXd const change = percent_change(r.tsnr, ref.tsnr);
      std::vector<double> dphi;
      Index common = 0;
      for (Index v = 0; v < r.phase.size(); ++v) {
        if (r.map.retained(v) && ref.map.retained(v)) {
          ++common;
          dphi.push_back(std::abs(wrap_phase(r.phase(v) - ref.phase(v))));
        }
      }
      double const mr = finite_mean(ref.tsnr), mm = finite_mean(r.tsnr);
      comparison << id << ',' << labels.front() << ',' << labels[i] << ',' << format_double(mr) << ','
                 << format_double(mm) << ',' << format_double(100.0 * (mm - mr) / mr) << ','
                 << format_double(median(std::vector<double>(change.data(), change.data() + change.size()))) << ','
                 << ref.map.surviving << ',' << r.map.surviving << ',' << common << ',' << format_double(median(dphi))
                 << '\n';
      fs::path const dir = out / ("change_" + labels[i] + "_vs_" + labels.front()) / id;
      DatasetWriter w(dir, "tsnr-change");
      ReImage const img = scatter(change, sup);
      w.add_f64("tsnr_percent_change", {img.rows(), img.cols()}, img.data());
      w.provenance()["reference"] = labels.front();
      w.provenance()["method"] = labels[i];
      w.finish();
      write_diverging_ppm(dir / "tsnr_percent_change.ppm", img, 50.0);
    }
  }
  std::ofstream(out / "metrics.csv") << metrics.str();
  if (sets.size() > 1) std::ofstream(out / "comparison.csv") << comparison.str();
}

CsvTable read_csv(fs::path const &p)
{
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot read " + p.string());
  auto split = [](std::string const &line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw ConfigError(p.string() + ": empty");
  t.header = split(line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) throw ConfigError(p.string() + ": ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Index CsvTable::column(std::string const &name) const
{
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("csv has no column '" + name + "'");
  return Index(it - header.begin());
}

void cmd_report(std::vector<fs::path> const &inputs, fs::path const &out)
{
  if (inputs.empty()) throw ConfigError("report needs at least one input directory");
  std::ostringstream summary, md;
  summary << "source,kind,label,subject,value\n";
  md << "# smsrecon report\n";
  for (auto const &dir : inputs) {
    bool used = false;
    if (fs::exists(dir / "nmse.csv")) {
      used = true;
      auto const t = read_csv(dir / "nmse.csv");
      auto const label = KeyValue::load(dir / "command.cfg").get_string("method", "recon");
      std::map<std::string, std::pair<double, Index>> per;
      double total = 0;
      for (auto const &row : t.rows) {
        double const e = std::stod(row[std::size_t(t.column("nmse"))]);
        auto &acc = per[row[std::size_t(t.column("subject"))]];
        acc.first += e;
        acc.second += 1;
        total += e;
      }
      md << "\n## Reconstruction `" << dir.string() << "` (" << label << ")\n\n| subject | frames | mean NMSE |\n|---|---|---|\n";
      for (auto const &[id, acc] : per) {
        double const m = acc.first / double(acc.second);
        summary << dir.string() << ",mean_nmse," << label << ',' << id << ',' << format_double(m) << '\n';
        md << "| " << id << " | " << acc.second << " | " << format_double(m) << " |\n";
      }
      double const overall = t.rows.empty() ? kNaN : total / double(t.rows.size());
      summary << dir.string() << ",mean_nmse," << label << ",all," << format_double(overall) << '\n';
      md << "| all | " << t.rows.size() << " | " << format_double(overall) << " |\n";
    }
    if (fs::exists(dir / "metrics.csv")) {
      used = true;
      auto const t = read_csv(dir / "metrics.csv");
      md << "\n## Analysis `" << dir.string() << "`\n\n| label | subject | region | mean tSNR | surviving |\n|---|---|---|---|---|\n";
      for (auto const &row : t.rows) {
        auto at = [&](char const *c) { return row[std::size_t(t.column(c))]; };
        summary << dir.string() << ",mean_tsnr_" << at("region") << ',' << at("label") << ',' << at("subject") << ','
                << at("mean_tsnr") << '\n';
        summary << dir.string() << ",surviving_" << at("region") << ',' << at("label") << ',' << at("subject") << ','
                << at("surviving") << '\n';
        md << "| " << at("label") << " | " << at("subject") << " | " << at("region") << " | " << at("mean_tsnr") << " | "
           << at("surviving") << " |\n";
      }
    }
    if (fs::exists(dir / "comparison.csv")) {
      auto const t = read_csv(dir / "comparison.csv");
      md << "\n### Paired comparison\n\n| subject | method vs reference | tSNR change % | surviving (method / reference) | median abs phase diff |\n|---|---|---|---|---|\n";
      for (auto const &row : t.rows) {
        auto at = [&](char const *c) { return row[std::size_t(t.column(c))]; };
        std::string const label = at("method") + "_vs_" + at("reference");
        summary << dir.string() << ",tsnr_percent_change," << label << ',' << at("subject") << ','
                << at("tsnr_percent_change") << '\n';
        summary << dir.string() << ",median_abs_phase_diff," << label << ',' << at("subject") << ','
                << at("median_abs_phase_diff") << '\n';
        md << "| " << at("subject") << " | " << label << " | " << at("tsnr_percent_change") << " | " << at("surviving_method")
           << " / " << at("surviving_reference") << " | " << at("median_abs_phase_diff") << " |\n";
      }
    }
    if (fs::exists(dir / "loss.csv")) {
      used = true;
      auto const h = read_loss_csv(dir / "loss.csv");
      if (!h.empty()) {
        summary << dir.string() << ",final_train_loss,train,," << format_double(h.back().train_loss) << '\n';
        summary << dir.string() << ",final_val_nmse,train,," << format_double(h.back().val_nmse) << '\n';
        md << "\n## Training `" << dir.string() << "`\n\n" << h.size() << " epochs, final loss "
           << format_double(h.back().train_loss) << ", validation NMSE " << format_double(h.back().val_nmse) << "\n";
      }
    }
    if (!used) throw ConfigError(dir.string() + " has nothing to report");
  }
  fs::create_directories(out);
  KeyValue cmd;
  for (std::size_t i = 0; i < inputs.size(); ++i) cmd.set("input." + std::to_string(i), fs::absolute(inputs[i]).string());
  write_command(out, cmd, "report");
  std::ofstream(out / "summary.csv") << summary.str();
  std::ofstream(out / "report.md") << md.str();
}

namespace {

void write_ppm_bytes(fs::path const &p, char const *magic, Index w, Index h, std::vector<unsigned char> const &px)
{
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << magic << '\n' << w << ' ' << h << "\n255\n";
  f.write(reinterpret_cast<char const *>(px.data()), std::streamsize(px.size()));
}

unsigned char byte(double x) { return static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); }

} // namespace

void write_pgm(fs::path const &p, ReImage const &v, double lo, double hi)
{
  std::vector<unsigned char> px(std::size_t(v.size()), 0);
  double const span = hi > lo ? hi - lo : 1.0;
  for (Index i = 0; i < v.size(); ++i) {
    double const x = v.data()[i];
    if (std::isfinite(x)) px[std::size_t(i)] = byte((x - lo) / span);
  }
  write_ppm_bytes(p, "P5", v.cols(), v.rows(), px);
}

void write_phase_ppm(fs::path const &p, ReImage const &phase)
{
  std::vector<unsigned char> px(std::size_t(3 * phase.size()), 0);
  for (Index i = 0; i < phase.size(); ++i) {
    double const a = phase.data()[i];
    if (!std::isfinite(a)) continue;
    // hue wheel, red at 0
    double const hh = std::fmod((a / (2 * std::numbers::pi) + 1.0) * 6.0, 6.0);
    double const x = 1 - std::abs(std::fmod(hh, 2.0) - 1);
    double r = 0, g = 0, b = 0;
    switch (int(hh)) {
    case 0: r = 1, g = x; break;
    case 1: r = x, g = 1; break;
    case 2: g = 1, b = x; break;
    case 3: g = x, b = 1; break;
    case 4: r = x, b = 1; break;
    default: r = 1, b = x; break;
    }
    px[std::size_t(3 * i)] = byte(r);
    px[std::size_t(3 * i + 1)] = byte(g);
    px[std::size_t(3 * i + 2)] = byte(b);
  }
  write_ppm_bytes(p, "P6", phase.cols(), phase.rows(), px);
}

void write_diverging_ppm(fs::path const &p, ReImage const &v, double range)
{
  std::vector<unsigned char> px(std::size_t(3 * v.size()), 0);
  for (Index i = 0; i < v.size(); ++i) {
    double const x = v.data()[i];
    if (!std::isfinite(x)) continue;
    double const t = std::clamp(x / range, -1.0, 1.0);
    double const r = t < 0 ? 1 + t : 1.0, g = 1 - std::abs(t), b = t > 0 ? 1 - t : 1.0;
    px[std::size_t(3 * i)] = byte(r);
    px[std::size_t(3 * i + 1)] = byte(g);
    px[std::size_t(3 * i + 2)] = byte(b);
  }
  write_ppm_bytes(p, "P6", v.cols(), v.rows(), px);
}

} // namespace smsrecon::pipeline
