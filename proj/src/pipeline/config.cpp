#include "smsrecon/pipeline/config.hpp"

#include <algorithm>

namespace smsrecon::pipeline {

namespace {

void check(bool ok, std::string const &what)
{
  if (!ok) throw ConfigError("config: " + what);
}

} // namespace

void ExperimentConfig::validate() const
{
  check(acq.grid.readout >= 4 && acq.grid.phase >= 4, "acq.readout and acq.phase must be >= 4");
  check(acq.num_slices >= 1, "acq.slices must be >= 1");
  check(acq.num_coils >= 1, "acq.coils must be >= 1");
  check(acq.inplane_acceleration >= 1, "acq.inplane_acceleration must be >= 1");
  check(acq.acs_lines >= 0 && acq.acs_lines <= acq.grid.phase, "acq.acs_lines out of range");
  check(acq.snr >= 0, "acq.snr must be >= 0 (0 = noiseless)");
  check(activation.repetition_time > 0 && activation.task_period > 0, "activation times must be positive");
  check(double(activation.num_frames) * activation.repetition_time >= 2 * activation.task_period,
        "activation.frames must cover at least two task periods");
  check(activation.amplitude >= 0 && activation.amplitude < 0.2, "activation.amplitude must be in [0, 0.2)");
  check(subjects.num_train >= 0 && subjects.num_test >= 0, "subject counts must be >= 0");
  check(subjects.train_frames >= 1 && subjects.train_frames <= activation.num_frames,
        "subjects.train_frames must be in [1, activation.frames]");
  auto const tr = train_seeds(), te = test_seeds();
  for (auto s : tr) check(std::find(te.begin(), te.end(), s) == te.end(), "train and test phantom seeds overlap");
  train.validate();
  model.validate();
  check(cg_sense.mu >= 0 && cg_sense.max_iter >= 1 && cg_sense.tol >= 0, "bad cg_sense settings");
  check(split_sg.tikhonov >= 0 && split_sg.sg_kx >= 1 && split_sg.sg_ky >= 1, "bad split_sg settings");
  analysis.validate();
  check(analysis.tr == activation.repetition_time && analysis.task_period == activation.task_period,
        "analysis timing must follow the activation");
}

std::vector<std::uint64_t> ExperimentConfig::train_seeds() const
{
  std::vector<std::uint64_t> v;
  for (Index i = 0; i < subjects.num_train; ++i) v.push_back(subjects.train_seed_base + std::uint64_t(i));
  return v;
}

std::vector<std::uint64_t> ExperimentConfig::test_seeds() const
{
  std::vector<std::uint64_t> v;
  for (Index i = 0; i < subjects.num_test; ++i) v.push_back(subjects.test_seed_base + std::uint64_t(i));
  return v;
}

KeyValue to_keyvalue(ExperimentConfig const &c)
{
  KeyValue kv;
  kv.set("acq.readout", std::int64_t(c.acq.grid.readout));
  kv.set("acq.phase", std::int64_t(c.acq.grid.phase));
  kv.set("acq.slices", std::int64_t(c.acq.num_slices));
  kv.set("acq.coils", std::int64_t(c.acq.num_coils));
  kv.set("acq.inplane_acceleration", c.acq.inplane_acceleration);
  kv.set("acq.acs_lines", std::int64_t(c.acq.acs_lines));
  kv.set("acq.snr", c.acq.snr);
  kv.set("activation.task_period", c.activation.task_period);
  kv.set("activation.repetition_time", c.activation.repetition_time);
  kv.set("activation.frames", std::int64_t(c.activation.num_frames));
  kv.set("activation.amplitude", c.activation.amplitude);
  kv.set("subjects.train", std::int64_t(c.subjects.num_train));
  kv.set("subjects.test", std::int64_t(c.subjects.num_test));
  kv.set("subjects.train_seed_base", c.subjects.train_seed_base);
  kv.set("subjects.test_seed_base", c.subjects.test_seed_base);
  kv.set("subjects.train_frames", std::int64_t(c.subjects.train_frames));
  write(kv, c.train, "train.");
  write(kv, c.model, "model.");
  kv.set("cg_sense.mu", c.cg_sense.mu);
  kv.set("cg_sense.max_iter", c.cg_sense.max_iter);
  kv.set("cg_sense.tol", c.cg_sense.tol);
  kv.set("split_sg.sg_kx", std::int64_t(c.split_sg.sg_kx));
  kv.set("split_sg.sg_ky", std::int64_t(c.split_sg.sg_ky));
  kv.set("split_sg.grappa_kx", std::int64_t(c.split_sg.grappa_kx));
  kv.set("split_sg.grappa_ky", std::int64_t(c.split_sg.grappa_ky));
  kv.set("split_sg.tikhonov", c.split_sg.tikhonov);
  kv.set("analysis.poly_order", std::int64_t(c.analysis.poly_order));
  kv.set("analysis.hemodynamic_shift", std::int64_t(c.analysis.hemodynamic_shift));
  kv.set("analysis.coherence_threshold", c.analysis.coherence_threshold);
  kv.set("analysis.welch_segment", std::int64_t(c.analysis.welch.segment_frames));
  kv.set("analysis.welch_overlap", c.analysis.welch.overlap);
  kv.set("analysis.welch_nfft", std::int64_t(c.analysis.welch.nfft));
  kv.set("deterministic", c.deterministic);
  return kv;
}

ExperimentConfig read_experiment_config(KeyValue const &kv)
{
  ExperimentConfig c;
  c.acq.grid.readout = kv.get_int("acq.readout", c.acq.grid.readout);
  c.acq.grid.phase = kv.get_int("acq.phase", c.acq.grid.phase);
  c.acq.num_slices = kv.get_int("acq.slices", c.acq.num_slices);
  c.acq.num_coils = kv.get_int("acq.coils", c.acq.num_coils);
  c.acq.inplane_acceleration = int(kv.get_int("acq.inplane_acceleration", c.acq.inplane_acceleration));
  c.acq.acs_lines = kv.get_int("acq.acs_lines", c.acq.acs_lines);
  c.acq.snr = kv.get_double("acq.snr", c.acq.snr);
  c.activation.task_period = kv.get_double("activation.task_period", c.activation.task_period);
  c.activation.repetition_time = kv.get_double("activation.repetition_time", c.activation.repetition_time);
  c.activation.num_frames = kv.get_int("activation.frames", c.activation.num_frames);
  c.activation.amplitude = kv.get_double("activation.amplitude", c.activation.amplitude);
  c.subjects.num_train = kv.get_int("subjects.train", c.subjects.num_train);
  c.subjects.num_test = kv.get_int("subjects.test", c.subjects.num_test);
  c.subjects.train_seed_base = kv.get_uint("subjects.train_seed_base", c.subjects.train_seed_base);
  c.subjects.test_seed_base = kv.get_uint("subjects.test_seed_base", c.subjects.test_seed_base);
  c.subjects.train_frames = kv.get_int("subjects.train_frames", c.subjects.train_frames);
  c.train = read_training_config(kv, "train.");
  c.model = read_unrolled_config(kv, "model.");
  c.cg_sense.mu = kv.get_double("cg_sense.mu", c.cg_sense.mu);
  c.cg_sense.max_iter = int(kv.get_int("cg_sense.max_iter", c.cg_sense.max_iter));
  c.cg_sense.tol = kv.get_double("cg_sense.tol", c.cg_sense.tol);
  c.split_sg.sg_kx = kv.get_int("split_sg.sg_kx", c.split_sg.sg_kx);
  c.split_sg.sg_ky = kv.get_int("split_sg.sg_ky", c.split_sg.sg_ky);
  c.split_sg.grappa_kx = kv.get_int("split_sg.grappa_kx", c.split_sg.grappa_kx);
  c.split_sg.grappa_ky = kv.get_int("split_sg.grappa_ky", c.split_sg.grappa_ky);
  c.split_sg.tikhonov = kv.get_double("split_sg.tikhonov", c.split_sg.tikhonov);
  c.analysis.tr = c.activation.repetition_time;
  c.analysis.task_period = c.activation.task_period;
  c.analysis.poly_order = kv.get_int("analysis.poly_order", c.analysis.poly_order);
  c.analysis.hemodynamic_shift = kv.get_int("analysis.hemodynamic_shift", c.analysis.hemodynamic_shift);
  c.analysis.coherence_threshold = kv.get_double("analysis.coherence_threshold", c.analysis.coherence_threshold);
  c.analysis.welch.segment_frames = kv.get_int("analysis.welch_segment", c.analysis.welch.segment_frames);
  c.analysis.welch.overlap = kv.get_double("analysis.welch_overlap", c.analysis.welch.overlap);
  c.analysis.welch.nfft = kv.get_int("analysis.welch_nfft", c.analysis.welch.nfft);
  c.deterministic = kv.get_bool("deterministic", c.deterministic);
  auto const unused = kv.unused();
  if (!unused.empty()) throw ConfigError("config: unknown key '" + unused.front() + "'");
  c.validate();
  return c;
}

bool operator==(ExperimentConfig const &a, ExperimentConfig const &b)
{
  return to_keyvalue(a).dump() == to_keyvalue(b).dump();
}

ExperimentConfig load_config(std::filesystem::path const &p)
{
  return read_experiment_config(KeyValue::load(p));
}

void save_config(std::filesystem::path const &p, ExperimentConfig const &cfg)
{
  to_keyvalue(cfg).save(p);
}

} // namespace smsrecon::pipeline
