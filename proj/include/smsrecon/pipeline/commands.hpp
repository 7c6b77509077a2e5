#pragma once

#include "smsrecon/pipeline/config.hpp"
#include "smsrecon/pipeline/dataset.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace smsrecon::pipeline {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct SubjectRecord {
  std::string id;
  std::uint64_t seed = 0;
  std::string role; // "train" or "test"
  Index frames = 0; // per run
};

/// One subject of a simulated experiment, loaded from its dataset.
struct SubjectData {
  SubjectRecord record;
  SliceStackImage truth; // baseline, before activation
  BoolGrid support;      // phantom support, stacked
  CoilSensitivities sens;
  SamplingMask mask;
  std::vector<double> fov_shifts;
  CalibrationData calibration;
  ActivationSpec activation;
  double noise_sigma = 0;

  SmsEncoding encoding() const { return SmsEncoding(sens, mask, fov_shifts); }
  SliceStackImage frame_truth(Run run, Index t) const { return activation_frame(truth, activation, run, t); }
};

/// simulate output: config.cfg, manifest.json (kind "experiment") and one
/// dataset per subject under subjects/<id>/.
class Experiment {
public:
  static Experiment open(fs::path const &dir);

  ExperimentConfig const &config() const { return config_; }
  fs::path const &dir() const { return dir_; }
  std::vector<SubjectRecord> const &subjects() const { return subjects_; }
  std::vector<SubjectRecord> subjects(std::string const &role) const;

  SubjectData load_subject(SubjectRecord const &rec) const;
  /// Frames [0, count) of one run.
  std::vector<KSpaceVolume> load_run(SubjectRecord const &rec, Run run, Index count) const;

private:
  fs::path dir_;
  ExperimentConfig config_;
  std::vector<SubjectRecord> subjects_;
};

std::string run_name(Run r);

/// Writes the experiment. Train subjects get subjects.train_frames frames of
/// the CCW run only; test subjects get every frame of both runs.
std::vector<SubjectRecord> cmd_simulate(ExperimentConfig const &cfg, fs::path const &out, std::ostream *log = nullptr);

/// `cfg` must agree with the experiment on everything that shaped the data.
/// Writes a checkpoint plus loss.csv and config.cfg into `out`. Validation
/// NMSE in the loss CSV uses frame 0 of the test subjects and is never used
/// to pick parameters.
TrainResult cmd_train(fs::path const &data, ExperimentConfig const &cfg, fs::path const &out,
                      std::ostream *log = nullptr);

enum class Method { kSplitSg, kCgSense, kDl };
std::string to_string(Method m);
Method method_from_string(std::string const &s);

struct ReconOptions {
  Method method = Method::kSplitSg;
  std::optional<fs::path> checkpoint;
  std::string subjects = "test"; // "test", "train", "all" or a comma-separated id list
  Index max_frames = 0;          // 0: every stored frame
};

/// Per subject: <id>/ with f32 magnitude and phase of every frame of each run
/// ([T, S*M, N]) plus the masks the analysis needs. nmse.csv lists
/// subject,run,frame,nmse against the simulator truth over the coil support.
void cmd_reconstruct(fs::path const &data, ExperimentConfig const &cfg, ReconOptions const &opts, fs::path const &out,
                     std::ostream *log = nullptr);

/// Runs the analysis chain on every reconstruction. metrics.csv has one row
/// per (label, subject, region); with more than one input, comparison.csv
/// compares each later input against the first.
void cmd_analyze(std::vector<fs::path> const &recons, fs::path const &out, std::ostream *log = nullptr);

/// Collects nmse.csv, metrics.csv and comparison.csv from the given output
/// directories into summary.csv and report.md.
void cmd_report(std::vector<fs::path> const &inputs, fs::path const &out);

inline constexpr char kMetricsHeader[] =
    "label,subject,region,voxels,mean_tsnr,surviving,threshold,regressors";
inline constexpr char kComparisonHeader[] =
    "subject,reference,method,mean_tsnr_reference,mean_tsnr_method,tsnr_percent_change,"
    "median_voxel_tsnr_change,surviving_reference,surviving_method,common_surviving,median_abs_phase_diff";
inline constexpr char kNmseHeader[] = "subject,run,frame,nmse";

/// Small CSV reader for the files above: header plus rows of fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  Index column(std::string const &name) const;
};
CsvTable read_csv(fs::path const &p);

// 8-bit images of a stacked map; non-finite pixels are black.
void write_pgm(fs::path const &p, ReImage const &v, double lo, double hi);
void write_phase_ppm(fs::path const &p, ReImage const &phase);
void write_diverging_ppm(fs::path const &p, ReImage const &v, double range);

} // namespace smsrecon::pipeline
