#pragma once

#include "smsrecon/phantom/phantom.hpp"
#include "smsrecon/train/ssdu.hpp"
#include "smsrecon/unrolled/unrolled.hpp"
#include "smsrecon/util/keyvalue.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace smsrecon {

enum class TrainMode { kSelfSupervised, kSupervised };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(std::string const &s);

struct TrainingConfig {
  TrainMode mode = TrainMode::kSelfSupervised;
  Index K = 6;
  double rho = 0.4;
  Index epochs = 100;
  double learning_rate = 3e-4;
  Index batch_size = 1; // slabs per optimizer step
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_mu = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(TrainingConfig const &) const = default;
};

void write(KeyValue &kv, TrainingConfig const &c, std::string const &prefix = "train.");
TrainingConfig read_training_config(KeyValue const &kv, std::string const &prefix = "train.");
void write(KeyValue &kv, UnrolledConfig const &c, std::string const &prefix = "model.");
UnrolledConfig read_unrolled_config(KeyValue const &kv, std::string const &prefix = "model.");

/// One training example: a single SMS frame with its encoding over Omega.
/// The truth fields are only read by supervised training and validation.
struct TrainingSlab {
  KSpaceVolume y;
  SmsEncoding E;
  std::string id;
  std::optional<SliceStackImage> truth;
  std::optional<std::vector<KSpaceVolume>> truth_kspace; // per slice, unshifted, fully sampled
};

/// Frame t of a run of a simulated subject, with its truth attached.
TrainingSlab slab_from_subject(SimulatedSubject const &subject, SliceStackImage const &frame_truth, Run run, Index t,
                               std::string id);

class Adam {
public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(ParamVector &x, ParamVector const &grad);
  Index steps() const { return t_; }

private:
  double lr_, b1_, b2_, eps_;
  ParamVector m_, v_;
  Index t_ = 0;
};

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0;
  double val_nmse = 0; // NaN when there is no validation set
};

struct TrainResult {
  UnrolledModelParams params;
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string diagnostics;
};

/// Loss and parameter gradient of one slab: the mean over its K partitions
/// of l1l2(y on Lambda_k, E_Lambda_k f(y on Theta_k)). Never reads y outside
/// Omega.
double ssdu_slab_loss(UnrolledNetwork const &net, UnrolledModelParams const &params, TrainingSlab const &slab,
                      MaskPartition const &part, ParamVector *grad);

/// Loss against the fully sampled per-slice multi-coil k-space of the truth,
/// with the network run on all of Omega.
double supervised_slab_loss(UnrolledNetwork const &net, UnrolledModelParams const &params, TrainingSlab const &slab,
                            ParamVector *grad);

/// Partitions used for slab s: fixed for the whole run.
MaskPartition slab_partition(TrainingSlab const &slab, TrainingConfig const &cfg, Index s);

/// Mean NMSE over the sensitivity support, inference on all of Omega.
double mean_nmse(UnrolledNetwork const &net, UnrolledModelParams const &params,
                 std::vector<TrainingSlab> const &slabs);

using EpochCallback = std::function<void(EpochRecord const &)>;

/// Adam on the configured loss. A non-finite loss or gradient stops training
/// and returns the last good parameters with aborted = true.
TrainResult train(UnrolledNetwork const &net, std::vector<TrainingSlab> const &train_set,
                  std::vector<TrainingSlab> const &validation_set, TrainingConfig const &cfg,
                  EpochCallback const &on_epoch = {});

/// train() with the mode forced.
TrainResult train_self_supervised(UnrolledNetwork const &net, std::vector<TrainingSlab> const &train_set,
                                  std::vector<TrainingSlab> const &validation_set, TrainingConfig cfg,
                                  EpochCallback const &on_epoch = {});
TrainResult train_supervised(UnrolledNetwork const &net, std::vector<TrainingSlab> const &train_set,
                             std::vector<TrainingSlab> const &validation_set, TrainingConfig cfg,
                             EpochCallback const &on_epoch = {});

void write_loss_csv(std::filesystem::path const &p, std::vector<EpochRecord> const &history);
std::vector<EpochRecord> read_loss_csv(std::filesystem::path const &p);

} // namespace smsrecon
