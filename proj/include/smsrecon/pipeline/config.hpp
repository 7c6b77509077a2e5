#pragma once

#include "smsrecon/baseline/cg_sense.hpp"
#include "smsrecon/baseline/split_slice_grappa.hpp"
#include "smsrecon/fmri/analysis.hpp"
#include "smsrecon/phantom/phantom.hpp"
#include "smsrecon/train/train.hpp"
#include "smsrecon/util/keyvalue.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace smsrecon::pipeline {

struct SubjectPlan {
  Index num_train = 8;
  Index num_test = 4;
  std::uint64_t train_seed_base = 1000; // phantom seeds base, base + 1, ...
  std::uint64_t test_seed_base = 2000;
  Index train_frames = 1; // frames per training subject (CCW run from t = 0)

  bool operator==(SubjectPlan const &) const = default;
};

struct ActivationPlan {
  double task_period = 32.0;
  double repetition_time = 1.0;
  Index num_frames = 128;
  double amplitude = 0.05;

  bool operator==(ActivationPlan const &) const = default;
};

struct ExperimentConfig {
  AcquisitionSpec acq;
  ActivationPlan activation;
  SubjectPlan subjects;
  TrainingConfig train;
  UnrolledConfig model;
  CgSenseOptions cg_sense;
  SgOptions split_sg;
  AnalysisConfig analysis; // tr and task_period follow `activation`
  bool deterministic = true;

  void validate() const;
  std::vector<std::uint64_t> train_seeds() const;
  std::vector<std::uint64_t> test_seeds() const;
};

bool operator==(ExperimentConfig const &a, ExperimentConfig const &b);

/// Unknown keys are rejected, missing keys keep their defaults.
ExperimentConfig read_experiment_config(KeyValue const &kv);
KeyValue to_keyvalue(ExperimentConfig const &cfg);

ExperimentConfig load_config(std::filesystem::path const &p);
void save_config(std::filesystem::path const &p, ExperimentConfig const &cfg);

} // namespace smsrecon::pipeline
