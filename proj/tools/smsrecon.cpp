#include "smsrecon/core/fft.hpp"
#include "smsrecon/pipeline/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace smsrecon;
using namespace smsrecon::pipeline;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<bool> deterministic;
  std::string out;
};

void add_common(CLI::App *cmd, Common &c, bool needs_out = true)
{
  cmd->add_option("--config", c.config, "experiment config (key = value)");
  cmd->add_option("--seed", c.seed, "override train.seed");
  cmd->add_flag("--deterministic,!--nondeterministic", c.deterministic,
                "bit-reproducible mode (default); --nondeterministic allows timed FFT planning");
  auto *o = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) o->required();
}

ExperimentConfig effective_config(Common const &c, std::optional<std::filesystem::path> const &fallback)
{
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
  } else if (fallback) {
    cfg = load_config(*fallback / "config.cfg");
  }
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.deterministic) cfg.deterministic = *c.deterministic;
  cfg.validate();
  set_fft_measured_planning(!cfg.deterministic);
  return cfg;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"SMS reconstruction and fMRI analysis pipeline. Worker threads: SMSRECON_WORKERS."};
  app.require_subcommand(1);

  Common sim_c, train_c, rec_c, an_c, rep_c;
  auto *sim = app.add_subcommand("simulate", "simulate phantoms, coils and both task runs");
  add_common(sim, sim_c);

  auto *trn = app.add_subcommand("train", "train the unrolled network");
  std::string train_data;
  std::optional<std::string> mode;
  trn->add_option("--data", train_data, "simulated experiment directory")->required();
  trn->add_option("--mode", mode, "self-supervised or supervised (default: train.mode of the config)");
  add_common(trn, train_c);

  auto *rec = app.add_subcommand("reconstruct", "reconstruct every frame of the selected subjects");
  std::string rec_data, method, checkpoint, subjects = "test";
  Index frames = 0;
  rec->add_option("--data", rec_data, "simulated experiment directory")->required();
  rec->add_option("--method", method, "split-sg, cg-sense or dl")->required();
  rec->add_option("--checkpoint", checkpoint, "trained model (method dl)");
  rec->add_option("--subjects", subjects, "test, train, all or comma-separated ids");
  rec->add_option("--frames", frames, "frames per run (0 = all)");
  add_common(rec, rec_c);

  auto *ana = app.add_subcommand("analyze", "fMRI analysis of reconstructions; later inputs are compared to the first");
  std::vector<std::string> recon_dirs;
  ana->add_option("--recon", recon_dirs, "reconstruction directories")->required();
  auto *ana_out = ana->add_option("--out", an_c.out, "output directory");
  ana_out->required();

  auto *rep = app.add_subcommand("report", "collect NMSE, tSNR and comparison tables");
  std::vector<std::string> inputs;
  rep->add_option("--input", inputs, "reconstruct, analyze or train output directories")->required();
  rep->add_option("--out", rep_c.out, "output directory")->required();

  auto *dflt = app.add_subcommand("config", "print the default experiment config");

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*dflt) {
      std::cout << to_keyvalue(ExperimentConfig{}).dump();
    } else if (*sim) {
      auto const cfg = effective_config(sim_c, std::nullopt);
      cmd_simulate(cfg, sim_c.out, &std::cerr);
    } else if (*trn) {
      auto cfg = effective_config(train_c, train_data);
      if (mode) cfg.train.mode = train_mode_from_string(*mode);
      cmd_train(train_data, cfg, train_c.out, &std::cerr);
    } else if (*rec) {
      auto const cfg = effective_config(rec_c, rec_data);
      ReconOptions opts;
      opts.method = method_from_string(method);
      if (!checkpoint.empty()) opts.checkpoint = checkpoint;
      opts.subjects = subjects;
      opts.max_frames = frames;
      cmd_reconstruct(rec_data, cfg, opts, rec_c.out, &std::cerr);
    } else if (*ana) {
      std::vector<std::filesystem::path> dirs(recon_dirs.begin(), recon_dirs.end());
      cmd_analyze(dirs, an_c.out, &std::cerr);
    } else if (*rep) {
      std::vector<std::filesystem::path> dirs(inputs.begin(), inputs.end());
      cmd_report(dirs, rep_c.out);
    }
  } catch (ConfigError const &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (ShapeError const &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (NumericalError const &e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
