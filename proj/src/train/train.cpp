#include "smsrecon/train/train.hpp"

#include "smsrecon/phantom/phantom.hpp"
#include "smsrecon/util/parallel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace smsrecon {

std::string to_string(TrainMode m) { return m == TrainMode::kSupervised ? "supervised" : "self-supervised"; }

TrainMode train_mode_from_string(std::string const &s)
{
  if (s == "self-supervised" || s == "ssdu") return TrainMode::kSelfSupervised;
  if (s == "supervised") return TrainMode::kSupervised;
  throw ConfigError("unknown training mode '" + s + "'");
}

void TrainingConfig::validate() const
{
  if (K < 1) throw ConfigError("training: K must be >= 1");
  if (!(rho > 0 && rho < 1)) throw ConfigError("training: rho must be in (0, 1)");
  if (epochs < 0) throw ConfigError("training: epochs must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("training: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("training: Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("training: adam_eps must be > 0");
  if (!(init_mu > 0)) throw ConfigError("training: init_mu must be > 0");
}

void write(KeyValue &kv, TrainingConfig const &c, std::string const &prefix)
{
  kv.set(prefix + "mode", to_string(c.mode));
  kv.set(prefix + "K", std::int64_t(c.K));
  kv.set(prefix + "rho", c.rho);
  kv.set(prefix + "epochs", std::int64_t(c.epochs));
  kv.set(prefix + "learning_rate", c.learning_rate);
  kv.set(prefix + "batch_size", std::int64_t(c.batch_size));
  kv.set(prefix + "adam_beta1", c.adam_beta1);
  kv.set(prefix + "adam_beta2", c.adam_beta2);
  kv.set(prefix + "adam_eps", c.adam_eps);
  kv.set(prefix + "init_mu", c.init_mu);
  kv.set(prefix + "seed", c.seed);
}

TrainingConfig read_training_config(KeyValue const &kv, std::string const &prefix)
{
  TrainingConfig c;
  c.mode = train_mode_from_string(kv.get_string(prefix + "mode", to_string(c.mode)));
  c.K = kv.get_int(prefix + "K", c.K);
  c.rho = kv.get_double(prefix + "rho", c.rho);
  c.epochs = kv.get_int(prefix + "epochs", c.epochs);
  c.learning_rate = kv.get_double(prefix + "learning_rate", c.learning_rate);
  c.batch_size = kv.get_int(prefix + "batch_size", c.batch_size);
  c.adam_beta1 = kv.get_double(prefix + "adam_beta1", c.adam_beta1);
  c.adam_beta2 = kv.get_double(prefix + "adam_beta2", c.adam_beta2);
  c.adam_eps = kv.get_double(prefix + "adam_eps", c.adam_eps);
  c.init_mu = kv.get_double(prefix + "init_mu", c.init_mu);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

void write(KeyValue &kv, UnrolledConfig const &c, std::string const &prefix)
{
  kv.set(prefix + "num_unrolls", std::int64_t(c.num_unrolls));
  kv.set(prefix + "cg_iters", std::int64_t(c.cg_iters));
  kv.set(prefix + "share_weights", c.share_weights);
  kv.set(prefix + "blocks", std::int64_t(c.regularizer.blocks));
  kv.set(prefix + "channels", std::int64_t(c.regularizer.channels));
  kv.set(prefix + "kernel", std::int64_t(c.regularizer.kernel));
  kv.set(prefix + "residual_scale", c.regularizer.residual_scale);
}

UnrolledConfig read_unrolled_config(KeyValue const &kv, std::string const &prefix)
{
  UnrolledConfig c;
  c.num_unrolls = kv.get_int(prefix + "num_unrolls", c.num_unrolls);
  c.cg_iters = kv.get_int(prefix + "cg_iters", c.cg_iters);
  c.share_weights = kv.get_bool(prefix + "share_weights", c.share_weights);
  c.regularizer.blocks = kv.get_int(prefix + "blocks", c.regularizer.blocks);
  c.regularizer.channels = kv.get_int(prefix + "channels", c.regularizer.channels);
  c.regularizer.kernel = kv.get_int(prefix + "kernel", c.regularizer.kernel);
  c.regularizer.residual_scale = kv.get_double(prefix + "residual_scale", c.regularizer.residual_scale);
  c.validate();
  return c;
}

TrainingSlab slab_from_subject(SimulatedSubject const &subject, SliceStackImage const &frame_truth, Run run, Index t,
                               std::string id)
{
  return TrainingSlab{acquire_frame(subject, frame_truth, run, t), subject.encoding(), std::move(id), frame_truth,
                      full_kspace(frame_truth, subject.sens)};
}

void Adam::step(ParamVector &x, ParamVector const &grad)
{
  if (grad.size() != x.size()) throw ShapeError("adam: gradient size mismatch");
  if (m_.size() != x.size()) {
    m_ = ParamVector::Zero(x.size());
    v_ = ParamVector::Zero(x.size());
  }
  ++t_;
  m_ = b1_ * m_ + (1 - b1_) * grad;
  v_ = b2_ * v_ + (1 - b2_) * grad.cwiseAbs2();
  double const c1 = 1 - std::pow(b1_, double(t_));
  double const c2 = 1 - std::pow(b2_, double(t_));
  x.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

double ssdu_slab_loss(UnrolledNetwork const &net, UnrolledModelParams const &params, TrainingSlab const &slab,
                      MaskPartition const &part, ParamVector *grad)
{
  size_t const K = size_t(part.size());
  if (K == 0) throw ConfigError("ssdu loss: empty partition");
  std::vector<double> losses(K);
  std::vector<ParamVector> grads(grad ? K : 0);
  parallel_for(K, [&](size_t k) {
    SmsEncoding const Et = slab.E.with_mask(part.theta[k]);
    SmsEncoding const El = slab.E.with_mask(part.lambda[k]);
    UnrollTape tape;
    SliceStackImage const x = net.forward(slab.y, Et, params, grad ? &tape : nullptr);
    KSpaceVolume const yhat = El.forward(x);
    KSpaceVolume g;
    losses[k] = l1l2_loss(slab.y, yhat, part.lambda[k].kept, grad ? &g : nullptr);
    if (grad) grads[k] = net.backward(Et, params, tape, El.adjoint(g).data);
  });
  double loss = 0;
  for (size_t k = 0; k < K; ++k) loss += losses[k];
  if (grad) {
    *grad = ParamVector::Zero(net.num_theta() + 1);
    for (size_t k = 0; k < K; ++k) *grad += grads[k];
    *grad /= double(K);
  }
  return loss / double(K);
}

namespace {

SmsEncoding single_slice_encoder(SmsEncoding const &E, Index i)
{
  CoilSensitivities s;
  s.maps = {E.sensitivities().maps[size_t(i)]};
  return SmsEncoding(std::move(s), SamplingMask::full(E.grid()), {0.0});
}

} // namespace

double supervised_slab_loss(UnrolledNetwork const &net, UnrolledModelParams const &params, TrainingSlab const &slab,
                            ParamVector *grad)
{
  if (!slab.truth_kspace) throw ConfigError("supervised training needs fully sampled truth k-space (" + slab.id + ")");
  auto const &truth = *slab.truth_kspace;
  Index const S = slab.E.num_slices();
  if (Index(truth.size()) != S) throw ShapeError("supervised loss: one truth volume per slice required");
  UnrollTape tape;
  SliceStackImage const x = net.forward(slab.y, slab.E, params, grad ? &tape : nullptr);
  std::vector<SmsEncoding> enc;
  std::vector<KSpaceVolume> est;
  std::vector<CxImage const *> ref_ptr, est_ptr;
  for (Index i = 0; i < S; ++i) {
    enc.push_back(single_slice_encoder(slab.E, i));
    est.push_back(enc.back().forward(SliceStackImage(CxImage(x.slice(i)), 1)));
  }
  for (Index i = 0; i < S; ++i) {
    for (auto const &c : truth[size_t(i)].coils) ref_ptr.push_back(&c);
    for (auto const &c : est[size_t(i)].coils) est_ptr.push_back(&c);
  }
  Grid const g = slab.E.grid();
  BoolGrid const all = BoolGrid::Constant(g.readout, g.phase, true);
  std::vector<CxImage> gk;
  double const loss = l1l2_loss(ref_ptr, est_ptr, all, grad ? &gk : nullptr);
  if (grad) {
    CxImage gx(x.data.rows(), x.data.cols());
    Index const C = slab.E.num_coils();
    for (Index i = 0; i < S; ++i) {
      KSpaceVolume gi;
      gi.coils.assign(gk.begin() + i * C, gk.begin() + (i + 1) * C);
      gx.middleRows(i * g.readout, g.readout) = enc[size_t(i)].adjoint(gi).data;
    }
    *grad = net.backward(slab.E, params, tape, gx);
  }
  return loss;
}

MaskPartition slab_partition(TrainingSlab const &slab, TrainingConfig const &cfg, Index s)
{
  return partition_mask(slab.E.mask(), cfg.K, cfg.rho, derive_seed(cfg.seed, {0x9a27, std::uint64_t(s)}));
}

double mean_nmse(UnrolledNetwork const &net, UnrolledModelParams const &params, std::vector<TrainingSlab> const &slabs)
{
  if (slabs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v(slabs.size());
  parallel_for(slabs.size(), [&](size_t i) {
    auto const &s = slabs[i];
    if (!s.truth) throw ConfigError("validation slab " + s.id + " has no ground truth");
    v[i] = nmse(net.forward(s.y, s.E, params).data, s.truth->data, s.E.sensitivities().stacked_support());
  });
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

TrainResult train(UnrolledNetwork const &net, std::vector<TrainingSlab> const &train_set,
                  std::vector<TrainingSlab> const &validation_set, TrainingConfig const &cfg,
                  EpochCallback const &on_epoch)
{
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  bool const ssdu = cfg.mode == TrainMode::kSelfSupervised;
  std::vector<MaskPartition> parts;
  if (ssdu) {
    for (size_t s = 0; s < train_set.size(); ++s) parts.push_back(slab_partition(train_set[s], cfg, Index(s)));
  }

  TrainResult res;
  res.params = net.init(derive_seed(cfg.seed, {0x1417}), cfg.init_mu);
  Adam adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x5f0c}));
  std::vector<size_t> order(train_set.size());

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t(0));
    for (size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double epoch_loss = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += size_t(cfg.batch_size)) {
      size_t const b1 = std::min(order.size(), b0 + size_t(cfg.batch_size));
      ParamVector grad = ParamVector::Zero(net.num_theta() + 1);
      double loss = 0;
      for (size_t j = b0; j < b1; ++j) {
        size_t const s = order[j];
        ParamVector g;
        loss += ssdu ? ssdu_slab_loss(net, res.params, train_set[s], parts[s], &g)
                     : supervised_slab_loss(net, res.params, train_set[s], &g);
        grad += g;
      }
      double const nb = double(b1 - b0);
      grad /= nb;
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite " << (std::isfinite(loss) ? "gradient" : "loss") << " at epoch " << epoch << ", slabs";
        for (size_t j = b0; j < b1; ++j) msg << " " << train_set[order[j]].id;
        msg << ": loss " << loss / nb << ", " << (grad.array().isFinite() == false).count()
            << " non-finite gradient entries, mu " << res.params.mu();
        res.aborted = true;
        res.diagnostics = msg.str();
        return res;
      }
      epoch_loss += loss;
      ParamVector flat = res.params.flatten();
      adam.step(flat, grad);
      res.params = UnrolledModelParams::unflatten(flat);
    }
    EpochRecord rec{epoch, epoch_loss / double(train_set.size()), mean_nmse(net, res.params, validation_set)};
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return res;
}

TrainResult train_self_supervised(UnrolledNetwork const &net, std::vector<TrainingSlab> const &train_set,
                                  std::vector<TrainingSlab> const &validation_set, TrainingConfig cfg,
                                  EpochCallback const &on_epoch)
{
  cfg.mode = TrainMode::kSelfSupervised;
  return train(net, train_set, validation_set, cfg, on_epoch);
}

TrainResult train_supervised(UnrolledNetwork const &net, std::vector<TrainingSlab> const &train_set,
                             std::vector<TrainingSlab> const &validation_set, TrainingConfig cfg,
                             EpochCallback const &on_epoch)
{
  cfg.mode = TrainMode::kSupervised;
  return train(net, train_set, validation_set, cfg, on_epoch);
}

void write_loss_csv(std::filesystem::path const &p, std::vector<EpochRecord> const &history)
{
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << "epoch,train_loss,val_nmse\n";
  for (auto const &r : history) f << r.epoch << "," << format_double(r.train_loss) << "," << format_double(r.val_nmse) << "\n";
}

std::vector<EpochRecord> read_loss_csv(std::filesystem::path const &p)
{
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot read " + p.string());
  std::string line;
  std::getline(f, line);
  if (line != "epoch,train_loss,val_nmse") throw ConfigError(p.string() + ": unexpected header");
  std::vector<EpochRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    try {
      out.push_back({std::stoll(a), std::stod(b), std::stod(c)});
    } catch (std::exception const &) {
      throw ConfigError(p.string() + ": malformed row '" + line + "'");
    }
  }
  return out;
}

} // namespace smsrecon
