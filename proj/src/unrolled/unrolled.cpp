#include "smsrecon/unrolled/unrolled.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "smsrecon/io/raw.hpp"

namespace smsrecon {

void UnrolledConfig::validate() const
{
  if (num_unrolls < 1) throw ConfigError("unrolled: num_unrolls must be >= 1");
  if (cg_iters < 1) throw ConfigError("unrolled: cg_iters must be >= 1");
  regularizer.validate();
}

double UnrolledModelParams::mu() const { return std::exp(log_mu); }

double UnrolledModelParams::log_of(double mu)
{
  if (!(mu > 0) || !std::isfinite(mu)) throw ConfigError("mu must be positive and finite");
  return std::log(mu);
}

bool UnrolledModelParams::finite() const { return theta.allFinite() && std::isfinite(log_mu); }

ParamVector UnrolledModelParams::flatten() const
{
  ParamVector v(theta.size() + 1);
  v.head(theta.size()) = theta;
  v(theta.size()) = log_mu;
  return v;
}

UnrolledModelParams UnrolledModelParams::unflatten(ParamVector const &v)
{
  if (v.size() < 1) throw ShapeError("unflatten: empty parameter vector");
  return {v.head(v.size() - 1), v(v.size() - 1)};
}

SliceStackImage dc_solve(KSpaceVolume const &y, SmsEncoding const &E, SliceStackImage const &z, double mu,
                         Index cg_iters, DcTape *tape, std::vector<double> *residual_norms)
{
  if (!(mu > 0)) throw ConfigError("dc_solve: mu must be > 0");
  if (cg_iters < 1) throw ConfigError("dc_solve: cg_iters must be >= 1");
  Index const S = E.num_slices();
  if (z.num_slices != S || z.data.rows() != S * E.grid().readout || z.data.cols() != E.grid().phase) {
    throw ShapeError("dc_solve: z shape mismatch");
  }
  CxImage x = z.data;
  CxImage r = E.adjoint(y).data - E.normal(z).data;
  CxImage p = r;
  double rs = r.abs2().sum();
  if (tape) {
    *tape = DcTape{};
    tape->mu = mu;
    tape->r.push_back(r);
    tape->rs.push_back(rs);
  }
  if (residual_norms) residual_norms->assign(1, std::sqrt(rs));

  for (Index k = 0; k < cg_iters && rs > 0; ++k) {
    CxImage q = E.normal(SliceStackImage(p, S)).data + mu * p;
    double const pq = real_dot(p, q);
    if (!(pq > 0)) break;
    double const alpha = rs / pq;
    x += alpha * p;
    r -= alpha * q;
    double const rs_new = r.abs2().sum();
    if (tape) {
      tape->p.push_back(p);
      tape->q.push_back(std::move(q));
      tape->pq.push_back(pq);
      tape->r.push_back(r);
      tape->rs.push_back(rs_new);
      ++tape->iterations;
    }
    if (residual_norms) residual_norms->push_back(std::sqrt(rs_new));
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return SliceStackImage(std::move(x), S);
}

DcGradient dc_solve_backward(SmsEncoding const &E, DcTape const &tape, CxImage const &grad_x)
{
  Index const S = E.num_slices();
  double const mu = tape.mu;
  auto normal = [&](CxImage const &v) { return E.normal(SliceStackImage(v, S)).data; };

  CxImage const &gx = grad_x; // x_k only feeds x_{k+1}, so its adjoint never changes
  CxImage gr = CxImage::Zero(grad_x.rows(), grad_x.cols());
  CxImage gp = gr;
  double grs = 0, gmu = 0;
  for (Index k = tape.iterations - 1; k >= 0; --k) {
    auto const K = size_t(k);
    CxImage const &p = tape.p[K], &q = tape.q[K], &r1 = tape.r[K + 1];
    double const rs0 = tape.rs[K], rs1 = tape.rs[K + 1], pq = tape.pq[K];

    // p_{k+1} = r_{k+1} + beta p_k, beta = rs_{k+1} / rs_k
    double const beta = rs1 / rs0;
    gr += gp;
    double const gbeta = real_dot(gp, p);
    CxImage gpk = beta * gp;
    grs += gbeta / rs0;
    double grs_k = -gbeta * rs1 / (rs0 * rs0);
    // rs_{k+1} = <r_{k+1}, r_{k+1}>
    gr += 2.0 * grs * r1;
    // x_{k+1} = x_k + alpha p_k, r_{k+1} = r_k - alpha q_k
    double const alpha = rs0 / pq;
    double const galpha = real_dot(gx, p) - real_dot(gr, q);
    CxImage gq = -alpha * gr;
    gpk += alpha * gx;
    // alpha = rs_k / <p_k, q_k>
    grs_k += galpha / pq;
    double const gd = -galpha * rs0 / (pq * pq);
    gpk += gd * q;
    gq += gd * p;
    // q_k = (N + mu) p_k
    gmu += real_dot(gq, p);
    gpk += normal(gq) + mu * gq;

    gp = std::move(gpk);
    grs = grs_k;
  }
  // p_0 = r_0, rs_0 = <r_0, r_0>, r_0 = E^H y - N z, x_0 = z
  gr += gp;
  gr += 2.0 * grs * tape.r[0];
  return {gx - normal(gr), gmu};
}

double input_scale(SliceStackImage const &adjoint_image, double quantile)
{
  if (!(quantile >= 0 && quantile <= 1)) throw ConfigError("input_scale: quantile must be in [0, 1]");
  std::vector<double> mags(size_t(adjoint_image.data.size()));
  for (Index i = 0; i < adjoint_image.data.size(); ++i) mags[size_t(i)] = std::abs(adjoint_image.data.data()[i]);
  if (mags.empty()) return 1.0;
  auto const pos = size_t(std::llround(quantile * double(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + std::ptrdiff_t(pos), mags.end());
  double const s = mags[pos];
  if (!std::isfinite(s)) throw NumericalError("input_scale: non-finite adjoint image");
  return s > 0 ? s : 1.0;
}

UnrolledNetwork::UnrolledNetwork(UnrolledConfig config) : config_(std::move(config)), net_(config_.regularizer)
{
  config_.validate();
}

Index UnrolledNetwork::num_theta() const
{
  return net_.num_params() * (config_.share_weights ? 1 : config_.num_unrolls);
}

UnrolledModelParams UnrolledNetwork::init(std::uint64_t seed, double mu) const
{
  std::mt19937_64 rng(seed);
  UnrolledModelParams params;
  params.theta.resize(num_theta());
  Index const n = net_.num_params();
  for (Index l = 0; l < num_theta() / n; ++l) params.theta.segment(l * n, n) = net_.init(rng);
  params.log_mu = UnrolledModelParams::log_of(mu);
  return params;
}

void UnrolledNetwork::check(UnrolledModelParams const &params) const
{
  if (params.theta.size() != num_theta()) {
    throw ShapeError("unrolled: expected " + std::to_string(num_theta()) + " weights, got " +
                     std::to_string(params.theta.size()));
  }
}

Eigen::Ref<ParamVector const> UnrolledNetwork::block(UnrolledModelParams const &params, Index l) const
{
  Index const n = net_.num_params();
  return config_.share_weights ? params.theta.segment(0, n) : params.theta.segment(l * n, n);
}

SliceStackImage UnrolledNetwork::regularizer_apply(SliceStackImage const &x, UnrolledModelParams const &params,
                                                   Index l, ResNetTape *tape) const
{
  check(params);
  if (l < 0 || l >= config_.num_unrolls) throw ConfigError("regularizer_apply: unroll index out of range");
  Activation const out = net_.forward(block(params, l), to_channels(x.data), x.data.rows(), x.data.cols(), tape);
  return SliceStackImage(from_channels(out, x.data.rows(), x.data.cols()), x.num_slices);
}

SliceStackImage UnrolledNetwork::regularizer_apply_shifted(SliceStackImage const &x_shifted,
                                                           std::vector<double> const &shifts,
                                                           UnrolledModelParams const &params, Index l) const
{
  if (Index(shifts.size()) != x_shifted.num_slices) throw ShapeError("regularizer_apply_shifted: one shift per slice");
  SliceStackImage x = x_shifted;
  for (Index i = 0; i < x.num_slices; ++i) x.slice(i) = apply_fov_shift(x_shifted.slice(i), shifts[size_t(i)], true);
  SliceStackImage z = regularizer_apply(x, params, l);
  for (Index i = 0; i < z.num_slices; ++i) z.slice(i) = apply_fov_shift(CxImage(z.slice(i)), shifts[size_t(i)]);
  return z;
}

SliceStackImage UnrolledNetwork::forward(KSpaceVolume const &y, SmsEncoding const &E,
                                         UnrolledModelParams const &params, UnrollTape *tape) const
{
  check(params);
  double const mu = params.mu();
  if (!(mu > 0) || !std::isfinite(mu)) throw NumericalError("unrolled: mu is not positive and finite");
  SliceStackImage x = E.adjoint(y);
  double const s = input_scale(x);
  x.data /= s;
  KSpaceVolume ys = y;
  for (auto &c : ys.coils) c /= s;

  Index const L = config_.num_unrolls;
  if (tape) {
    *tape = UnrollTape{};
    tape->scale = s;
    tape->reg.resize(size_t(L));
    tape->dc.resize(size_t(L));
    tape->x.push_back(x);
  }
  for (Index l = 0; l < L; ++l) {
    SliceStackImage z = regularizer_apply(x, params, l, tape ? &tape->reg[size_t(l)] : nullptr);
    x = dc_solve(ys, E, z, mu, config_.cg_iters, tape ? &tape->dc[size_t(l)] : nullptr);
    if (tape) {
      tape->z.push_back(std::move(z));
      tape->x.push_back(x);
    }
  }
  x.data *= s;
  return x;
}

ParamVector UnrolledNetwork::backward(SmsEncoding const &E, UnrolledModelParams const &params,
                                      UnrollTape const &tape, CxImage const &grad_out) const
{
  check(params);
  Index const L = config_.num_unrolls, n = net_.num_params();
  if (Index(tape.dc.size()) != L) throw ShapeError("unrolled backward: tape does not match the configuration");
  ParamVector grad = ParamVector::Zero(num_theta() + 1);
  CxImage g = tape.scale * grad_out;
  double gmu = 0;
  for (Index l = L - 1; l >= 0; --l) {
    DcGradient dg = dc_solve_backward(E, tape.dc[size_t(l)], g);
    gmu += dg.mu;
    Index const off = config_.share_weights ? 0 : l * n;
    Activation const gin = net_.backward(block(params, l), tape.reg[size_t(l)], to_channels(dg.z),
                                         grad.segment(off, n));
    g = from_channels(gin, g.rows(), g.cols());
  }
  grad(num_theta()) = gmu * params.mu();
  return grad;
}

void save_checkpoint(std::filesystem::path const &dir, Checkpoint const &ckpt)
{
  std::filesystem::create_directories(dir);
  auto const &c = ckpt.config;
  ParamVector const flat = ckpt.params.flatten();
  nlohmann::json m;
  m["format"] = kCheckpointFormat;
  m["architecture"] = {{"blocks", c.regularizer.blocks},
                       {"channels", c.regularizer.channels},
                       {"kernel", c.regularizer.kernel},
                       {"io_channels", c.regularizer.io_channels},
                       {"residual_scale", c.regularizer.residual_scale}};
  m["num_unrolls"] = c.num_unrolls;
  m["cg_iters"] = c.cg_iters;
  m["share_weights"] = c.share_weights;
  m["mu"] = ckpt.params.mu();
  m["seed"] = ckpt.seed;
  m["training"] = nlohmann::json::parse(ckpt.training_json);
  m["weights"] = {{"file", "weights.f64"},
                  {"dtype", "f64"},
                  {"byte_order", "little"},
                  {"shape", {flat.size()}},
                  {"layout", "theta then log_mu"}};
  io::write_f64(dir / "weights.f64", flat.data(), size_t(flat.size()));
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
}

Checkpoint load_checkpoint(std::filesystem::path const &dir)
{
  std::ifstream f(dir / "manifest.json");
  if (!f) throw ConfigError("no checkpoint manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(f);
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("checkpoint manifest: ") + e.what());
  }
  if (m.value("format", "") != kCheckpointFormat) throw ConfigError("checkpoint: unsupported format id");
  Checkpoint ck;
  try {
    auto const &a = m.at("architecture");
    ck.config.regularizer.blocks = a.at("blocks").get<Index>();
    ck.config.regularizer.channels = a.at("channels").get<Index>();
    ck.config.regularizer.kernel = a.at("kernel").get<Index>();
    ck.config.regularizer.io_channels = a.at("io_channels").get<Index>();
    ck.config.regularizer.residual_scale = a.at("residual_scale").get<double>();
    ck.config.num_unrolls = m.at("num_unrolls").get<Index>();
    ck.config.cg_iters = m.at("cg_iters").get<Index>();
    ck.config.share_weights = m.at("share_weights").get<bool>();
    ck.seed = m.at("seed").get<std::uint64_t>();
    ck.training_json = m.at("training").dump();
    auto const &w = m.at("weights");
    if (w.at("dtype") != "f64" || w.at("byte_order") != "little") throw ConfigError("checkpoint: weights must be little-endian f64");
    auto const n = w.at("shape").at(0).get<size_t>();
    auto v = io::read_f64(dir / w.at("file").get<std::string>(), n);
    ck.params = UnrolledModelParams::unflatten(Eigen::Map<ParamVector>(v.data(), Index(n)));
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("checkpoint manifest: ") + e.what());
  }
  ck.config.validate();
  UnrolledNetwork(ck.config).check(ck.params);
  return ck;
}

} // namespace smsrecon
