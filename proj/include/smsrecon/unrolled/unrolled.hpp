#pragma once

#include "smsrecon/core/encoding.hpp"
#include "smsrecon/unrolled/resnet.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace smsrecon {

struct UnrolledConfig {
  Index num_unrolls = 10;
  Index cg_iters = 10;
  bool share_weights = true;
  ResNetSpec regularizer;

  void validate() const;
  bool operator==(UnrolledConfig const &) const = default;
};

/// theta holds one regularizer (shared) or num_unrolls of them back to back.
/// mu = exp(log_mu) keeps the penalty positive.
struct UnrolledModelParams {
  ParamVector theta;
  double log_mu = 0;

  double mu() const;
  static double log_of(double mu);
  bool finite() const;

  /// [theta..., log_mu], the vector an optimizer works on.
  ParamVector flatten() const;
  static UnrolledModelParams unflatten(ParamVector const &v);
};

/// Per-iteration state of the DC conjugate gradient, kept for reverse mode.
struct DcTape {
  double mu = 0;
  std::vector<CxImage> p, q, r; // p_k, A p_k, r_k (r has one extra entry)
  std::vector<double> rs, pq;   // <r_k, r_k>, <p_k, q_k>
  Index iterations = 0;
};

/// Fixed-iteration CG on (E^H E + mu I) x = E^H y + mu z, started at x = z.
/// Stops early only on an exactly zero residual. residual_norms receives
/// ||r_k|| for k = 0..iterations.
SliceStackImage dc_solve(KSpaceVolume const &y, SmsEncoding const &E, SliceStackImage const &z, double mu,
                         Index cg_iters, DcTape *tape = nullptr, std::vector<double> *residual_norms = nullptr);

struct DcGradient {
  CxImage z;
  double mu = 0;
};

/// Reverse mode of dc_solve for a cotangent on its output x.
DcGradient dc_solve_backward(SmsEncoding const &E, DcTape const &tape, CxImage const &grad_x);

/// Scale used to normalize a slab: the given quantile of |E^H y| (1 if zero).
double input_scale(SliceStackImage const &adjoint_image, double quantile = 0.95);

struct UnrollTape {
  double scale = 1;
  std::vector<SliceStackImage> x;   // x_0 .. x_L (normalized)
  std::vector<SliceStackImage> z;   // z_1 .. z_L
  std::vector<ResNetTape> reg;
  std::vector<DcTape> dc;
};

class UnrolledNetwork {
public:
  explicit UnrolledNetwork(UnrolledConfig config);

  UnrolledConfig const &config() const { return config_; }
  ResNet const &regularizer() const { return net_; }
  Index num_theta() const;

  /// Regularizer weights from `seed`, identity start, mu = 0.05.
  UnrolledModelParams init(std::uint64_t seed, double mu = 0.05) const;
  void check(UnrolledModelParams const &params) const;

  /// z = R(x) for unroll l in the unshifted anatomical frame of the stack.
  SliceStackImage regularizer_apply(SliceStackImage const &x, UnrolledModelParams const &params, Index l = 0,
                                    ResNetTape *tape = nullptr) const;
  /// Same map for images carrying the CAIPI FOV shifts: shifts are removed
  /// per slice before the CNN and re-applied after it.
  SliceStackImage regularizer_apply_shifted(SliceStackImage const &x_shifted, std::vector<double> const &shifts,
                                            UnrolledModelParams const &params, Index l = 0) const;

  /// x_0 = E^H y, then L times z = R(x), x = DC(y, z); returns x_L. The slab
  /// is normalized by input_scale(E^H y) on the way in and restored at the end.
  SliceStackImage forward(KSpaceVolume const &y, SmsEncoding const &E, UnrolledModelParams const &params,
                          UnrollTape *tape = nullptr) const;

  /// Gradient with respect to flatten() of params, given d(loss)/d(output)
  /// in the real inner product (d/dRe + i d/dIm).
  ParamVector backward(SmsEncoding const &E, UnrolledModelParams const &params, UnrollTape const &tape,
                       CxImage const &grad_out) const;

private:
  Eigen::Ref<ParamVector const> block(UnrolledModelParams const &params, Index l) const;

  UnrolledConfig config_;
  ResNet net_;
};

/// Checkpoint directory: manifest.json plus weights.f64 ([theta..., log_mu]).
struct Checkpoint {
  UnrolledConfig config;
  UnrolledModelParams params;
  std::uint64_t seed = 0;
  std::string training_json = "{}"; // free-form training description
};

inline constexpr char kCheckpointFormat[] = "smsrecon-ckpt-v1";

void save_checkpoint(std::filesystem::path const &dir, Checkpoint const &ckpt);
Checkpoint load_checkpoint(std::filesystem::path const &dir);

} // namespace smsrecon
