#pragma once

#include "smsrecon/core/types.hpp"

#include <Eigen/Core>

#include <random>
#include <vector>

namespace smsrecon {

/// Residual CNN on a real multi-channel image: head conv, residual blocks
/// h += scale * conv(relu(conv(h))), tail conv, plus a global skip so the
/// network computes x + tail(h). All convs are k x k, stride 1, zero padded.
struct ResNetSpec {
  Index blocks = 4;
  Index channels = 32;
  Index kernel = 3;
  Index io_channels = 2;
  double residual_scale = 0.1;

  Index num_params() const;
  void validate() const;
  bool operator==(ResNetSpec const &) const = default;
};

/// Activations are (channels x pixels); pixel p = row * width + col.
using Activation = Eigen::MatrixXd;
using ParamVector = Eigen::VectorXd;

/// Intermediate values kept by the forward pass for backward().
struct ResNetTape {
  Index height = 0, width = 0;
  Activation input; // zero padded by kernel / 2 on every side
  std::vector<Activation> trunk;  // h_0 .. h_B
  std::vector<Activation> hidden; // relu(conv1(h_b)) per block
};

class ResNet {
public:
  explicit ResNet(ResNetSpec spec);

  ResNetSpec const &spec() const { return spec_; }
  Index num_params() const { return spec_.num_params(); }

  /// He-normal convs, zero biases, zero tail so the initial map is identity.
  ParamVector init(std::mt19937_64 &rng) const;

  Activation forward(Eigen::Ref<ParamVector const> theta, Activation const &x, Index height, Index width,
                     ResNetTape *tape = nullptr) const;

  /// Accumulates d(loss)/d(theta) into grad_theta and returns d(loss)/d(x).
  Activation backward(Eigen::Ref<ParamVector const> theta, ResNetTape const &tape, Activation const &grad_out,
                      Eigen::Ref<ParamVector> grad_theta) const;

private:
  struct Layer {
    Index in, out, offset; // weights (out x in*k*k) then out biases
  };
  ResNetSpec spec_;
  std::vector<Layer> layers_; // head, 2 per block, tail
};

/// Complex stack <-> (2 x pixels) real/imag channels.
Activation to_channels(CxImage const &x);
CxImage from_channels(Activation const &a, Index rows, Index cols);

} // namespace smsrecon
