#pragma once

#include <string>
#include <vector>

#include "tahcd/matrix.hpp"
#include "tahcd/rng.hpp"

namespace tahcd {

enum class Activation { Relu, Sigmoid, Linear };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Matrix weight;  // out x in
  Vec bias;       // out
  Activation act = Activation::Linear;
};

// Small fully connected net. All hidden layers are ReLU; the output layer's
// activation depends on the role (sigmoid for masks/experts, linear for
// encoders, decoders and the classifier).
struct Mlp {
  std::vector<Layer> layers;

  int in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  int out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }
  std::size_t param_count() const;
};

// Glorot-uniform weights, zero biases. dims = {in, hidden..., out}.
Mlp make_mlp(const std::vector<int>& dims, Activation output_act, Rng& rng);

// Activations recorded during forward; acts[0] is the input, acts.back() the
// output. Needed by backward().
struct Tape {
  std::vector<Matrix> acts;
};

// Batch forward: x is (batch x in_dim). Pass a tape to enable backward.
Matrix forward(const Mlp& net, const Matrix& x, Tape* tape = nullptr);

struct Gradients {
  std::vector<Matrix> dweight;
  std::vector<Vec> dbias;
  Matrix dinput;
};

Gradients make_zero_gradients(const Mlp& net);
void accumulate(Gradients& into, const Gradients& g);

// dy is dLoss/dOutput for the tape's batch (same shape as the output).
Gradients backward(const Mlp& net, const Tape& tape, const Matrix& dy);

// Like backward(), but each sample's contribution to the parameter gradient
// is multiplied by scale[i] first. With the batch-mean convention baked into
// dy, scale = all-ones reproduces backward() exactly.
Gradients backward_weighted(const Mlp& net, const Tape& tape, const Matrix& dy,
                            std::span<const double> scale);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;   // L2 term added to the gradient before the moment updates
  double decay_factor = 0.2;    // multiplicative LR decay...
  int decay_every = 50;         // ...applied once per this many epochs
};

struct AdamState {
  AdamConfig cfg;
  double lr = 0.0;  // current LR after scheduled decays
  long step = 0;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vec> m_b, v_b;

  static AdamState init(const Mlp& net, const AdamConfig& cfg);
  // Sets lr for the given 0-based epoch: cfg.lr * decay_factor^(epoch / decay_every).
  void set_epoch(int epoch);
};

// One Adam update. Throws NumericError if any gradient entry is non-finite.
void adam_step(AdamState& state, Mlp& net, const Gradients& g);

// Writes named networks to a single binary file: one plain-text header line
// describing every layer's shape and activation, then raw little-endian
// 64-bit floats (weights row-major, then bias, per layer, per network).
void save_networks(const std::string& path,
                   const std::vector<std::pair<std::string, const Mlp*>>& nets,
                   const std::string& note = "");

struct LoadedNetworks {
  std::vector<std::pair<std::string, Mlp>> nets;
  std::string note;

  const Mlp& get(const std::string& name) const;
};

LoadedNetworks load_networks(const std::string& path);

}  // namespace tahcd
