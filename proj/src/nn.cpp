#include "tahcd/nn.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tahcd/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tahcd {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.data.size() + l.bias.size();
  return n;
}

Mlp make_mlp(const std::vector<int>& dims, Activation output_act, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("make_mlp: need at least input and output dims");
  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    int fan_in = dims[i], fan_out = dims[i + 1];
    l.weight = Matrix(fan_out, fan_in);
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : l.weight.data) w = rng.uniform(-bound, bound);
    l.bias.assign(static_cast<std::size_t>(fan_out), 0.0);
    l.act = (i + 2 == dims.size()) ? output_act : Activation::Relu;
    net.layers.push_back(std::move(l));
  }
  return net;
}

static void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::Relu:
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Sigmoid:
      for (double& v : z.data) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::Linear:
      break;
  }
}

Matrix forward(const Mlp& net, const Matrix& x, Tape* tape) {
  if (x.cols != net.in_dim())
    throw NumericError("forward: input has " + std::to_string(x.cols) + " features, net expects " +
                       std::to_string(net.in_dim()));
  if (tape) {
    tape->acts.clear();
    tape->acts.push_back(x);
  }
  Matrix a = x;
  for (const Layer& l : net.layers) {
    Matrix z = matmul_nt(a, l.weight);
    for (int i = 0; i < z.rows; ++i)
      for (int j = 0; j < z.cols; ++j) z(i, j) += l.bias[std::size_t(j)];
    apply_activation(z, l.act);
    a = std::move(z);
    if (tape) tape->acts.push_back(a);
  }
  return a;
}

Gradients make_zero_gradients(const Mlp& net) {
  Gradients g;
  for (const Layer& l : net.layers) {
    g.dweight.emplace_back(l.weight.rows, l.weight.cols);
    g.dbias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  for (std::size_t i = 0; i < into.dweight.size(); ++i) {
    add_inplace(into.dweight[i], g.dweight[i]);
    for (std::size_t j = 0; j < into.dbias[i].size(); ++j) into.dbias[i][j] += g.dbias[i][j];
  }
}

// dZ = dA * act'(a), expressed through the stored activation value.
static void activation_backward(Matrix& da, const Matrix& a, Activation act) {
  switch (act) {
    case Activation::Relu:
      for (std::size_t i = 0; i < da.data.size(); ++i)
        if (a.data[i] <= 0.0) da.data[i] = 0.0;
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < da.data.size(); ++i)
        da.data[i] *= a.data[i] * (1.0 - a.data[i]);
      break;
    case Activation::Linear:
      break;
  }
}

Gradients backward(const Mlp& net, const Tape& tape, const Matrix& dy) {
  if (tape.acts.size() != net.layers.size() + 1)
    throw NumericError("backward: tape does not match network depth");
  Gradients g;
  g.dweight.resize(net.layers.size());
  g.dbias.resize(net.layers.size());

  Matrix da = dy;
  for (int li = int(net.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = net.layers[std::size_t(li)];
    const Matrix& a_out = tape.acts[std::size_t(li) + 1];
    const Matrix& a_in = tape.acts[std::size_t(li)];
    activation_backward(da, a_out, l.act);  // now da holds dZ
    g.dweight[std::size_t(li)] = matmul_tn(da, a_in);
    g.dbias[std::size_t(li)] = col_sums(da);
    if (li > 0) da = matmul(da, l.weight);
    else g.dinput = matmul(da, l.weight);
  }
  return g;
}

Gradients backward_weighted(const Mlp& net, const Tape& tape, const Matrix& dy,
                            std::span<const double> scale) {
  if (int(scale.size()) != dy.rows)
    throw NumericError("backward_weighted: scale length != batch size");
  // Backprop is linear in each sample's output gradient, so scaling the rows
  // of dy scales that sample's contribution to every parameter gradient.
  Matrix scaled = scale_rows(dy, scale);
  return backward(net, tape, scaled);
}

AdamState AdamState::init(const Mlp& net, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  s.lr = cfg.lr;
  for (const Layer& l : net.layers) {
    s.m_w.emplace_back(l.weight.rows, l.weight.cols);
    s.v_w.emplace_back(l.weight.rows, l.weight.cols);
    s.m_b.emplace_back(l.bias.size(), 0.0);
    s.v_b.emplace_back(l.bias.size(), 0.0);
  }
  return s;
}

void AdamState::set_epoch(int epoch) {
  int drops = cfg.decay_every > 0 ? epoch / cfg.decay_every : 0;
  lr = cfg.lr * std::pow(cfg.decay_factor, drops);
}

static void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                        std::span<double> v, const AdamConfig& cfg, double lr, long t) {
  double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    double grad = g[i] + cfg.weight_decay * p[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void adam_step(AdamState& state, Mlp& net, const Gradients& g) {
  if (g.dweight.size() != net.layers.size())
    throw NumericError("adam_step: gradient does not match network depth");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!all_finite(g.dweight[i]) || !all_finite(g.dbias[i]))
      throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(i));
  }
  ++state.step;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    adam_update(net.layers[i].weight.data, g.dweight[i].data, state.m_w[i].data,
                state.v_w[i].data, state.cfg, state.lr, state.step);
    adam_update(net.layers[i].bias, g.dbias[i], state.m_b[i], state.v_b[i], state.cfg, state.lr,
                state.step);
  }
}

// ---- checkpoint io ----------------------------------------------------

void save_networks(const std::string& path,
                   const std::vector<std::pair<std::string, const Mlp*>>& nets,
                   const std::string& note) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");

  std::ostringstream header;
  header << "tahcd-nets v1 " << nets.size();
  for (const auto& [name, net] : nets) {
    if (name.find(' ') != std::string::npos || name.find('#') != std::string::npos)
      throw ConfigError("network name '" + name + "' contains reserved characters");
    header << ' ' << name << ' ' << net->layers.size();
    for (const Layer& l : net->layers)
      header << ' ' << l.weight.rows << 'x' << l.weight.cols << ':' << activation_name(l.act);
  }
  if (!note.empty()) {
    if (note.find('\n') != std::string::npos)
      throw ConfigError("checkpoint note must be a single line");
    header << " # " << note;
  }
  header << '\n';
  out << header.str();

  for (const auto& [name, net] : nets) {
    (void)name;
    for (const Layer& l : net->layers) {
      out.write(reinterpret_cast<const char*>(l.weight.data.data()),
                std::streamsize(l.weight.data.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(l.bias.data()),
                std::streamsize(l.bias.size() * sizeof(double)));
    }
  }
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

LoadedNetworks load_networks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("checkpoint '" + path + "' is empty");

  std::string body = header;
  LoadedNetworks loaded;
  if (auto hash = header.find(" # "); hash != std::string::npos) {
    loaded.note = header.substr(hash + 3);
    body = header.substr(0, hash);
  }

  std::istringstream hs(body);
  std::string magic, version;
  std::size_t count = 0;
  hs >> magic >> version >> count;
  if (magic != "tahcd-nets" || version != "v1")
    throw ConfigError("'" + path + "' is not a tahcd checkpoint (bad header)");

  for (std::size_t ni = 0; ni < count; ++ni) {
    std::string name;
    std::size_t nlayers = 0;
    if (!(hs >> name >> nlayers))
      throw ConfigError("checkpoint '" + path + "': truncated header");
    Mlp net;
    for (std::size_t li = 0; li < nlayers; ++li) {
      std::string shape;
      if (!(hs >> shape)) throw ConfigError("checkpoint '" + path + "': truncated header");
      int r = 0, c = 0;
      char xch = 0, colon = 0;
      std::istringstream ss(shape);
      std::string act;
      if (!(ss >> r >> xch >> c >> colon) || xch != 'x' || colon != ':' || !std::getline(ss, act))
        throw ConfigError("checkpoint '" + path + "': bad layer descriptor '" + shape + "'");
      Layer l;
      l.weight = Matrix(r, c);
      l.bias.assign(static_cast<std::size_t>(r), 0.0);
      l.act = activation_from_name(act);
      net.layers.push_back(std::move(l));
    }
    loaded.nets.emplace_back(std::move(name), std::move(net));
  }

  for (auto& [name, net] : loaded.nets) {
    for (Layer& l : net.layers) {
      in.read(reinterpret_cast<char*>(l.weight.data.data()),
              std::streamsize(l.weight.data.size() * sizeof(double)));
      in.read(reinterpret_cast<char*>(l.bias.data()),
              std::streamsize(l.bias.size() * sizeof(double)));
      if (!in)
        throw ConfigError("checkpoint '" + path + "': truncated payload in network '" + name +
                          "'");
    }
  }
  char extra = 0;
  if (in.read(&extra, 1))
    throw ConfigError("checkpoint '" + path + "': trailing bytes after payload");
  return loaded;
}

const Mlp& LoadedNetworks::get(const std::string& name) const {
  for (const auto& [n, net] : nets)
    if (n == name) return net;
  throw ConfigError("checkpoint has no network named '" + name + "'");
}

}  // namespace tahcd
