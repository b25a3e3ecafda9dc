#include "hybmat/encoder.hpp"

#include <cmath>

namespace hybmat {

namespace {

double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
}

double selu_deriv(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

// weight layout: for each layer l, W_l (out x in, row-major) followed by b_l
struct LayerView {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>> W;
  Eigen::Map<const Eigen::VectorXd> b;
};

long layer_offset(const std::vector<int>& sizes, int layer) {
  long off = 0;
  for (int l = 0; l < layer; ++l)
    off = off + (long)sizes[l] * sizes[l + 1] + sizes[l + 1];
  return off;
}

LayerView view_layer(const Network& net, int layer) {
  const int nin = net.layer_sizes[layer];
  const int nout = net.layer_sizes[layer + 1];
  const long off = layer_offset(net.layer_sizes, layer);
  return {{net.w.data() + off, nout, nin}, {net.w.data() + off + (long)nin * nout, nout}};
}

}  // namespace

long Network::param_count(const std::vector<int>& sizes) {
  long n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += (long)sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

Network init_weights(const std::vector<int>& layer_sizes, const Bounds& bounds,
                     double dropout_rate, std::uint64_t seed) {
  Network net;
  net.layer_sizes = layer_sizes;
  net.dropout_rate = dropout_rate;
  net.bounds = bounds;
  net.w = Eigen::VectorXd::Zero(Network::param_count(layer_sizes));

  std::mt19937_64 rng(seed);
  long off = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int nin = layer_sizes[l];
    const int nout = layer_sizes[l + 1];
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt((double)nin));
    for (long i = 0; i < (long)nin * nout; ++i) net.w[off + i] = dist(rng);
    off += (long)nin * nout + nout;  // biases stay zero
  }
  return net;
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& phi,
                        ForwardMode mode, std::mt19937_64* rng,
                        ForwardCache* cache) {
  if (phi.size() != net.input_dim())
    throw DimensionMismatch("forward: feature dimension mismatch");

  const int n_layers = (int)net.layer_sizes.size() - 1;
  if (cache) {
    cache->inputs.assign(n_layers, {});
    cache->preact.assign(n_layers, {});
    cache->dropout.assign(n_layers, {});
  }

  Eigen::VectorXd x = phi;
  for (int l = 0; l < n_layers; ++l) {
    const auto lv = view_layer(net, l);
    if (cache) cache->inputs[l] = x;
    Eigen::VectorXd z = lv.W * x + lv.b;
    if (cache) cache->preact[l] = z;

    if (l + 1 == n_layers) {
      // output layer: sigmoid scaled into the parameter bounds
      Eigen::VectorXd s(z.size());
      for (int i = 0; i < z.size(); ++i) s[i] = 1.0 / (1.0 + std::exp(-z[i]));
      if (cache) cache->sigmoid = s;
      return net.bounds.low.array() +
             s.array() * (net.bounds.upp - net.bounds.low).array();
    }

    Eigen::VectorXd a(z.size());
    for (int i = 0; i < z.size(); ++i) a[i] = selu(z[i]);

    Eigen::VectorXd mask = Eigen::VectorXd::Ones(a.size());
    if (mode == ForwardMode::Train && net.dropout_rate > 0.0) {
      if (!rng)
        throw std::invalid_argument("forward: Train mode requires an rng");
      std::bernoulli_distribution keep(1.0 - net.dropout_rate);
      const double scale = 1.0 / (1.0 - net.dropout_rate);
      for (int i = 0; i < mask.size(); ++i) mask[i] = keep(*rng) ? scale : 0.0;
      a.array() *= mask.array();
    }
    if (cache) cache->dropout[l] = mask;
    x = std::move(a);
  }
  throw std::logic_error("forward: network has no layers");
}

Eigen::VectorXd backward(const Network& net, const ForwardCache& cache,
                         const Eigen::VectorXd& dL_dtheta) {
  const int n_layers = (int)net.layer_sizes.size() - 1;
  if ((int)cache.inputs.size() != n_layers || cache.sigmoid.size() == 0)
    throw std::runtime_error("backward: stale or missing forward cache");
  if (dL_dtheta.size() != net.output_dim())
    throw DimensionMismatch("backward: output dimension mismatch");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.w.size());

  // output layer: theta = low + s (upp - low), dtheta/dz = (upp - low) s (1 - s)
  Eigen::VectorXd delta =
      dL_dtheta.array() * (net.bounds.upp - net.bounds.low).array() *
      cache.sigmoid.array() * (1.0 - cache.sigmoid.array());

  for (int l = n_layers - 1; l >= 0; --l) {
    const int nin = net.layer_sizes[l];
    const int nout = net.layer_sizes[l + 1];
    const long off = layer_offset(net.layer_sizes, l);
    const auto lv = view_layer(net, l);

    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>
        gW(grad.data() + off, nout, nin);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + (long)nin * nout, nout);

    gW += delta * cache.inputs[l].transpose();
    gb += delta;

    if (l > 0) {
      Eigen::VectorXd dx = lv.W.transpose() * delta;
      // through the previous layer's dropout mask and SELU
      dx.array() *= cache.dropout[l - 1].array();
      const Eigen::VectorXd& z = cache.preact[l - 1];
      for (int i = 0; i < dx.size(); ++i) dx[i] *= selu_deriv(z[i]);
      delta = std::move(dx);
    }
  }
  return grad;
}

void adam_step(Network& net, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& cfg) {
  if (state.m.size() != net.w.size()) {
    state.m = Eigen::VectorXd::Zero(net.w.size());
    state.v = Eigen::VectorXd::Zero(net.w.size());
    state.t = 0;
  }
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v =
      cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)state.t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)state.t);
  const Eigen::ArrayXd mhat = state.m.array() / bc1;
  const Eigen::ArrayXd vhat = state.v.array() / bc2;
  net.w.array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
}

void sgd_step(Network& net, const Eigen::VectorXd& grad, double lr) {
  net.w -= lr * grad;
}

}  // namespace hybmat
