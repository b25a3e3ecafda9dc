// Fully connected encoder mapping features to bounded material parameters.
//
// Hidden layers use SELU activation with optional Bernoulli dropout
// (inverted scaling, so Eval mode needs no rescaling). The output layer
// applies a logistic sigmoid per component and scales into [low, upp]
// bounds, so parameters are strictly inside their box for any weights.

#ifndef HYBMAT_ENCODER_HPP
#define HYBMAT_ENCODER_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace hybmat {

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// canonical self-normalizing constants
constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

struct Bounds {
  Eigen::VectorXd low;
  Eigen::VectorXd upp;
};

struct Network {
  std::vector<int> layer_sizes;  // input, hidden..., output
  Eigen::VectorXd w;             // flat: per layer W (row-major out x in), then b
  double dropout_rate = 0.01;
  Bounds bounds;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  static long param_count(const std::vector<int>& sizes);
};

enum class ForwardMode { Train, Eval };

struct ForwardCache {
  std::vector<Eigen::VectorXd> inputs;   // activation entering each layer
  std::vector<Eigen::VectorXd> preact;   // z of each layer
  std::vector<Eigen::VectorXd> dropout;  // post-activation scaling masks
  Eigen::VectorXd sigmoid;               // output-layer sigmoid values
};

/// LeCun-normal initialization (std = 1/sqrt(fan_in)), zero biases.
Network init_weights(const std::vector<int>& layer_sizes, const Bounds& bounds,
                     double dropout_rate, std::uint64_t seed);

/// Maps features to parameters; Train mode draws dropout masks from `rng`.
Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& phi,
                        ForwardMode mode, std::mt19937_64* rng = nullptr,
                        ForwardCache* cache = nullptr);

/// Gradient of dL_dtheta . theta(w) over the flat weight vector, using the
/// cache of the matching forward call (dropout masks included).
Eigen::VectorXd backward(const Network& net, const ForwardCache& cache,
                         const Eigen::VectorXd& dL_dtheta);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Network& net, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& cfg = {});

/// Plain gradient-descent step (used by the online stabilization loop).
void sgd_step(Network& net, const Eigen::VectorXd& grad, double lr);

}  // namespace hybmat

#endif
