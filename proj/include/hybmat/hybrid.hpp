// The trainable surrogate: feature extractor + FNN encoder + constitutive
// decoder, with loss, backpropagation through the decoder and through
// time, the training loop, and checkpoint persistence.

#ifndef HYBMAT_HYBRID_HPP
#define HYBMAT_HYBRID_HPP

#include <optional>
#include <string>
#include <vector>

#include "hybmat/encoder.hpp"
#include "hybmat/features.hpp"
#include "hybmat/materials.hpp"
#include "hybmat/paths.hpp"

namespace hybmat {

struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptySelection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DecoderKind { Elastic, J2, Melro };

std::string to_string(DecoderKind kind);
DecoderKind decoder_kind_from_string(const std::string& name);

/// Number of learned parameters emitted by the encoder for each decoder:
/// Elastic (E, nu), J2 (sigma_y), Melro (sigma_t, sigma_c/sigma_t, nu_p).
int theta_dim(DecoderKind kind);

/// Default admissible parameter boxes.
Bounds default_bounds(DecoderKind kind);

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd stdev;
};

struct HybridSurrogate {
  FeatureKind feature_kind = FeatureKind::Inv_I1I2;
  DecoderKind decoder = DecoderKind::Elastic;
  Network net;
  Standardization standardization;
  // fixed elastic constants for the plasticity decoders, and the
  // precalibrated model backing stateful extractors
  double fixed_E = ReferenceMaterial{}.E;
  double fixed_nu = ReferenceMaterial{}.nu;
  ReferenceMaterial precal;

  FeatureExtractor make_extractor() const {
    return FeatureExtractor(feature_kind, precal);
  }
};

/// Single decoder evaluation with an explicit parameter vector.
UpdateResult decode(const HybridSurrogate& s, const Eigen::VectorXd& theta,
                    const StrainState& eps, const InternalState& alpha_prev);

/// Elastic stiffness of the decoder (planar), used by unloading checks.
Tangent decoder_elastic_tangent(const HybridSurrogate& s, Regime regime);

Eigen::VectorXd standardize(const Standardization& st, const Eigen::VectorXd& phi);

/// theta for the features of a single strain state (Eval mode).
Eigen::VectorXd predict_theta(const HybridSurrogate& s,
                              const Eigen::VectorXd& phi_raw);

/// Full-path sweep in Eval mode; alpha starts at zero, stateful extractors
/// commit between steps.
std::vector<StressState> predict_path(const HybridSurrogate& s,
                                      const StrainPath& path);

/// L = 1/2 sum_n ||sig_n - sig_hat_n||^2 over all steps (Voigt 3-norm).
double loss(const std::vector<StressState>& pred, const StrainPath& target);
double dataset_loss(const HybridSurrogate& s, const PathDataset& ds,
                    const std::vector<int>& idx);

/// Exact gradient of the single-path loss over the network weights:
/// decoder partials by central finite differences, reverse (linear-time)
/// accumulation of the internal-state chain, encoder chain by
/// backpropagation. Train mode draws dropout masks from `rng`.
Eigen::VectorXd path_gradient(const HybridSurrogate& s, const StrainPath& path,
                              ForwardMode mode = ForwardMode::Eval,
                              std::mt19937_64* rng = nullptr,
                              double* loss_out = nullptr);

struct TrainConfig {
  int epochs = 20000;
  int batch_paths = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {50, 50, 50, 50, 50};
  double dropout = 0.01;
  bool verbose = false;
  int log_every = 0;  // 0: silent
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_loss;
};

struct TrainingReport {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double noise_precision_beta = 0.0;  // N / (2 L) at the best model
};

/// Mutable training bookkeeping persisted in checkpoints for exact resume.
struct TrainState {
  AdamState adam;
  std::string rng_state;  // serialized mt19937_64
  int next_epoch = 0;
  Eigen::VectorXd current_w;
  Eigen::VectorXd best_w;
  TrainingReport report;
};

/// Minibatch training over whole paths; keeps the historically best
/// validation weights. Deterministic under a fixed seed; pass a TrainState
/// to resume a run or persist it for later resumption.
TrainingReport train(HybridSurrogate& s, const PathDataset& ds,
                     const std::vector<int>& train_idx,
                     const std::vector<int>& val_idx, const TrainConfig& cfg,
                     TrainState* state = nullptr);

/// Builds a surrogate (bounds, standardization from the training set,
/// LeCun init) ready for train().
HybridSurrogate make_surrogate(DecoderKind decoder, FeatureKind features,
                               const PathDataset& ds,
                               const std::vector<int>& train_idx,
                               const TrainConfig& cfg);

enum class StepMask { AllSteps, NonMonotonicStepsOnly };

/// Mean over selected steps of ||sig - sig_hat||; the non-monotonic mask
/// selects steps whose strain norm decreases or that follow a reversal
/// while below the running peak.
double evaluate(const HybridSurrogate& s, const PathDataset& ds,
                const std::vector<int>& idx, StepMask mask);

std::vector<bool> nonmonotonic_mask(const StrainPath& path);

void save_checkpoint(const HybridSurrogate& s, const TrainingReport& report,
                     const std::string& path, const TrainState* state = nullptr,
                     std::uint64_t seed = 0);
HybridSurrogate load_checkpoint(const std::string& path,
                                TrainingReport* report = nullptr,
                                TrainState* state = nullptr,
                                std::uint64_t* seed = nullptr);

void save_report_csv(const TrainingReport& report, const std::string& path,
                     const std::string& header_comment = "");

}  // namespace hybmat

#endif
