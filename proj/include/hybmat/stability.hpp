// Acoustic-tensor localization analysis and the online stabilization
// procedure that nudges the encoder away from unstable tangents.

#ifndef HYBMAT_STABILITY_HPP
#define HYBMAT_STABILITY_HPP

#include <random>
#include <vector>

#include "hybmat/hybrid.hpp"

namespace hybmat {

struct NonpositiveReference : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AcousticProbe {
  double angle = 0.0;              // radians in [0, pi)
  Eigen::Vector2d n{1.0, 0.0};     // unit direction
  Eigen::Matrix2d Q = Eigen::Matrix2d::Zero();  // MPa
  double detQ = 0.0;
};

/// Acoustic tensor Q_ik = n_j D_ijkl n_l assembled from the planar Voigt
/// tangent (engineering-shear convention).
Eigen::Matrix2d acoustic_tensor(const Tangent& D, const Eigen::Vector2d& n);

/// Minimum of det Q(n) over directions: 1-degree sweep over [0, pi), first
/// minimizer on ties, optional golden-section refinement to 0.01 degree.
AcousticProbe acoustic_det_min(const Tangent& D, bool refine = true);

/// L_Q = -<detQ>_- / detQ0 (negative-part penalty, zero when stable).
double stability_loss(double detQ, double detQ0);

/// A Gauss point flagged unstable at the first global iteration of a step:
/// converged strain, committed history, feature state, and the point's
/// elastic reference determinant.
struct UnstablePoint {
  StrainState eps;
  InternalState alpha;
  FeatureExtractor features;
  double detQ0 = 1.0;
};

struct StabilizeConfig {
  int stab_epochs = 5;
  double stab_lr = 1e-5;
  int retrain_paths = 1;
  double retrain_lr = 1e-9;
  bool refine = true;
};

struct StabilizeResult {
  int n_unstable = 0;
  double neg_before = 0.0;  // sum of |<detQ>_-| over the flagged points
  double neg_after = 0.0;
  int epochs = 0;
  double val_loss_after = 0.0;
};

/// det Q minimum for one flagged point under the current encoder weights.
double point_det_min(const HybridSurrogate& s, const UnstablePoint& pt,
                     bool refine = true);

/// A few SGD epochs on the summed stability loss of the flagged points
/// (gradient of detQ w.r.t. theta by central finite differences, chained
/// through the encoder), followed by one small retraining minibatch of the
/// original loss. Mutates the surrogate's network; soft constraint — never
/// fails on residual instability.
StabilizeResult stabilize_network(HybridSurrogate& s,
                                  const std::vector<UnstablePoint>& points,
                                  const PathDataset& ds,
                                  const std::vector<int>& train_idx,
                                  const std::vector<int>& val_idx,
                                  const StabilizeConfig& cfg,
                                  std::mt19937_64& rng);

}  // namespace hybmat

#endif
