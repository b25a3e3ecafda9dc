#include "hybmat/stability.hpp"

#include <algorithm>
#include <cmath>

namespace hybmat {

namespace {

constexpr double kPi = 3.14159265358979323846;

double det_at(const Tangent& D, double angle) {
  return acoustic_tensor(D, {std::cos(angle), std::sin(angle)}).determinant();
}

// golden-section minimization of det Q(angle) on [lo, hi]
double golden_refine(const Tangent& D, double lo, double hi, double tol) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = det_at(D, c), fd = det_at(D, d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = det_at(D, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = det_at(D, d);
    }
  }
  return 0.5 * (a + b);
}

// theta predicted by the encoder for one flagged point's feature state
Eigen::VectorXd point_theta(const HybridSurrogate& s, const UnstablePoint& pt) {
  FeatureExtractor fx = pt.features;  // extract() is const but copy anyway
  return predict_theta(s, fx.extract(pt.eps));
}

double det_min_for_theta(const HybridSurrogate& s, const UnstablePoint& pt,
                         const Eigen::VectorXd& theta, bool refine) {
  const auto upd = decode(s, theta, pt.eps, pt.alpha);
  return acoustic_det_min(upd.D, refine).detQ;
}

}  // namespace

Eigen::Matrix2d acoustic_tensor(const Tangent& D, const Eigen::Vector2d& n) {
  // engineering-shear Voigt stiffness entries coincide with the tensor
  // moduli C_ijkl; indices 0=xx, 1=yy, 2=xy
  const double n1 = n[0], n2 = n[1];
  Eigen::Matrix2d Q;
  Q(0, 0) = n1 * n1 * D(0, 0) + n1 * n2 * (D(0, 2) + D(2, 0)) + n2 * n2 * D(2, 2);
  Q(0, 1) = n1 * n1 * D(0, 2) + n1 * n2 * (D(0, 1) + D(2, 2)) + n2 * n2 * D(2, 1);
  Q(1, 0) = n1 * n1 * D(2, 0) + n1 * n2 * (D(2, 2) + D(1, 0)) + n2 * n2 * D(1, 2);
  Q(1, 1) = n1 * n1 * D(2, 2) + n1 * n2 * (D(2, 1) + D(1, 2)) + n2 * n2 * D(1, 1);
  return Q;
}

AcousticProbe acoustic_det_min(const Tangent& D, bool refine) {
  const double step = kPi / 180.0;
  double best_angle = 0.0;
  double best_det = det_at(D, 0.0);
  for (int k = 1; k < 180; ++k) {
    const double a = k * step;
    const double d = det_at(D, a);
    if (d < best_det) {
      best_det = d;
      best_angle = a;
    }
  }
  if (refine) {
    const double tol = kPi / 180.0 * 0.01;
    best_angle = golden_refine(D, best_angle - step, best_angle + step, tol);
    if (best_angle < 0.0) best_angle += kPi;
    if (best_angle >= kPi) best_angle -= kPi;
  }

  AcousticProbe probe;
  probe.angle = best_angle;
  probe.n = {std::cos(best_angle), std::sin(best_angle)};
  probe.Q = acoustic_tensor(D, probe.n);
  probe.detQ = probe.Q.determinant();
  return probe;
}

double stability_loss(double detQ, double detQ0) {
  if (!(detQ0 > 0.0))
    throw NonpositiveReference("stability_loss: detQ0 must be positive");
  return detQ < 0.0 ? -detQ / detQ0 : 0.0;
}

double point_det_min(const HybridSurrogate& s, const UnstablePoint& pt,
                     bool refine) {
  return det_min_for_theta(s, pt, point_theta(s, pt), refine);
}

StabilizeResult stabilize_network(HybridSurrogate& s,
                                  const std::vector<UnstablePoint>& points,
                                  const PathDataset& ds,
                                  const std::vector<int>& train_idx,
                                  const std::vector<int>& val_idx,
                                  const StabilizeConfig& cfg,
                                  std::mt19937_64& rng) {
  StabilizeResult res;
  res.n_unstable = (int)points.size();
  if (points.empty()) return res;

  const auto neg_sum = [&]() {
    double sum = 0.0;
    for (const auto& pt : points)
      sum += std::max(0.0, -point_det_min(s, pt, cfg.refine));
    return sum;
  };
  res.neg_before = neg_sum();

  // Adam (fresh state, same optimizer family as training) keeps each weight
  // step bounded by the learning rate; raw determinant gradients can span
  // many orders of magnitude across points, and unbounded steps would let a
  // handful of strongly unstable points destroy the trained model.
  AdamState stab_state, retrain_state;

  const int n_th = theta_dim(s.decoder);
  for (int epoch = 0; epoch < cfg.stab_epochs; ++epoch) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(s.net.w.size());
    for (const auto& pt : points) {
      FeatureExtractor fx = pt.features;
      const Eigen::VectorXd phi = standardize(s.standardization, fx.extract(pt.eps));
      ForwardCache cache;
      const Eigen::VectorXd theta =
          forward(s.net, phi, ForwardMode::Eval, nullptr, &cache);
      const double detQ = det_min_for_theta(s, pt, theta, cfg.refine);
      if (detQ >= 0.0) continue;  // this point no longer contributes

      // d L_Q / d theta by central differences of the determinant minimum
      Eigen::VectorXd dL(n_th);
      for (int j = 0; j < n_th; ++j) {
        const double h = std::max(1e-6 * std::abs(theta[j]), 1e-9);
        Eigen::VectorXd th = theta;
        th[j] = theta[j] + h;
        const double up = det_min_for_theta(s, pt, th, cfg.refine);
        th[j] = theta[j] - h;
        const double dn = det_min_for_theta(s, pt, th, cfg.refine);
        dL[j] = -(up - dn) / (2.0 * h) / pt.detQ0;
      }
      grad += backward(s.net, cache, dL);
    }
    AdamConfig acfg;
    acfg.lr = cfg.stab_lr;
    adam_step(s.net, grad, stab_state, acfg);
    ++res.epochs;
  }

  // one small minibatch of the original loss to limit accuracy drift
  if (cfg.retrain_paths > 0 && !train_idx.empty()) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(s.net.w.size());
    std::uniform_int_distribution<std::size_t> pick(0, train_idx.size() - 1);
    for (int k = 0; k < cfg.retrain_paths; ++k)
      grad += path_gradient(s, ds.paths[train_idx[pick(rng)]]);
    AdamConfig acfg;
    acfg.lr = cfg.retrain_lr;
    adam_step(s.net, grad, retrain_state, acfg);
  }

  res.neg_after = neg_sum();
  if (!val_idx.empty()) res.val_loss_after = dataset_loss(s, ds, val_idx);
  return res;
}

}  // namespace hybmat
