// Feature extractors mapping the macroscopic strain (and optionally its
// history through a precalibrated material model) to the encoder input.
//
// Extractors emit raw physical values; standardization happens in the
// training layer. Stateful kinds (HistMax, Precal) advance their state
// only through commit(), called once per converged time step; extract()
// never mutates state.

#ifndef HYBMAT_FEATURES_HPP
#define HYBMAT_FEATURES_HPP

#include <string>

#include "hybmat/materials.hpp"
#include "hybmat/tensors.hpp"

namespace hybmat {

enum class FeatureKind {
  RawStrain,
  Inv_I1,
  Inv_I1I2,
  Inv_J2,
  Inv_I1J2,
  HistMax_I1I2,
  Precal_PlasticStrain,
  Precal_StressInv,
};

struct UnknownKind : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stable string names used in config files and checkpoints.
std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

int feature_dim(FeatureKind kind);
bool is_stateful(FeatureKind kind);

class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureKind kind,
                            ReferenceMaterial precal = ReferenceMaterial{});

  FeatureKind kind() const { return kind_; }
  int dim() const { return feature_dim(kind_); }

  Eigen::VectorXd extract(const StrainState& eps) const;
  void commit(const StrainState& eps);
  void reset();

  const InternalState& precal_state() const { return precal_alpha_; }

 private:
  FeatureKind kind_;
  ReferenceMaterial precal_model_;
  InternalState precal_alpha_;
  // running maximum of (I1)^2 + J2 and the invariants at which it occurred
  double hist_max_ = -1.0;
  double frozen_i1_ = 0.0;
  double frozen_i2_ = 0.0;
};

}  // namespace hybmat

#endif
