#include "hybmat/features.hpp"

namespace hybmat {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::RawStrain: return "RawStrain";
    case FeatureKind::Inv_I1: return "Inv_I1";
    case FeatureKind::Inv_I1I2: return "Inv_I1I2";
    case FeatureKind::Inv_J2: return "Inv_J2";
    case FeatureKind::Inv_I1J2: return "Inv_I1J2";
    case FeatureKind::HistMax_I1I2: return "HistMax_I1I2";
    case FeatureKind::Precal_PlasticStrain: return "Precal_PlasticStrain";
    case FeatureKind::Precal_StressInv: return "Precal_StressInv";
  }
  throw UnknownKind("invalid feature kind");
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "RawStrain") return FeatureKind::RawStrain;
  if (name == "Inv_I1") return FeatureKind::Inv_I1;
  if (name == "Inv_I1I2") return FeatureKind::Inv_I1I2;
  if (name == "Inv_J2") return FeatureKind::Inv_J2;
  if (name == "Inv_I1J2") return FeatureKind::Inv_I1J2;
  if (name == "HistMax_I1I2") return FeatureKind::HistMax_I1I2;
  if (name == "Precal_PlasticStrain") return FeatureKind::Precal_PlasticStrain;
  if (name == "Precal_StressInv") return FeatureKind::Precal_StressInv;
  throw UnknownKind("unknown feature kind: " + name);
}

int feature_dim(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::RawStrain: return 3;
    case FeatureKind::Inv_I1: return 1;
    case FeatureKind::Inv_I1I2: return 2;
    case FeatureKind::Inv_J2: return 1;
    case FeatureKind::Inv_I1J2: return 2;
    case FeatureKind::HistMax_I1I2: return 2;
    case FeatureKind::Precal_PlasticStrain: return 3;
    case FeatureKind::Precal_StressInv: return 2;
  }
  throw UnknownKind("invalid feature kind");
}

bool is_stateful(FeatureKind kind) {
  return kind == FeatureKind::HistMax_I1I2 ||
         kind == FeatureKind::Precal_PlasticStrain ||
         kind == FeatureKind::Precal_StressInv;
}

FeatureExtractor::FeatureExtractor(FeatureKind kind, ReferenceMaterial precal)
    : kind_(kind), precal_model_(precal) {
  reset();
}

void FeatureExtractor::reset() {
  precal_alpha_ = InternalState{};
  hist_max_ = 0.0;
  frozen_i1_ = 0.0;
  frozen_i2_ = 0.0;
}

Eigen::VectorXd FeatureExtractor::extract(const StrainState& eps) const {
  Eigen::VectorXd phi(dim());
  const auto inv = strain_invariants(eps);
  switch (kind_) {
    case FeatureKind::RawStrain:
      phi << eps.eps[0], eps.eps[1], eps.eps[2];
      return phi;
    case FeatureKind::Inv_I1:
      phi << inv.I1;
      return phi;
    case FeatureKind::Inv_I1I2:
      phi << inv.I1, inv.I2;
      return phi;
    case FeatureKind::Inv_J2:
      phi << inv.J2;
      return phi;
    case FeatureKind::Inv_I1J2:
      phi << inv.I1, inv.J2;
      return phi;
    case FeatureKind::HistMax_I1I2: {
      const double m = inv.I1 * inv.I1 + inv.J2;
      if (m >= hist_max_) {
        phi << inv.I1, inv.I2;
      } else {
        phi << frozen_i1_, frozen_i2_;
      }
      return phi;
    }
    case FeatureKind::Precal_PlasticStrain: {
      const auto upd = reference_update(eps, precal_alpha_, precal_model_);
      phi << upd.alpha.eps_p[0], upd.alpha.eps_p[1], upd.alpha.eps_p[3];
      return phi;
    }
    case FeatureKind::Precal_StressInv: {
      const auto upd = reference_update(eps, precal_alpha_, precal_model_);
      const auto sinv = stress_invariants(upd.sig);
      phi << sinv.I1, sinv.J2;
      return phi;
    }
  }
  throw UnknownKind("invalid feature kind");
}

void FeatureExtractor::commit(const StrainState& eps) {
  switch (kind_) {
    case FeatureKind::HistMax_I1I2: {
      const auto inv = strain_invariants(eps);
      const double m = inv.I1 * inv.I1 + inv.J2;
      if (m >= hist_max_) {
        hist_max_ = m;
        frozen_i1_ = inv.I1;
        frozen_i2_ = inv.I2;
      }
      return;
    }
    case FeatureKind::Precal_PlasticStrain:
    case FeatureKind::Precal_StressInv: {
      const auto upd = reference_update(eps, precal_alpha_, precal_model_);
      precal_alpha_ = upd.alpha;
      return;
    }
    default:
      return;  // stateless kinds
  }
}

}  // namespace hybmat
