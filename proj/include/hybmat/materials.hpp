// Constitutive decoders behind one uniform update contract, plus the
// reference material used as ground-truth data generator.
//
// All updates are pure functions over immutable inputs: calling twice with
// the same (eps, alpha_prev, theta) never mutates alpha_prev and produces
// identical outputs. Internals work on the full 3D tensor in Voigt6 form;
// the planar regimes are handled by a shared driver (plane stress enforces
// sig_zz = 0 by a nested Newton loop on eps_zz).

#ifndef HYBMAT_MATERIALS_HPP
#define HYBMAT_MATERIALS_HPP

#include <functional>
#include <stdexcept>

#include "hybmat/tensors.hpp"

namespace hybmat {

/// Raised when the scalar Newton loop of a return map (or the nested
/// plane-stress loop) exceeds its iteration cap. Signals pathological
/// parameters; callers may substep.
struct ReturnMapDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Decoder-owned history: plastic strain (Voigt6, engineering shear) and
/// the accumulated plastic multiplier (used by the hardening reference
/// material only).
struct InternalState {
  Voigt6 eps_p = Voigt6::Zero();
  double kappa = 0.0;
};

struct ElasticParams {
  double E;
  double nu;
};

/// Perfectly-plastic von Mises decoder parameters. E, nu are fixed
/// elastic constants, sigma_y is the (possibly evolving) yield stress.
struct J2Params {
  double sigma_y;
  double E;
  double nu;
};

/// Pressure-dependent non-associative decoder parameters. sigma_c is
/// parameterized through the ratio sigma_c/sigma_t so that sigma_c >
/// sigma_t can be enforced through bounds.
struct MelroParams {
  double sigma_t;
  double ratio_ct;  // sigma_c / sigma_t, > 1
  double nu_p;
  double E;
  double nu;
};

/// Saturating exponential: sig(kappa) = sig0 + (sig_inf - sig0)(1 - exp(-kappa/kappa0)).
struct SaturatingHardening {
  double sig0;
  double sig_inf;
  double kappa0;
  double at(double kappa) const;
};

/// Pressure-dependent hardening material used as ground-truth generator.
struct ReferenceMaterial {
  SaturatingHardening tension{60.0, 90.0, 0.01};
  SaturatingHardening compression{90.0, 135.0, 0.01};
  double nu_p = 0.3;
  double E = 3760.0;
  double nu = 0.3;
};

struct UpdateResult {
  StressState sig;
  Tangent D = Tangent::Zero();
  InternalState alpha;
  double eps_zz = 0.0;  // out-of-plane strain (solved for plane stress)
};

/// Full 3D isotropic stiffness in Voigt6 form (columns act on engineering
/// shear strain).
Matrix6 elastic_stiffness_3d(double E, double nu);

UpdateResult elastic_update(const StrainState& eps, const ElasticParams& p);
UpdateResult j2_update(const StrainState& eps, const InternalState& alpha_prev,
                       const J2Params& p);
UpdateResult melro_update(const StrainState& eps, const InternalState& alpha_prev,
                          const MelroParams& p);
UpdateResult reference_update(const StrainState& eps, const InternalState& alpha_prev,
                              const ReferenceMaterial& m);

/// Central finite differences of sig w.r.t. the planar strain components,
/// verification oracle for the analytic consistent tangents.
Tangent numerical_tangent(
    const std::function<UpdateResult(const StrainState&)>& update,
    const StrainState& eps);

}  // namespace hybmat

#endif
