// Small-strain tensor algebra in Voigt notation for 2D problems.
//
// Conventions used throughout:
//  - strain Voigt vectors store engineering shear (gamma = 2*eps_xy)
//  - stress Voigt vectors store the tensor shear component (tau_xy)
//  - invariants are always computed on the full 3D tensor reconstructed
//    from the planar state, including the out-of-plane component, so that
//    plane-strain and plane-stress states live in the same feature space

#ifndef HYBMAT_TENSORS_HPP
#define HYBMAT_TENSORS_HPP

#include <Eigen/Dense>
#include <stdexcept>

namespace hybmat {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Voigt6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

enum class Regime { PlaneStrain, PlaneStress };

/// Planar strain state: (eps_xx, eps_yy, gamma_xy) plus out-of-plane strain.
/// eps_zz is identically zero for plane strain and is computed by the
/// constitutive drivers for plane stress.
struct StrainState {
  Vector3 eps = Vector3::Zero();
  Regime regime = Regime::PlaneStrain;
  double eps_zz = 0.0;
};

/// Planar stress state: (sig_xx, sig_yy, tau_xy) plus out-of-plane stress.
struct StressState {
  Vector3 sig = Vector3::Zero();
  double sig_zz = 0.0;
};

/// Consistent algorithmic tangent d(sig)/d(eps) in planar Voigt form,
/// columns act on (eps_xx, eps_yy, gamma_xy).
using Tangent = Matrix3;

struct StrainInvariants {
  double I1;
  double I2;
  double J2;
};

struct StressInvariants {
  double I1;
  double J2;
};

// 3D tensor reconstruction. Voigt6 ordering is (xx, yy, zz, xy, yz, zx);
// strain variants carry engineering shear in the last three slots, stress
// variants carry tensor components.
Voigt6 strain_to_voigt6(const StrainState& e);
Voigt6 stress_to_voigt6(const StressState& s);

StrainInvariants strain_invariants_voigt6(const Voigt6& eps6);
StrainInvariants strain_invariants(const StrainState& e);
StressInvariants stress_invariants_voigt6(const Voigt6& sig6);
StressInvariants stress_invariants(const StressState& s);

/// Deviatoric part of the stress tensor, Voigt6 tensor components.
Voigt6 deviatoric_stress(const StressState& s);
Voigt6 deviatoric_voigt6(const Voigt6& sig6);

/// In-plane rotation of a plane-strain state by `angle` (radians),
/// eps' = R eps R^T expressed back in Voigt form. Rejects plane stress.
StrainState rotate_in_plane(const StrainState& e, double angle);

/// Companion rotation for stresses (used by frame-invariance checks).
StressState rotate_stress_in_plane(const StressState& s, double angle);

}  // namespace hybmat

#endif
