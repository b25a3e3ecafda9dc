#include "hybmat/tensors.hpp"

#include <cmath>

namespace hybmat {

Voigt6 strain_to_voigt6(const StrainState& e) {
  Voigt6 v;
  v << e.eps[0], e.eps[1], e.eps_zz, e.eps[2], 0.0, 0.0;
  return v;
}

Voigt6 stress_to_voigt6(const StressState& s) {
  Voigt6 v;
  v << s.sig[0], s.sig[1], s.sig_zz, s.sig[2], 0.0, 0.0;
  return v;
}

StrainInvariants strain_invariants_voigt6(const Voigt6& e) {
  const double exy = 0.5 * e[3];
  const double eyz = 0.5 * e[4];
  const double ezx = 0.5 * e[5];
  const double I1 = e[0] + e[1] + e[2];
  const double tr2 = e[0] * e[0] + e[1] * e[1] + e[2] * e[2] +
                     2.0 * (exy * exy + eyz * eyz + ezx * ezx);
  const double I2 = 0.5 * (I1 * I1 - tr2);
  const double J2 = I1 * I1 / 3.0 - I2;
  return {I1, I2, J2};
}

StrainInvariants strain_invariants(const StrainState& e) {
  return strain_invariants_voigt6(strain_to_voigt6(e));
}

StressInvariants stress_invariants_voigt6(const Voigt6& s) {
  const double I1 = s[0] + s[1] + s[2];
  const double tr2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2] +
                     2.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]);
  const double I2 = 0.5 * (I1 * I1 - tr2);
  const double J2 = I1 * I1 / 3.0 - I2;
  return {I1, J2};
}

StressInvariants stress_invariants(const StressState& s) {
  return stress_invariants_voigt6(stress_to_voigt6(s));
}

Voigt6 deviatoric_voigt6(const Voigt6& s) {
  const double p = (s[0] + s[1] + s[2]) / 3.0;
  Voigt6 dev = s;
  dev[0] -= p;
  dev[1] -= p;
  dev[2] -= p;
  return dev;
}

Voigt6 deviatoric_stress(const StressState& s) {
  return deviatoric_voigt6(stress_to_voigt6(s));
}

StrainState rotate_in_plane(const StrainState& e, double angle) {
  if (e.regime != Regime::PlaneStrain) {
    throw std::invalid_argument(
        "rotate_in_plane: only plane-strain states can be rotated");
  }
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double exx = e.eps[0];
  const double eyy = e.eps[1];
  const double exy = 0.5 * e.eps[2];

  const double rxx = c * c * exx + s * s * eyy + 2.0 * c * s * exy;
  const double ryy = s * s * exx + c * c * eyy - 2.0 * c * s * exy;
  const double rxy = c * s * (eyy - exx) + (c * c - s * s) * exy;

  StrainState out;
  out.regime = Regime::PlaneStrain;
  out.eps << rxx, ryy, 2.0 * rxy;
  out.eps_zz = 0.0;
  return out;
}

StressState rotate_stress_in_plane(const StressState& s, double angle) {
  const double c = std::cos(angle);
  const double sn = std::sin(angle);
  const double sxx = s.sig[0];
  const double syy = s.sig[1];
  const double sxy = s.sig[2];

  StressState out;
  out.sig[0] = c * c * sxx + sn * sn * syy + 2.0 * c * sn * sxy;
  out.sig[1] = sn * sn * sxx + c * c * syy - 2.0 * c * sn * sxy;
  out.sig[2] = c * sn * (syy - sxx) + (c * c - sn * sn) * sxy;
  out.sig_zz = s.sig_zz;
  return out;
}

}  // namespace hybmat
