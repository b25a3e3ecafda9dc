#include "hybmat/materials.hpp"

#include <cmath>

namespace hybmat {

namespace {

constexpr int kReturnMapCap = 50;
constexpr int kPlaneStressCap = 20;

const Voigt6 kIdentity6 = (Voigt6() << 1, 1, 1, 0, 0, 0).finished();

Matrix6 deviatoric_projector_eng() {
  Matrix6 idev = Matrix6::Zero();
  idev.diagonal() << 1.0, 1.0, 1.0, 0.5, 0.5, 0.5;
  idev -= kIdentity6 * kIdentity6.transpose() / 3.0;
  return idev;
}

struct CoreResult {
  Voigt6 sig;
  Matrix6 D;
  InternalState alpha;
};

double second_deviatoric_invariant(const Voigt6& s) {
  // s holds tensor components of a traceless stress; J2 = 1/2 s:s
  return 0.5 * (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) +
         s[3] * s[3] + s[4] * s[4] + s[5] * s[5];
}

CoreResult elastic_core(const Voigt6& eps6, double E, double nu) {
  CoreResult r;
  r.D = elastic_stiffness_3d(E, nu);
  r.sig = r.D * eps6;
  return r;
}

CoreResult j2_core(const Voigt6& eps6, const InternalState& alpha_prev,
                   double sigma_y, double E, double nu) {
  const double G = E / (2.0 * (1.0 + nu));
  const double K = E / (3.0 * (1.0 - 2.0 * nu));
  const Matrix6 De = elastic_stiffness_3d(E, nu);

  const Voigt6 sig_tr = De * (eps6 - alpha_prev.eps_p);
  const Voigt6 s_tr = deviatoric_voigt6(sig_tr);
  const double j2_tr = second_deviatoric_invariant(s_tr);
  const double q_tr = std::sqrt(3.0 * j2_tr);

  CoreResult r;
  r.alpha = alpha_prev;
  if (q_tr <= sigma_y) {
    r.sig = sig_tr;
    r.D = De;
    return r;
  }

  // Scalar Newton on the plastic multiplier. The residual is linear for
  // perfect plasticity but the loop keeps the general contract.
  double dgamma = 0.0;
  bool converged = false;
  for (int it = 0; it < kReturnMapCap; ++it) {
    const double res = q_tr - 3.0 * G * dgamma - sigma_y;
    if (std::abs(res) <= 1e-10 * sigma_y) {
      converged = true;
      break;
    }
    dgamma += res / (3.0 * G);
  }
  if (!converged) throw ReturnMapDiverged("j2_update: plastic multiplier loop");

  const double snorm_tr = std::sqrt(2.0 * j2_tr);
  const Voigt6 n_dir = s_tr / snorm_tr;  // tensor components, unit Frobenius

  // flow: deps_p = dgamma sqrt(3/2) N  (engineering shear in storage)
  Voigt6 deps_p = std::sqrt(1.5) * dgamma * n_dir;
  deps_p.tail<3>() *= 2.0;
  r.alpha.eps_p += deps_p;
  r.alpha.kappa += dgamma;

  const double p_tr = (sig_tr[0] + sig_tr[1] + sig_tr[2]) / 3.0;
  const double scale = sigma_y / q_tr;
  r.sig = scale * s_tr + p_tr * kIdentity6;

  r.D = K * kIdentity6 * kIdentity6.transpose() +
        2.0 * G * scale *
            (deviatoric_projector_eng() - n_dir * n_dir.transpose());
  return r;
}

CoreResult melro_core(const Voigt6& eps6, const InternalState& alpha_prev,
                      double sig_t, double sig_c, double nu_p, double E,
                      double nu) {
  const double G = E / (2.0 * (1.0 + nu));
  const double K = E / (3.0 * (1.0 - 2.0 * nu));
  const double k = (1.0 - 2.0 * nu_p) / (1.0 + nu_p);
  const Matrix6 De = elastic_stiffness_3d(E, nu);
  const double yield_scale = 2.0 * sig_c * sig_t;

  const Voigt6 sig_tr = De * (eps6 - alpha_prev.eps_p);
  const Voigt6 s_tr = deviatoric_voigt6(sig_tr);
  const double j2_tr = second_deviatoric_invariant(s_tr);
  const double i1_tr = sig_tr[0] + sig_tr[1] + sig_tr[2];

  const auto yield = [&](double j2, double i1) {
    return 6.0 * j2 + 2.0 * i1 * (sig_c - sig_t) - yield_scale;
  };

  CoreResult r;
  r.alpha = alpha_prev;
  if (yield(j2_tr, i1_tr) <= 0.0) {
    r.sig = sig_tr;
    r.D = De;
    return r;
  }

  const auto phi = [&](double dg) {
    const double a = 1.0 + 6.0 * G * dg;
    const double b = 1.0 + 9.0 * K * k * dg;
    return yield(j2_tr / (a * a), i1_tr / b);
  };
  const auto dphi = [&](double dg) {
    const double a = 1.0 + 6.0 * G * dg;
    const double b = 1.0 + 9.0 * K * k * dg;
    return -72.0 * G * j2_tr / (a * a * a) -
           18.0 * K * k * (sig_c - sig_t) * i1_tr / (b * b);
  };

  // bracket the consistency root, then Newton with bisection fallback
  double lo = 0.0;
  double hi = 1.0 / (6.0 * G);
  int expand = 0;
  while (phi(hi) > 0.0) {
    hi *= 2.0;
    if (++expand > 60) throw ReturnMapDiverged("melro_update: no admissible return");
  }
  double dgamma = 0.5 * hi;
  bool converged = false;
  for (int it = 0; it < kReturnMapCap; ++it) {
    const double f = phi(dgamma);
    if (std::abs(f) <= 1e-10 * yield_scale) {
      converged = true;
      break;
    }
    if (f > 0.0) {
      lo = dgamma;
    } else {
      hi = dgamma;
    }
    const double fp = dphi(dgamma);
    double next = dgamma - f / fp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    dgamma = next;
  }
  if (!converged) throw ReturnMapDiverged("melro_update: consistency loop");

  const double a = 1.0 + 6.0 * G * dgamma;
  const double b = 1.0 + 9.0 * K * k * dgamma;
  const Voigt6 s = s_tr / a;
  const double p = (i1_tr / b) / 3.0;
  const double i1 = 3.0 * p;
  r.sig = s + p * kIdentity6;

  // non-associative flow evaluated at the converged stress
  Voigt6 deps_p = dgamma * (3.0 * s + k * i1 * kIdentity6);
  deps_p.tail<3>() *= 2.0;
  r.alpha.eps_p += deps_p;
  r.alpha.kappa += dgamma;

  const Voigt6 row_phi =
      (12.0 * G / a) * s + (6.0 * K * (sig_c - sig_t) / b) * kIdentity6;
  const Voigt6 ddgamma_deps = row_phi / (-dphi(dgamma));
  const Voigt6 u = (6.0 * G / a) * s + (9.0 * K * k / b) * p * kIdentity6;

  r.D = (2.0 * G / a) * deviatoric_projector_eng() +
        (K / b) * kIdentity6 * kIdentity6.transpose() -
        u * ddgamma_deps.transpose();
  return r;
}

// Shared planar regime handling. `core` maps a full Voigt6 strain to a
// CoreResult; plane stress solves for eps_zz so that sig_zz = 0.
template <class Core>
UpdateResult planar_driver(const StrainState& eps, Core&& core) {
  Voigt6 e6 = Voigt6::Zero();
  e6[0] = eps.eps[0];
  e6[1] = eps.eps[1];
  e6[3] = eps.eps[2];

  CoreResult cr;
  if (eps.regime == Regime::PlaneStrain) {
    e6[2] = 0.0;
    cr = core(e6);
  } else {
    double ezz = 0.0;
    bool converged = false;
    for (int it = 0; it < kPlaneStressCap; ++it) {
      e6[2] = ezz;
      cr = core(e6);
      const double tol = 1e-8 * cr.sig.norm() + 1e-12;
      if (std::abs(cr.sig[2]) <= tol) {
        converged = true;
        break;
      }
      ezz -= cr.sig[2] / cr.D(2, 2);
    }
    if (!converged)
      throw ReturnMapDiverged("plane stress: sig_zz condensation loop");
  }

  UpdateResult out;
  out.alpha = cr.alpha;
  out.eps_zz = e6[2];
  out.sig.sig << cr.sig[0], cr.sig[1], cr.sig[3];
  out.sig.sig_zz = cr.sig[2];

  const int idx[3] = {0, 1, 3};
  Matrix3 Dpp;
  Vector3 Dpz, Dzp;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) Dpp(i, j) = cr.D(idx[i], idx[j]);
    Dpz[i] = cr.D(idx[i], 2);
    Dzp[i] = cr.D(2, idx[i]);
  }
  if (eps.regime == Regime::PlaneStrain) {
    out.D = Dpp;
  } else {
    out.D = Dpp - Dpz * Dzp.transpose() / cr.D(2, 2);
  }
  return out;
}

}  // namespace

double SaturatingHardening::at(double kappa) const {
  return sig0 + (sig_inf - sig0) * (1.0 - std::exp(-kappa / kappa0));
}

Matrix6 elastic_stiffness_3d(double E, double nu) {
  const double G = E / (2.0 * (1.0 + nu));
  const double K = E / (3.0 * (1.0 - 2.0 * nu));
  return K * kIdentity6 * kIdentity6.transpose() +
         2.0 * G * deviatoric_projector_eng();
}

UpdateResult elastic_update(const StrainState& eps, const ElasticParams& p) {
  return planar_driver(
      eps, [&](const Voigt6& e6) { return elastic_core(e6, p.E, p.nu); });
}

UpdateResult j2_update(const StrainState& eps, const InternalState& alpha_prev,
                       const J2Params& p) {
  return planar_driver(eps, [&](const Voigt6& e6) {
    return j2_core(e6, alpha_prev, p.sigma_y, p.E, p.nu);
  });
}

UpdateResult melro_update(const StrainState& eps, const InternalState& alpha_prev,
                          const MelroParams& p) {
  return planar_driver(eps, [&](const Voigt6& e6) {
    return melro_core(e6, alpha_prev, p.sigma_t, p.sigma_t * p.ratio_ct, p.nu_p,
                      p.E, p.nu);
  });
}

UpdateResult reference_update(const StrainState& eps, const InternalState& alpha_prev,
                              const ReferenceMaterial& m) {
  // semi-implicit hardening: yield stresses frozen at kappa from the last
  // committed state throughout the return map
  const double sig_t = m.tension.at(alpha_prev.kappa);
  const double sig_c = m.compression.at(alpha_prev.kappa);
  return planar_driver(eps, [&](const Voigt6& e6) {
    return melro_core(e6, alpha_prev, sig_t, sig_c, m.nu_p, m.E, m.nu);
  });
}

Tangent numerical_tangent(
    const std::function<UpdateResult(const StrainState&)>& update,
    const StrainState& eps) {
  const double h = 1e-6 * std::max(eps.eps.norm(), 1e-8);
  Tangent D;
  for (int j = 0; j < 3; ++j) {
    StrainState ep = eps;
    StrainState em = eps;
    ep.eps[j] += h;
    em.eps[j] -= h;
    D.col(j) = (update(ep).sig.sig - update(em).sig.sig) / (2.0 * h);
  }
  return D;
}

}  // namespace hybmat
