#pragma once

#include "shellular/common.hpp"
#include "shellular/fem.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace shellular {

// Scalar material metrics and theoretical bounds derived from an effective
// stiffness tensor and a volume ratio.
struct PropertyReport {
  double E_dir[3] = {0, 0, 0};  // directional Young's moduli
  double K_V = 0, K_R = 0, G_V = 0, G_R = 0;
  double K_eff = 0, G_eff = 0, E_eff = 0;  // Hill averages
  double uai = 0;
  double offdiag = 0;
  double volume_ratio = 0;
  double K_HS_upper = 0, G_HS_upper = 0, E_voigt = 0;

  static std::string csv_header() {
    return "E_x,E_y,E_z,K_V,K_R,G_V,G_R,K_eff,G_eff,E_eff,uai,offdiag,volume_ratio,"
           "K_HS_upper,G_HS_upper,E_voigt";
  }

  std::string csv_row() const {
    std::ostringstream os;
    os.precision(12);
    os << E_dir[0] << ',' << E_dir[1] << ',' << E_dir[2] << ',' << K_V << ',' << K_R << ','
       << G_V << ',' << G_R << ',' << K_eff << ',' << G_eff << ',' << E_eff << ',' << uai << ','
       << offdiag << ',' << volume_ratio << ',' << K_HS_upper << ',' << G_HS_upper << ','
       << E_voigt;
    return os.str();
  }

  json to_json() const {
    return json{{"E_dir", {E_dir[0], E_dir[1], E_dir[2]}},
                {"K_V", K_V},
                {"K_R", K_R},
                {"G_V", G_V},
                {"G_R", G_R},
                {"K_eff", K_eff},
                {"G_eff", G_eff},
                {"E_eff", E_eff},
                {"uai", uai},
                {"offdiag", offdiag},
                {"volume_ratio", volume_ratio},
                {"bounds", json{{"K_HS_upper", K_HS_upper}, {"G_HS_upper", G_HS_upper}, {"E_voigt", E_voigt}}}};
  }
};

inline Mat6 invert_tensor(const ElasticTensor& c) {
  Eigen::FullPivLU<Mat6> lu(c.c);
  if (!lu.isInvertible()) throw SolverError("elastic tensor is singular");
  return lu.inverse();
}

// E_k = 1 / S_kk with S the compliance matrix.
inline double directional_young(const ElasticTensor& c, int axis) {
  if (axis < 1 || axis > 3) throw ValidationError("axis must be 1..3");
  Mat6 S = invert_tensor(c);
  return 1.0 / S(axis - 1, axis - 1);
}

struct VrhModuli {
  double K_V, K_R, G_V, G_R, K_eff, G_eff, E_eff;
};

// Voigt averages from the stiffness, Reuss from the compliance, Hill means,
// and the isotropic Young's modulus of the Hill pair.
inline VrhModuli voigt_reuss_hill(const ElasticTensor& c) {
  const Mat6& C = c.c;
  Mat6 S = invert_tensor(c);
  VrhModuli m;
  double Cd = C(0, 0) + C(1, 1) + C(2, 2);
  double Co = C(0, 1) + C(0, 2) + C(1, 2);
  double Cs = C(3, 3) + C(4, 4) + C(5, 5);
  m.K_V = (Cd + 2.0 * Co) / 9.0;
  m.G_V = (Cd - Co + 3.0 * Cs) / 15.0;
  double Sd = S(0, 0) + S(1, 1) + S(2, 2);
  double So = S(0, 1) + S(0, 2) + S(1, 2);
  double Ss = S(3, 3) + S(4, 4) + S(5, 5);
  m.K_R = 1.0 / (Sd + 2.0 * So);
  m.G_R = 15.0 / (4.0 * Sd - 4.0 * So + 3.0 * Ss);
  m.K_eff = 0.5 * (m.K_V + m.K_R);
  m.G_eff = 0.5 * (m.G_V + m.G_R);
  m.E_eff = 9.0 * m.K_eff * m.G_eff / (3.0 * m.K_eff + m.G_eff);
  return m;
}

// Universal anisotropy index A_U = 5 G_V/G_R + K_V/K_R - 6.
inline double universal_anisotropy(const ElasticTensor& c) {
  VrhModuli m = voigt_reuss_hill(c);
  return 5.0 * m.G_V / m.G_R + m.K_V / m.K_R - 6.0;
}

// Two-phase Hashin-Shtrikman bounds with the stiffer phase as reference.
// Phase 1 (K1, G1) occupies volume fraction v; phase 2 fills the rest.
inline std::pair<double, double> hs_bounds_two_phase(double v, double K1, double G1, double K2,
                                                     double G2) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("volume fraction must lie in [0, 1]");
  double f1 = v, f2 = 1.0 - v;
  double K, G;
  if (f2 == 0.0 || K2 == K1) {
    K = K1;
  } else {
    K = K1 + f2 / (1.0 / (K2 - K1) + 3.0 * f1 / (3.0 * K1 + 4.0 * G1));
  }
  if (f2 == 0.0 || G2 == G1) {
    G = G1;
  } else {
    double zeta = G1 * (9.0 * K1 + 8.0 * G1) / (6.0 * (K1 + 2.0 * G1));
    G = G1 + f2 / (1.0 / (G2 - G1) + f1 / (G1 + zeta));
  }
  return {K, G};
}

// Upper bounds for a solid/void two-phase composite at solid fraction v.
inline std::pair<double, double> hs_upper_bounds(double v, const BaseMaterial& mat) {
  mat.validate();
  return hs_bounds_two_phase(v, mat.bulk(), mat.mu(), 0.0, 0.0);
}

// Sum of |entries| of the upper-right 3x3 (normal-shear coupling) block.
inline double offdiag_sum(const ElasticTensor& c) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 3; j < 6; ++j) s += std::abs(c.c(i, j));
  return s;
}

// Frobenius distance (in the Mandel metric, where it is a true orthogonal
// projection) from c to the closest isotropic tensor. The projection's
// moduli are exactly the Voigt averages (K_V, G_V).
inline double isotropic_distance(const ElasticTensor& c) {
  const Mat6& C = c.c;
  double Cd = C(0, 0) + C(1, 1) + C(2, 2);
  double Co = C(0, 1) + C(0, 2) + C(1, 2);
  double Cs = C(3, 3) + C(4, 4) + C(5, 5);
  double K = (Cd + 2.0 * Co) / 9.0;
  double G = (Cd - Co + 3.0 * Cs) / 15.0;
  Mat6 I = Mat6::Zero();
  double la = K - 2.0 * G / 3.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) I(a, b) = a == b ? la + 2.0 * G : la;
  for (int a = 3; a < 6; ++a) I(a, a) = G;
  Mat6 D = C - I;
  // Mandel weights: engineering-shear rows/columns scale by sqrt(2) each.
  double sum = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double w = (i >= 3 ? 2.0 : 1.0) * (j >= 3 ? 2.0 : 1.0);
      sum += w * D(i, j) * D(i, j);
    }
  return std::sqrt(sum);
}

inline PropertyReport make_report(const ElasticTensor& c, double volume_ratio,
                                  const BaseMaterial& mat) {
  PropertyReport rep;
  for (int a = 1; a <= 3; ++a) rep.E_dir[a - 1] = directional_young(c, a);
  VrhModuli m = voigt_reuss_hill(c);
  rep.K_V = m.K_V;
  rep.K_R = m.K_R;
  rep.G_V = m.G_V;
  rep.G_R = m.G_R;
  rep.K_eff = m.K_eff;
  rep.G_eff = m.G_eff;
  rep.E_eff = m.E_eff;
  rep.uai = universal_anisotropy(c);
  rep.offdiag = offdiag_sum(c);
  rep.volume_ratio = volume_ratio;
  auto [khs, ghs] = hs_upper_bounds(volume_ratio, mat);
  rep.K_HS_upper = khs;
  rep.G_HS_upper = ghs;
  rep.E_voigt = volume_ratio * mat.youngs;
  return rep;
}

}  // namespace shellular
