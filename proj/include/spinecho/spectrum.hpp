#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "spinecho/types.hpp"

namespace spinecho {

enum class Branch { minus, plus };

struct TransitionLabel {
  int m_I = 0;  // {-1, 0, +1}
  Branch branch = Branch::minus;
};

// Fixed enumeration order: m_I ascending, minus before plus.
inline std::array<TransitionLabel, 6> all_transitions() {
  return {TransitionLabel{-1, Branch::minus}, TransitionLabel{-1, Branch::plus},
          TransitionLabel{0, Branch::minus},  TransitionLabel{0, Branch::plus},
          TransitionLabel{+1, Branch::minus}, TransitionLabel{+1, Branch::plus}};
}

inline int transition_index(TransitionLabel l) {
  return (l.m_I + 1) * 2 + (l.branch == Branch::plus ? 1 : 0);
}

// The nuclear state shifts the effective axial field by hf_sign * B_hfs.
inline double hf_sign(int m_I) { return static_cast<double>(-m_I); }

// Closed-form transition frequency omega(0 -> +/-) for one defect:
//   omega = D +- sqrt(E^2 + gamma_e^2 u^2),
//   u = B_applied cos(alpha) + hf_sign(m_I) B_hfs + b.
// Valid for D >> E and D >> gamma_e|B|; total function regardless.
inline double transition_freq_approx(TransitionLabel label, double E,
                                     double B_applied, double cos_alpha,
                                     double D, double b, const NVParams& nv) {
  const double u = B_applied * cos_alpha + hf_sign(label.m_I) * nv.B_hfs + b;
  const double s = std::sqrt(E * E + nv.gamma_e * nv.gamma_e * u * u);
  return label.branch == Branch::plus ? D + s : D - s;
}

// Exact 0 -> +/- gaps from the secular spin-1 (x) nuclear-spin-1
// Hamiltonian. The nuclear projection is conserved, so each m_I reduces to a
// 3x3 Hermitian block in the m_S basis; the |0>-like state is identified by
// overlap and the two gaps are ordered so that plus >= minus. B_vec is given
// in the defect frame (z along the symmetry axis).
inline std::array<double, 6> transition_freq_exact(
    const NVParams& nv, double E, const std::array<double, 3>& B_vec) {
  std::array<double, 6> out{};
  const double gx = nv.gamma_e * B_vec[0];
  const double gy = nv.gamma_e * B_vec[1];
  const double gz = nv.gamma_e * B_vec[2];
  using cd = std::complex<double>;
  for (int m_I = -1; m_I <= 1; ++m_I) {
    // Basis m_S = {+1, 0, -1}. The Q_nuc m_I^2 offset is common to the block
    // and cancels in every gap.
    const double az = nv.A_hf * m_I + gz;
    Eigen::Matrix3cd H;
    const cd t(gx / std::sqrt(2.0), -gy / std::sqrt(2.0));
    H << cd(nv.D + az, 0.0), t, cd(E, 0.0),
         std::conj(t), cd(0.0, 0.0), t,
         cd(E, 0.0), std::conj(t), cd(nv.D - az, 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(H);
    if (es.info() != Eigen::Success)
      throw numeric_error("transition_freq_exact: eigensolver failed");
    const auto& ev = es.eigenvalues();
    const auto& vec = es.eigenvectors();
    // |0>-like state = largest |<m_S=0|v>|^2 (adiabatic continuation from
    // the zero-field limit).
    int i0 = 0;
    double best = -1.0;
    for (int i = 0; i < 3; ++i) {
      const double w = std::norm(vec(1, i));
      if (w > best) {
        best = w;
        i0 = i;
      }
    }
    std::array<double, 2> gaps{};
    int k = 0;
    for (int i = 0; i < 3; ++i)
      if (i != i0) gaps[k++] = ev(i) - ev(i0);
    if (gaps[0] > gaps[1]) std::swap(gaps[0], gaps[1]);
    out[transition_index({m_I, Branch::minus})] = gaps[0];
    out[transition_index({m_I, Branch::plus})] = gaps[1];
  }
  return out;
}

// Local fields b that bring the transition to omega. Zero or two solutions;
// the pair coincides at the branch edge |omega - D| = E.
inline std::vector<double> invert_local_field(double omega, double E,
                                              double B_applied,
                                              double cos_alpha, double D,
                                              TransitionLabel label,
                                              const NVParams& nv) {
  const double x = label.branch == Branch::plus ? omega - D : D - omega;
  if (x < E) return {};
  const double root = std::sqrt(x * x - E * E) / nv.gamma_e;
  const double c = B_applied * cos_alpha + hf_sign(label.m_I) * nv.B_hfs;
  return {root - c, -root - c};
}

// Width db of the local-field interval whose image spans d_omega0 on the
// branch, i.e. the minimum-|db| solution of |omega(b+db)| moving outward by
// d_omega0. Regular at the stationary point u = 0, where it becomes
// sqrt(2 E d_omega0 + d_omega0^2)/gamma_e.
inline double local_field_step(double E, double B_applied, double cos_alpha,
                               double D, double b, double d_omega0,
                               TransitionLabel label, const NVParams& nv) {
  (void)D;
  const double u =
      B_applied * cos_alpha + hf_sign(label.m_I) * nv.B_hfs + b;
  const double g = nv.gamma_e;
  const double T = std::sqrt(E * E + g * g * u * u) + d_omega0;
  return std::sqrt(T * T - E * E) / g - std::abs(u);
}

// Same step expressed against the splitting x = |omega - D| after the
// b-inversion, where gamma_e|u| = sqrt(x^2 - E^2). Shared by the density
// quadrature, which never materializes b.
inline double local_field_step_from_split(double E, double x, double d_omega0,
                                          double gamma_e) {
  const double T = x + d_omega0;
  const double m2 = x * x - E * E;
  return (std::sqrt(T * T - E * E) - std::sqrt(m2 > 0.0 ? m2 : 0.0)) / gamma_e;
}

}  // namespace spinecho
