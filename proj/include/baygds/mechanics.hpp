#pragma once

// Orthotropic incompressible hyperelasticity in plane stress, used both as
// the parametric stress model and as the core of the synthetic data source.
//
// Energy (unconstrained part):
//   W(F; theta) = t1 (I1 - 3) + t2 (I4 - 1)^2 + t3 (I6 - 1)^2
// with I1 = tr(F^T F), I4 = (F^T F)_11, I6 = (F^T F)_22; the fiber axes are
// the in-plane unit vectors e1 and e2. Incompressibility (det F = 1) enters
// through a pressure chosen to satisfy the plane-stress condition P33 = 0:
//   p = 2 t1 F33 / cof(F)33.
//
// The first Piola-Kirchhoff stress is then linear in theta,
//   P(F; theta) = sum_k theta_k Q_k(F),
//   Q_1 = 2 F - 2 (F33/cof33) F^{-T}
//   Q_2 = 4 (I4 - 1) F (e1 x e1)
//   Q_3 = 4 (I6 - 1) F (e2 x e2)
// which the calibration layer exploits heavily: model stresses are a fixed
// basis matrix times theta, so no differentiation through this file is ever
// required.
//
// Loading: five proportional biaxial stretch paths, each discretized into
// n_lambda steps plus the identity state, optionally conjugated by an
// in-plane rotation (target cells probed at 45 degrees).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "baygds/common.hpp"

namespace baygds {

// ---------------------------------------------------------- softplus etc --

inline double softplus(double x) {
  // max(x,0) + log1p(exp(-|x|)) is exact and overflow-safe: for x > 30 it
  // returns x + exp(-x) to double precision.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double softplus_inverse(double y) {
  if (!(y > 0.0)) throw user_error("softplus_inverse: argument must be positive");
  if (y > 30.0) return y + std::log1p(-std::exp(-y));  // ~ y - exp(-y)
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Eigen::VectorXd softplus(const Eigen::VectorXd& x) {
  Eigen::VectorXd y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = softplus(x[i]);
  return y;
}

inline Eigen::VectorXd softplus_inverse(const Eigen::VectorXd& y) {
  Eigen::VectorXd x(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) x[i] = softplus_inverse(y[i]);
  return x;
}

// ------------------------------------------------------------ kinematics --

constexpr int kNumTheta = 3;
constexpr double kDetTolerance = 1e-8;

struct Invariants {
  double I1, I4, I6;
};

inline Invariants invariants(const Eigen::Matrix3d& F) {
  const double det = F.determinant();
  if (std::abs(det - 1.0) > kDetTolerance)
    throw user_error("invariants: deformation gradient is not isochoric (det F = " +
                     fmt_double(det) + ")");
  const Eigen::Matrix3d C = F.transpose() * F;
  return {C.trace(), C(0, 0), C(1, 1)};
}

// Plane-stress isochoric stretch: F = diag(l1, l2, 1/(l1 l2)).
inline Eigen::Matrix3d diagonal_F(double lambda1, double lambda2) {
  if (lambda1 <= 0 || lambda2 <= 0) throw user_error("diagonal_F: stretches must be positive");
  Eigen::Matrix3d F = Eigen::Matrix3d::Zero();
  F(0, 0) = lambda1;
  F(1, 1) = lambda2;
  F(2, 2) = 1.0 / (lambda1 * lambda2);
  return F;
}

// Conjugation by an in-plane rotation: F_beta = R^T F R, R about e3.
inline Eigen::Matrix3d rotate_about_e3(const Eigen::Matrix3d& F, double beta_deg) {
  const double b = beta_deg * 0.017453292519943295;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  R(0, 0) = std::cos(b);
  R(0, 1) = -std::sin(b);
  R(1, 0) = std::sin(b);
  R(1, 1) = std::cos(b);
  return R.transpose() * F * R;
}

// --------------------------------------------------------- loading paths --

enum class LoadPath { TensionX = 0, OffX, Equibiaxial, OffY, TensionY };
constexpr int kNumPaths = 5;

inline const char* path_name(LoadPath p) {
  switch (p) {
    case LoadPath::TensionX: return "tension-x";
    case LoadPath::OffX: return "off-x";
    case LoadPath::Equibiaxial: return "equibiaxial";
    case LoadPath::OffY: return "off-y";
    case LoadPath::TensionY: return "tension-y";
  }
  throw user_error("path_name: unknown path");
}

inline LoadPath path_from_name(const std::string& s) {
  for (int i = 0; i < kNumPaths; ++i) {
    const auto p = static_cast<LoadPath>(i);
    if (s == path_name(p)) return p;
  }
  throw format_error("unknown loading path: " + s);
}

// Terminal stretches per path.
inline void path_terminal(LoadPath p, double& l1max, double& l2max) {
  switch (p) {
    case LoadPath::TensionX: l1max = 1.50; l2max = 1.00; return;
    case LoadPath::OffX: l1max = 1.50; l2max = 1.25; return;
    case LoadPath::Equibiaxial: l1max = 1.50; l2max = 1.50; return;
    case LoadPath::OffY: l1max = 1.25; l2max = 1.50; return;
    case LoadPath::TensionY: l1max = 1.00; l2max = 1.50; return;
  }
  throw user_error("path_terminal: unknown path");
}

// Linear ramp from identity: lambda(h) = 1 + (h/n)(lambda_max - 1), h = 0..n.
inline void sample_path(LoadPath p, int h, int n_increments, double& l1, double& l2) {
  if (n_increments < 1) throw size_error("sample_path: n_increments must be >= 1");
  if (h < 0 || h > n_increments) throw size_error("sample_path: step index out of range");
  double l1max, l2max;
  path_terminal(p, l1max, l2max);
  const double t = static_cast<double>(h) / n_increments;
  l1 = 1.0 + t * (l1max - 1.0);
  l2 = 1.0 + t * (l2max - 1.0);
}

struct DeformationState {
  LoadPath path;
  int h = 0;            // increment index, 0 = identity
  double beta_deg = 0;  // in-plane probe angle
  double lambda1 = 1, lambda2 = 1;
  Eigen::Matrix3d F;
  double I1 = 3, I4 = 1, I6 = 1;
};

inline DeformationState make_state(LoadPath p, int h, int n_increments, double beta_deg) {
  DeformationState s;
  s.path = p;
  s.h = h;
  s.beta_deg = beta_deg;
  sample_path(p, h, n_increments, s.lambda1, s.lambda2);
  s.F = rotate_about_e3(diagonal_F(s.lambda1, s.lambda2), beta_deg);
  const auto inv = invariants(s.F);
  s.I1 = inv.I1;
  s.I4 = inv.I4;
  s.I6 = inv.I6;
  return s;
}

struct ScheduleSpec {
  int n_increments = 20;
  double beta_deg = 0.0;

  int n_states() const { return kNumPaths * (n_increments + 1); }
};

// Path-major state order: all increments of tension-x first, etc. Every
// path starts at the identity, so the schedule carries kNumPaths zero-stress
// anchor states.
inline std::vector<DeformationState> make_schedule(const ScheduleSpec& spec) {
  std::vector<DeformationState> states;
  states.reserve(static_cast<std::size_t>(spec.n_states()));
  for (int p = 0; p < kNumPaths; ++p)
    for (int h = 0; h <= spec.n_increments; ++h)
      states.push_back(make_state(static_cast<LoadPath>(p), h, spec.n_increments, spec.beta_deg));
  return states;
}

// ------------------------------------------------------------ csv export --

inline void save_schedule_csv(const std::vector<DeformationState>& states,
                              const std::string& path, const std::string& provenance = "") {
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!provenance.empty()) f << "# " << provenance << "\n";
  f << "path,h,lambda1,lambda2,beta_deg\n";
  for (const auto& s : states)
    f << path_name(s.path) << ',' << s.h << ',' << fmt_double(s.lambda1) << ','
      << fmt_double(s.lambda2) << ',' << fmt_double(s.beta_deg) << '\n';
}

inline std::vector<DeformationState> load_schedule_csv(const std::string& path) {
  auto lines = read_data_lines(path);
  if (lines.empty() || split_csv_row(lines[0]).size() != 5)
    throw format_error(path + ": expected header path,h,lambda1,lambda2,beta_deg");
  std::vector<DeformationState> states;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cols = split_csv_row(lines[i]);
    if (cols.size() != 5) throw format_error(path + ": bad row " + std::to_string(i));
    DeformationState s;
    s.path = path_from_name(cols[0]);
    s.h = static_cast<int>(parse_long(cols[1]));
    s.lambda1 = parse_double(cols[2]);
    s.lambda2 = parse_double(cols[3]);
    s.beta_deg = parse_double(cols[4]);
    s.F = rotate_about_e3(diagonal_F(s.lambda1, s.lambda2), s.beta_deg);
    const auto inv = invariants(s.F);
    s.I1 = inv.I1;
    s.I4 = inv.I4;
    s.I6 = inv.I6;
    states.push_back(s);
  }
  return states;
}

// ---------------------------------------------------------------- stress --

// Pressure enforcing P33 = 0 on isochoric F. Only the isotropic term reaches
// the 33 component, hence the t1-only dependence.
inline double hydrostatic_pressure(const Eigen::Matrix3d& F, const Eigen::Vector3d& theta) {
  const double cof33 = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
  if (std::abs(cof33) < 1e-12)
    throw user_error("hydrostatic_pressure: vanishing in-plane cofactor");
  return 2.0 * theta[0] * F(2, 2) / cof33;
}

// Stress basis: P(F; theta) = sum_k theta_k Q_k(F).
inline std::array<Eigen::Matrix3d, kNumTheta> pk1_coefficients(const Eigen::Matrix3d& F) {
  const auto inv = invariants(F);
  const double cof33 = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
  if (std::abs(cof33) < 1e-12) throw user_error("pk1_coefficients: vanishing in-plane cofactor");
  const Eigen::Matrix3d Finv = F.inverse();
  const Eigen::Matrix3d FinvT = Finv.transpose();

  std::array<Eigen::Matrix3d, kNumTheta> Q;
  Q[0] = 2.0 * F - (2.0 * F(2, 2) / cof33) * FinvT;
  Q[1] = Eigen::Matrix3d::Zero();
  Q[1].col(0) = 4.0 * (inv.I4 - 1.0) * F.col(0);  // F (e1 x e1)
  Q[2] = Eigen::Matrix3d::Zero();
  Q[2].col(1) = 4.0 * (inv.I6 - 1.0) * F.col(1);  // F (e2 x e2)
  return Q;
}

inline Eigen::Matrix3d pk1_stress(const Eigen::Matrix3d& F, const Eigen::Vector3d& theta) {
  const auto Q = pk1_coefficients(F);
  return theta[0] * Q[0] + theta[1] * Q[1] + theta[2] * Q[2];
}

// Stress without the pressure term, i.e. dW/dF of the unconstrained energy.
// Kept separate so the energy-consistency test can difference W directly.
inline Eigen::Matrix3d pk1_unconstrained(const Eigen::Matrix3d& F, const Eigen::Vector3d& theta) {
  const Eigen::Matrix3d C = F.transpose() * F;
  Eigen::Matrix3d P = 2.0 * theta[0] * F;
  P.col(0) += 4.0 * theta[1] * (C(0, 0) - 1.0) * F.col(0);
  P.col(1) += 4.0 * theta[2] * (C(1, 1) - 1.0) * F.col(1);
  return P;
}

inline double strain_energy(const Eigen::Matrix3d& F, const Eigen::Vector3d& theta) {
  const auto inv = invariants(F);
  const double d4 = inv.I4 - 1.0, d6 = inv.I6 - 1.0;
  return theta[0] * (inv.I1 - 3.0) + theta[1] * d4 * d4 + theta[2] * d6 * d6;
}

// Unconstrained energy (no det check): used by finite-difference probes that
// wiggle F off the isochoric manifold.
inline double strain_energy_unconstrained(const Eigen::Matrix3d& F, const Eigen::Vector3d& theta) {
  const Eigen::Matrix3d C = F.transpose() * F;
  const double d4 = C(0, 0) - 1.0, d6 = C(1, 1) - 1.0;
  return theta[0] * (C.trace() - 3.0) + theta[1] * d4 * d4 + theta[2] * d6 * d6;
}

// ---------------------------------------------------- component extraction --

enum class StressComponent { P11 = 0, P22 = 1, P12 = 2 };

inline const char* component_name(StressComponent c) {
  switch (c) {
    case StressComponent::P11: return "11";
    case StressComponent::P22: return "22";
    case StressComponent::P12: return "12";
  }
  throw user_error("component_name: unknown component");
}

inline StressComponent component_from_name(const std::string& s) {
  if (s == "11") return StressComponent::P11;
  if (s == "22") return StressComponent::P22;
  if (s == "12") return StressComponent::P12;
  throw format_error("unknown stress component: " + s);
}

inline double stress_entry(const Eigen::Matrix3d& P, StressComponent c) {
  switch (c) {
    case StressComponent::P11: return P(0, 0);
    case StressComponent::P22: return P(1, 1);
    case StressComponent::P12: return P(0, 1);
  }
  throw user_error("stress_entry: unknown component");
}

// Calibration observables: the two in-plane normal components.
inline Eigen::Vector2d extract_obs(const Eigen::Matrix3d& P) {
  return {P(0, 0), P(1, 1)};
}

inline const std::vector<StressComponent>& obs_components() {
  static const std::vector<StressComponent> comps = {StressComponent::P11, StressComponent::P22};
  return comps;
}

// Target observables: a non-empty subset of {11, 22, 12} in that fixed order.
inline Eigen::VectorXd extract_tar(const Eigen::Matrix3d& P,
                                   const std::vector<StressComponent>& active) {
  if (active.empty()) throw user_error("extract_tar: empty component set");
  Eigen::VectorXd out(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = stress_entry(P, active[i]);
  return out;
}

// Sorts and deduplicates an active set into the canonical 11,22,12 order.
inline std::vector<StressComponent> canonical_components(std::vector<StressComponent> comps) {
  if (comps.empty()) throw user_error("canonical_components: empty component set");
  std::sort(comps.begin(), comps.end(),
            [](StressComponent a, StressComponent b) { return static_cast<int>(a) < static_cast<int>(b); });
  comps.erase(std::unique(comps.begin(), comps.end()), comps.end());
  return comps;
}

// ---------------------------------------------------------- linear basis --

// Rows of B map theta to stacked stress components over a schedule:
//   y = B theta,  row index = state * n_comp + comp.
// The basis is the whole forward model for fixed kinematics, so it is built
// once per schedule and reused by calibration, scoring and the data source.
inline Eigen::MatrixXd observation_basis(const std::vector<DeformationState>& states,
                                         const std::vector<StressComponent>& comps) {
  if (comps.empty()) throw user_error("observation_basis: empty component set");
  const Eigen::Index rows =
      static_cast<Eigen::Index>(states.size()) * static_cast<Eigen::Index>(comps.size());
  Eigen::MatrixXd B(rows, kNumTheta);
  for (std::size_t j = 0; j < states.size(); ++j) {
    const auto Q = pk1_coefficients(states[j].F);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const Eigen::Index r =
          static_cast<Eigen::Index>(j) * static_cast<Eigen::Index>(comps.size()) +
          static_cast<Eigen::Index>(c);
      for (int k = 0; k < kNumTheta; ++k) B(r, k) = stress_entry(Q[k], comps[c]);
    }
  }
  return B;
}

}  // namespace baygds
