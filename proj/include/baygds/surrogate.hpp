#pragma once

// Multi-output Gaussian-process surrogate over microstructure features.
//
// The three constitutive coefficients live behind a softplus link: the GP
// models unconstrained latents xi with a rank-structured multi-output prior
//
//   Omega = sum_r B_r (x) K_r,   B_r = a_r a_r^T + kappa_r I,
//   K_r(i,j) = exp(-1/2 sum_k (z_ik - z_jk)^2 / l_rk^2),
//
// and the posterior is a full-covariance Gaussian q = N(mean, L L^T) fitted
// by stochastic gradient ascent on the reparameterized evidence lower bound.
// Standardized stress observations are affine in theta = softplus(xi), so
// the likelihood and its gradient are exact given the Monte Carlo draws; the
// per-step draws depend only on (seed, sample count, dimension), which makes
// the bound a deterministic, finitely-differentiable function of the
// parameters for a fixed seed.
//
// Latent layout is design-major: entry 3 i + m is output m of design i.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include "baygds/common.hpp"
#include "baygds/features.hpp"
#include "baygds/mechanics.hpp"

namespace baygds {

struct SurrogateConfig {
  int n_r = 3;                 // number of latent kernels in the mixture
  int mc_samples = 64;         // Monte Carlo draws per bound evaluation
  int train_steps = 1500;      // initial fit
  int restart_period = 500;    // cosine-annealing warm-restart period
  int retrain_steps = 1500;    // refit after each pool augmentation
  int retrain_restart = 500;
  double lr_max = 0.05;
  double lr_min = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int elbo_window = 20;        // running-average window for snapshot choice
  double init_mixing_std = 0.1;
  double init_kappa = 0.1;
  double init_noise_var = 0.01;
  double init_chol_scale = 0.1;
  std::uint64_t seed = 3;
};

// ------------------------------------------------------------- parameters --

struct LmcHyper {
  Eigen::MatrixXd log_length;  // n_r x n_z
  Eigen::MatrixXd mixing;      // n_r x n_t, row r is a_r
  Eigen::VectorXd kappa_raw;   // n_r, kappa = softplus(raw)
  double log_noise = 0.0;      // observation noise variance, log space
};

struct VariationalState {
  Eigen::VectorXd mean;      // D
  Eigen::MatrixXd chol_raw;  // D x D lower; diagonal stored in log space

  Eigen::MatrixXd chol() const {
    Eigen::MatrixXd L = chol_raw.triangularView<Eigen::Lower>();
    for (Eigen::Index i = 0; i < L.rows(); ++i) L(i, i) = std::exp(chol_raw(i, i));
    return L;
  }
};

// --------------------------------------------------------------- kernels --

// Squared-exponential kernel with per-dimension length scales between row
// sets A and B (pass the same matrix twice for the symmetric case).
inline Eigen::MatrixXd ard_se_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                     const Eigen::VectorXd& log_length) {
  if (A.cols() != B.cols() || A.cols() != log_length.size())
    throw size_error("ard_se_kernel: dimension mismatch");
  const Eigen::ArrayXd inv_l = (-log_length).array().exp();
  const Eigen::MatrixXd U = (A.array().rowwise() * inv_l.transpose()).matrix();
  const Eigen::MatrixXd V = (B.array().rowwise() * inv_l.transpose()).matrix();
  const Eigen::VectorXd u2 = U.rowwise().squaredNorm();
  const Eigen::VectorXd v2 = V.rowwise().squaredNorm();
  Eigen::MatrixXd D2 = -2.0 * U * V.transpose();
  D2.colwise() += u2;
  D2.rowwise() += v2.transpose();
  return (-0.5 * D2.cwiseMax(0.0)).array().exp().matrix();
}

inline std::vector<Eigen::MatrixXd> lmc_kernels(const LmcHyper& h, const Eigen::MatrixXd& A,
                                                const Eigen::MatrixXd& B) {
  std::vector<Eigen::MatrixXd> K;
  K.reserve(static_cast<std::size_t>(h.log_length.rows()));
  for (Eigen::Index r = 0; r < h.log_length.rows(); ++r)
    K.push_back(ard_se_kernel(A, B, h.log_length.row(r).transpose()));
  return K;
}

// Output-mixing block for kernel r: low-rank plus ridge, always positive
// definite for kappa > 0.
inline Eigen::MatrixXd lmc_mixing_block(const LmcHyper& h, Eigen::Index r) {
  const Eigen::VectorXd a = h.mixing.row(r).transpose();
  const double kap = softplus(h.kappa_raw[r]);
  return a * a.transpose() +
         kap * Eigen::MatrixXd::Identity(h.mixing.cols(), h.mixing.cols());
}

// Assembles the blocked covariance sum_r B_r(m,m') K_r(i,j) for row set A
// against column set B.
inline Eigen::MatrixXd lmc_covariance(const LmcHyper& h, const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B) {
  const Eigen::Index n_t = h.mixing.cols();
  const Eigen::Index NA = A.rows(), NB = B.rows();
  Eigen::MatrixXd Omega = Eigen::MatrixXd::Zero(NA * n_t, NB * n_t);
  const auto K = lmc_kernels(h, A, B);
  for (Eigen::Index r = 0; r < h.log_length.rows(); ++r) {
    const Eigen::MatrixXd Br = lmc_mixing_block(h, r);
    for (Eigen::Index m = 0; m < n_t; ++m)
      for (Eigen::Index mp = 0; mp < n_t; ++mp)
        if (Br(m, mp) != 0.0)
          for (Eigen::Index i = 0; i < NA; ++i)
            for (Eigen::Index j = 0; j < NB; ++j)
              Omega(i * n_t + m, j * n_t + mp) += Br(m, mp) * K[static_cast<std::size_t>(r)](i, j);
  }
  return Omega;
}

// Diagonal block of the prior at any single input: k_r(z,z) = 1, so it is
// just the summed mixing blocks.
inline Eigen::MatrixXd lmc_self_block(const LmcHyper& h) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(h.mixing.cols(), h.mixing.cols());
  for (Eigen::Index r = 0; r < h.log_length.rows(); ++r) B += lmc_mixing_block(h, r);
  return B;
}

// ------------------------------------------------------- jittered cholesky --

struct CholFactor {
  Eigen::MatrixXd L;
  double jitter = 0.0;
};

// Factorizes pristine first so well-posed cases match hand computations
// exactly, then escalates a relative ridge through four decades.
inline CholFactor chol_with_jitter(const Eigen::MatrixXd& A, const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};
  const double scale = A.diagonal().mean();
  if (!(scale > 0))
    throw training_error(what + ": covariance has nonpositive mean diagonal");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  for (double jit = 1e-8 * scale; jit <= 1e-4 * scale * (1 + 1e-12); jit *= 10) {
    llt.compute(A + jit * I);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jit};
  }
  throw training_error(what + ": covariance not positive definite even with maximal jitter");
}

// KL(N(mean, L_sig L_sig^T) || N(0, L_om L_om^T)) from cholesky factors;
// exactly zero when the arguments coincide and mean vanishes.
inline double gaussian_kl(const Eigen::MatrixXd& L_om, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& L_sig) {
  const Eigen::Index D = mean.size();
  if (L_om.rows() != D || L_sig.rows() != D) throw size_error("gaussian_kl: shape mismatch");
  const auto Lo = L_om.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd alpha = Lo.solve(L_sig);
  const Eigen::VectorXd beta = Lo.solve(mean);
  double logdet = 0;
  for (Eigen::Index d = 0; d < D; ++d) logdet += std::log(L_om(d, d)) - std::log(L_sig(d, d));
  return 0.5 * (alpha.squaredNorm() + beta.squaredNorm() - static_cast<double>(D)) + logdet;
}

// ------------------------------------------------------------- flat packing --

// Order: log lengths (r-major), mixing rows, kappa_raw, log_noise, mean,
// packed lower cholesky (row-major). One vector so a generic optimizer and
// finite differencing see every degree of freedom.
class ElboProblem {
 public:
  ElboProblem(Eigen::MatrixXd Z, Eigen::MatrixXd Y_std, Eigen::MatrixXd H, Eigen::VectorXd c,
              int n_r, int mc_samples)
      : Z_(std::move(Z)),
        Y_(std::move(Y_std)),
        H_(std::move(H)),
        c_(std::move(c)),
        n_r_(n_r),
        S_(mc_samples) {
    if (Y_.rows() != Z_.rows()) throw size_error("elbo: design/observation count mismatch");
    if (H_.rows() != c_.size() || H_.cols() != kNumTheta)
      throw size_error("elbo: basis shape mismatch");
    if (Y_.cols() != H_.rows()) throw size_error("elbo: observation length mismatch");
    if (n_r_ < 1 || S_ < 1) throw config_error("elbo: need at least one kernel and one sample");
    N_ = static_cast<int>(Z_.rows());
    n_z_ = static_cast<int>(Z_.cols());
    n_t_ = kNumTheta;
    D_ = N_ * n_t_;
    HtH_ = H_.transpose() * H_;
    // column i holds H^T (c - y_i)
    G0_ = H_.transpose() * ((-Y_).rowwise() + c_.transpose()).transpose();
    w_ = ((-Y_).rowwise() + c_.transpose()).rowwise().squaredNorm();
  }

  int n_designs() const { return N_; }
  int latent_dim() const { return D_; }

  Eigen::Index n_params() const {
    return static_cast<Eigen::Index>(n_r_) * (n_z_ + n_t_ + 1) + 1 + D_ +
           static_cast<Eigen::Index>(D_) * (D_ + 1) / 2;
  }

  Eigen::VectorXd pack(const LmcHyper& h, const VariationalState& v) const {
    Eigen::VectorXd x(n_params());
    Eigen::Index p = 0;
    for (int r = 0; r < n_r_; ++r)
      for (int k = 0; k < n_z_; ++k) x[p++] = h.log_length(r, k);
    for (int r = 0; r < n_r_; ++r)
      for (int m = 0; m < n_t_; ++m) x[p++] = h.mixing(r, m);
    for (int r = 0; r < n_r_; ++r) x[p++] = h.kappa_raw[r];
    x[p++] = h.log_noise;
    for (int d = 0; d < D_; ++d) x[p++] = v.mean[d];
    for (int i = 0; i < D_; ++i)
      for (int j = 0; j <= i; ++j) x[p++] = v.chol_raw(i, j);
    return x;
  }

  void unpack(const Eigen::VectorXd& x, LmcHyper& h, VariationalState& v) const {
    if (x.size() != n_params()) throw size_error("elbo: parameter vector length mismatch");
    Eigen::Index p = 0;
    h.log_length.resize(n_r_, n_z_);
    for (int r = 0; r < n_r_; ++r)
      for (int k = 0; k < n_z_; ++k) h.log_length(r, k) = x[p++];
    h.mixing.resize(n_r_, n_t_);
    for (int r = 0; r < n_r_; ++r)
      for (int m = 0; m < n_t_; ++m) h.mixing(r, m) = x[p++];
    h.kappa_raw.resize(n_r_);
    for (int r = 0; r < n_r_; ++r) h.kappa_raw[r] = x[p++];
    h.log_noise = x[p++];
    v.mean.resize(D_);
    for (int d = 0; d < D_; ++d) v.mean[d] = x[p++];
    v.chol_raw = Eigen::MatrixXd::Zero(D_, D_);
    for (int i = 0; i < D_; ++i)
      for (int j = 0; j <= i; ++j) v.chol_raw(i, j) = x[p++];
  }

  double value(const Eigen::VectorXd& x, std::uint64_t noise_seed) const {
    return eval(x, noise_seed, nullptr);
  }

  double value_and_grad(const Eigen::VectorXd& x, std::uint64_t noise_seed,
                        Eigen::VectorXd& grad) const {
    return eval(x, noise_seed, &grad);
  }

 private:
  // Reparameterization draws shared by value and gradient; depend only on
  // (seed, D, S) so parameter perturbations see identical noise.
  Eigen::MatrixXd draw_eta(std::uint64_t noise_seed) const {
    Rng rng(mix_seed(noise_seed, 0x656c626full));
    Eigen::MatrixXd E(D_, S_);
    for (int s = 0; s < S_; ++s)
      for (int d = 0; d < D_; ++d) E(d, s) = rng.normal();
    return E;
  }

  double eval(const Eigen::VectorXd& x, std::uint64_t noise_seed, Eigen::VectorXd* grad) const {
    LmcHyper h;
    VariationalState v;
    unpack(x, h, v);

    const double s2 = std::exp(h.log_noise);
    const Eigen::MatrixXd L_sig = v.chol();
    const auto K = lmc_kernels(h, Z_, Z_);
    const Eigen::MatrixXd Omega = lmc_covariance(h, Z_, Z_);
    const CholFactor om = chol_with_jitter(Omega, "elbo prior");
    const auto Lom = om.L.triangularView<Eigen::Lower>();

    // ----- KL(q || prior), both Gaussians factored
    const double kl = gaussian_kl(om.L, v.mean, L_sig);

    // ----- Monte Carlo expected log-likelihood
    const Eigen::MatrixXd E = draw_eta(noise_seed);
    const Eigen::MatrixXd W = L_sig * E;  // D x S
    const int n_y = static_cast<int>(H_.rows());

    double acc_r2 = 0;  // (1/S) sum_s sum_i |r|^2
    Eigen::VectorXd g_mean;
    Eigen::MatrixXd G_samp;
    if (grad) {
      g_mean = Eigen::VectorXd::Zero(D_);
      G_samp = Eigen::MatrixXd::Zero(D_, S_);
    }
    for (int s = 0; s < S_; ++s) {
      for (int i = 0; i < N_; ++i) {
        Eigen::Vector3d th, sg;
        for (int m = 0; m < n_t_; ++m) {
          const double u = v.mean[i * n_t_ + m] + W(i * n_t_ + m, s);
          th[m] = softplus(u);
          sg[m] = sigmoid(u);
        }
        const Eigen::Vector3d t1 = HtH_ * th;
        acc_r2 += (th.dot(t1) + 2.0 * th.dot(G0_.col(i)) + w_[i]) / S_;
        if (grad) {
          const Eigen::Vector3d g_th = -(t1 + G0_.col(i)) / s2;
          const Eigen::Vector3d g_xi = g_th.cwiseProduct(sg);
          for (int m = 0; m < n_t_; ++m) {
            g_mean[i * n_t_ + m] += g_xi[m] / S_;
            G_samp(i * n_t_ + m, s) = g_xi[m];
          }
        }
      }
    }
    const double ll = -0.5 * N_ * n_y * std::log(2.0 * M_PI * s2) - acc_r2 / (2.0 * s2);
    const double elbo = ll - kl;
    if (!grad) return elbo;

    // ----- gradients
    LmcHyper gh;
    VariationalState gv;
    gh.log_length = Eigen::MatrixXd::Zero(n_r_, n_z_);
    gh.mixing = Eigen::MatrixXd::Zero(n_r_, n_t_);
    gh.kappa_raw = Eigen::VectorXd::Zero(n_r_);
    gh.log_noise = -0.5 * N_ * n_y + acc_r2 / (2.0 * s2);
    gv.mean = g_mean;
    Eigen::MatrixXd gL = (G_samp * E.transpose()) / S_;  // likelihood part

    // KL pieces. W_om = Omega^{-1} L_sig, b = Omega^{-1} mean, and
    // G = dKL/dOmega = 1/2 (Omega^{-1} - W_om W_om^T - b b^T).
    const Eigen::MatrixXd alpha = Lom.solve(L_sig);
    const Eigen::VectorXd beta = Lom.solve(v.mean);
    Eigen::MatrixXd Linv = Lom.solve(Eigen::MatrixXd::Identity(D_, D_));
    Eigen::MatrixXd Om_inv = Linv.transpose() * Linv;
    Eigen::MatrixXd W_om = Linv.transpose() * alpha;
    Eigen::VectorXd b = Linv.transpose() * beta;
    Eigen::MatrixXd G = 0.5 * (Om_inv - W_om * W_om.transpose() - b * b.transpose());

    gv.mean -= b;
    Eigen::MatrixXd Lsig_invT = L_sig.triangularView<Eigen::Lower>()
                                    .solve(Eigen::MatrixXd::Identity(D_, D_))
                                    .transpose();
    gL -= (W_om - Lsig_invT);

    // chain rule into the packed parameterization: strictly-lower entries
    // pass through, diagonal entries are log-parameterized
    gv.chol_raw = Eigen::MatrixXd::Zero(D_, D_);
    for (int i = 0; i < D_; ++i) {
      for (int j = 0; j < i; ++j) gv.chol_raw(i, j) = gL(i, j);
      gv.chol_raw(i, i) = gL(i, i) * L_sig(i, i);
    }

    // hyper gradients contract G blockwise against each kernel; the ELBO
    // subtracts KL, hence the minus signs
    Eigen::MatrixXd trG(N_, N_);
    for (int i = 0; i < N_; ++i)
      for (int j = 0; j < N_; ++j)
        trG(i, j) = G.block(i * n_t_, j * n_t_, n_t_, n_t_).trace();
    for (int r = 0; r < n_r_; ++r) {
      const Eigen::VectorXd a = h.mixing.row(r).transpose();
      const double kap = softplus(h.kappa_raw[r]);
      const Eigen::MatrixXd& Kr = K[static_cast<std::size_t>(r)];
      Eigen::MatrixXd Xr = Eigen::MatrixXd::Zero(n_t_, n_t_);
      Eigen::MatrixXd Wr(N_, N_);
      for (int i = 0; i < N_; ++i)
        for (int j = 0; j < N_; ++j) {
          const auto Gb = G.block(i * n_t_, j * n_t_, n_t_, n_t_);
          Xr += Kr(i, j) * Gb;
          Wr(i, j) = (a.dot(Gb * a) + kap * trG(i, j)) * Kr(i, j);
        }
      gh.mixing.row(r) = -((Xr + Xr.transpose()) * a).transpose();
      gh.kappa_raw[r] = -Xr.trace() * sigmoid(h.kappa_raw[r]);
      const Eigen::VectorXd rowsum = Wr.rowwise().sum();
      const Eigen::VectorXd colsum = Wr.colwise().sum().transpose();
      for (int k = 0; k < n_z_; ++k) {
        const Eigen::VectorXd zk = Z_.col(k);
        const Eigen::ArrayXd zk2 = zk.array().square();
        const double sum_d2 = (rowsum.array() * zk2).sum() + (colsum.array() * zk2).sum() -
                              2.0 * zk.dot(Wr * zk);
        const double l2 = std::exp(2.0 * h.log_length(r, k));
        gh.log_length(r, k) = -sum_d2 / l2;
      }
    }

    *grad = pack(gh, gv);
    return elbo;
  }

  Eigen::MatrixXd Z_, Y_, H_;
  Eigen::VectorXd c_;
  int n_r_, S_;
  int N_ = 0, n_z_ = 0, n_t_ = 0, D_ = 0;
  Eigen::Matrix3d HtH_;
  Eigen::MatrixXd G0_;
  Eigen::VectorXd w_;
};

// ----------------------------------------------------------------- model --

struct SurrogateModel {
  LmcHyper hyper;
  VariationalState var;
  Eigen::MatrixXd Z;  // N x n_z coordinates of labeled designs
  std::vector<int> labeled_ids;
  ScheduleSpec schedule;
  ObservationStats ystats;
  std::uint64_t config_hash = 0;

  // standardized linear response cache: std(B theta) = H theta + c
  Eigen::MatrixXd H;
  Eigen::VectorXd c;

  int n_outputs() const { return static_cast<int>(hyper.mixing.cols()); }
  int latent_dim() const { return static_cast<int>(Z.rows()) * n_outputs(); }

  void rebuild_observation_cache() {
    const auto states = make_schedule(schedule);
    const Eigen::MatrixXd B = observation_basis(states, obs_components());
    if (B.rows() != ystats.sigma.size())
      throw size_error("surrogate: schedule does not match observation statistics");
    H = (B.array().colwise() / ystats.sigma.array()).matrix();
    c = -ystats.mu.cwiseQuotient(ystats.sigma);
  }
};

inline SurrogateModel init_surrogate(const Eigen::MatrixXd& Z, const std::vector<int>& ids,
                                     const ScheduleSpec& schedule, const ObservationStats& ystats,
                                     const SurrogateConfig& cfg) {
  if (Z.rows() != static_cast<Eigen::Index>(ids.size()))
    throw size_error("init_surrogate: id/coordinate count mismatch");
  if (Z.rows() < 1) throw size_error("init_surrogate: empty training set");
  SurrogateModel m;
  m.Z = Z;
  m.labeled_ids = ids;
  m.schedule = schedule;
  m.ystats = ystats;
  const int n_z = static_cast<int>(Z.cols());
  const int D = static_cast<int>(Z.rows()) * kNumTheta;
  m.hyper.log_length = Eigen::MatrixXd::Zero(cfg.n_r, n_z);
  Rng rng(mix_seed(cfg.seed, 0x696e6974ull));
  m.hyper.mixing.resize(cfg.n_r, kNumTheta);
  for (int r = 0; r < cfg.n_r; ++r)
    for (int t = 0; t < kNumTheta; ++t) m.hyper.mixing(r, t) = cfg.init_mixing_std * rng.normal();
  m.hyper.kappa_raw = Eigen::VectorXd::Constant(cfg.n_r, softplus_inverse(cfg.init_kappa));
  m.hyper.log_noise = std::log(cfg.init_noise_var);
  m.var.mean = Eigen::VectorXd::Zero(D);
  m.var.chol_raw = Eigen::MatrixXd::Zero(D, D);
  m.var.chol_raw.diagonal().setConstant(std::log(cfg.init_chol_scale));
  m.rebuild_observation_cache();
  return m;
}

// ---------------------------------------------------------------- training --

struct TrainStats {
  double best_elbo = -std::numeric_limits<double>::infinity();  // best window average
  double final_elbo = -std::numeric_limits<double>::infinity(); // last step value
  int steps = 0;
};

// Adam ascent with cosine-annealing warm restarts. The kept parameters are
// the ones at the best running-average bound, not the last iterate, which
// shields the fit from a restart landing on the final step.
inline TrainStats train_surrogate(SurrogateModel& model, const Eigen::MatrixXd& Y_std,
                                  const SurrogateConfig& cfg, int steps, int restart_period,
                                  std::uint64_t seed) {
  if (steps < 1) throw config_error("train_surrogate: need at least one step");
  if (restart_period < 1) throw config_error("train_surrogate: restart period must be positive");
  ElboProblem prob(model.Z, Y_std, model.H, model.c, cfg.n_r, cfg.mc_samples);

  Eigen::VectorXd x = prob.pack(model.hyper, model.var);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd g(x.size());

  TrainStats stats;
  stats.steps = steps;
  Eigen::VectorXd best_x = x;
  std::deque<double> window;
  double window_sum = 0;

  for (int step = 0; step < steps; ++step) {
    const double value = prob.value_and_grad(x, mix_seed(seed, 0x73746570ull,
                                                         static_cast<std::uint64_t>(step)), g);
    if (!std::isfinite(value)) throw training_error("train_surrogate: bound diverged");
    stats.final_elbo = value;

    window.push_back(value);
    window_sum += value;
    if (static_cast<int>(window.size()) > cfg.elbo_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    const double avg = window_sum / static_cast<double>(window.size());
    if (avg > stats.best_elbo) {
      stats.best_elbo = avg;
      best_x = x;
    }

    const int t_cur = step % restart_period;
    const double lr = cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                                       (1.0 + std::cos(M_PI * t_cur / restart_period));
    const double b1t = 1.0 - std::pow(cfg.adam_beta1, step + 1);
    const double b2t = 1.0 - std::pow(cfg.adam_beta2, step + 1);
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    x += lr * (m / b1t).cwiseQuotient(((v / b2t).cwiseSqrt().array() + cfg.adam_eps).matrix());
  }

  prob.unpack(best_x, model.hyper, model.var);
  return stats;
}

// -------------------------------------------------------------- prediction --

struct LatentMarginals {
  Eigen::MatrixXd mean;               // Ns x n_t
  std::vector<Eigen::MatrixXd> cov;   // Ns blocks, n_t x n_t
};

struct LatentJoint {
  Eigen::VectorXd mean;  // Ns * n_t
  Eigen::MatrixXd cov;
};

namespace detail {

struct PredictCore {
  Eigen::MatrixXd U;  // D x (Ns n_t), L^{-1} Omega_*
  Eigen::MatrixXd T;  // L_sig^T L^{-T} U
  Eigen::VectorXd beta;
};

inline PredictCore predict_core(const SurrogateModel& m, const Eigen::MatrixXd& Zs) {
  if (Zs.cols() != m.Z.cols()) throw size_error("predict: feature dimension mismatch");
  const Eigen::MatrixXd Omega = lmc_covariance(m.hyper, m.Z, m.Z);
  const CholFactor om = chol_with_jitter(Omega, "predict prior");
  const auto Lom = om.L.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd cross = lmc_covariance(m.hyper, m.Z, Zs);
  PredictCore core;
  core.U = Lom.solve(cross);
  core.beta = Lom.solve(m.var.mean);
  const Eigen::MatrixXd V = om.L.transpose().triangularView<Eigen::Upper>().solve(core.U);
  core.T = m.var.chol().transpose() * V;
  return core;
}

}  // namespace detail

inline LatentMarginals predict_latent_marginals(const SurrogateModel& m,
                                                const Eigen::MatrixXd& Zs) {
  const auto core = detail::predict_core(m, Zs);
  const Eigen::Index n_t = m.n_outputs();
  const Eigen::MatrixXd self = lmc_self_block(m.hyper);
  LatentMarginals out;
  out.mean.resize(Zs.rows(), n_t);
  out.cov.reserve(static_cast<std::size_t>(Zs.rows()));
  for (Eigen::Index c = 0; c < Zs.rows(); ++c) {
    const auto Uc = core.U.middleCols(c * n_t, n_t);
    const auto Tc = core.T.middleCols(c * n_t, n_t);
    out.mean.row(c) = (Uc.transpose() * core.beta).transpose();
    out.cov.push_back(self - Uc.transpose() * Uc + Tc.transpose() * Tc);
  }
  return out;
}

inline LatentJoint predict_latent_joint(const SurrogateModel& m, const Eigen::MatrixXd& Zs) {
  const auto core = detail::predict_core(m, Zs);
  LatentJoint out;
  out.mean = core.U.transpose() * core.beta;
  out.cov = lmc_covariance(m.hyper, Zs, Zs) - core.U.transpose() * core.U +
            core.T.transpose() * core.T;
  return out;
}

// Screening point estimate: the posterior-mean latent through the link.
inline Eigen::MatrixXd point_theta(const SurrogateModel& m, const Eigen::MatrixXd& Zs) {
  const auto core = detail::predict_core(m, Zs);
  const Eigen::Index n_t = m.n_outputs();
  Eigen::MatrixXd theta(Zs.rows(), n_t);
  for (Eigen::Index c = 0; c < Zs.rows(); ++c) {
    const Eigen::VectorXd mu = core.U.middleCols(c * n_t, n_t).transpose() * core.beta;
    for (Eigen::Index t = 0; t < n_t; ++t) theta(c, t) = softplus(mu[t]);
  }
  return theta;
}

// ------------------------------------------------------------- pushforward --

struct PushforwardMoments {
  Eigen::VectorXd mean, var;
};

// Factor for sampling a small covariance: cholesky when it holds, otherwise
// an eigenvalue-clamped square root (predictive blocks can brush rank
// deficiency near training points).
inline Eigen::MatrixXd sampling_root(const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw training_error("sampling_root: eigensolver failed");
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// Monte Carlo moments of y = B softplus(xi), xi ~ N(mu, Sigma). Exact zero
// rows of B (identity anchor states) come out with exactly zero mean and
// variance.
inline PushforwardMoments pushforward_moments(const Eigen::MatrixXd& B, const Eigen::VectorXd& mu,
                                              const Eigen::MatrixXd& Sigma, int samples,
                                              std::uint64_t seed) {
  if (samples < 2) throw config_error("pushforward_moments: need at least two samples");
  if (B.cols() != mu.size() || Sigma.rows() != mu.size() || Sigma.cols() != mu.size())
    throw size_error("pushforward_moments: shape mismatch");
  const Eigen::MatrixXd L = sampling_root(Sigma);
  Rng rng(mix_seed(seed, 0x70757368ull));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(B.rows());
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(B.rows());
  Eigen::VectorXd eta(mu.size());
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index d = 0; d < mu.size(); ++d) eta[d] = rng.normal();
    const Eigen::VectorXd theta = softplus(Eigen::VectorXd(mu + L * eta));
    const Eigen::VectorXd y = B * theta;
    sum += y;
    sumsq += y.cwiseProduct(y);
  }
  PushforwardMoments out;
  out.mean = sum / samples;
  out.var = ((sumsq - samples * out.mean.cwiseProduct(out.mean)) / (samples - 1)).cwiseMax(0.0);
  return out;
}

// --------------------------------------------------- pool augmentation --

// Appends one design, seeding its variational block with the predictive
// marginal at its coordinates; cross-covariances start at zero and are
// relearned by the next refit.
inline void expand_model(SurrogateModel& m, const Eigen::VectorXd& z_new, int id_new) {
  if (z_new.size() != m.Z.cols()) throw size_error("expand_model: feature dimension mismatch");
  for (int id : m.labeled_ids)
    if (id == id_new) throw user_error("expand_model: design already labeled");
  const auto pred = predict_latent_marginals(m, z_new.transpose());
  const int n_t = m.n_outputs();
  const int D_old = m.latent_dim();

  Eigen::MatrixXd block = pred.cov[0];
  Eigen::LLT<Eigen::MatrixXd> llt(block);
  if (llt.info() != Eigen::Success) {
    const double bump = 1e-10 * std::max(1.0, block.diagonal().mean());
    llt.compute(block + bump * Eigen::MatrixXd::Identity(n_t, n_t));
  }
  Eigen::MatrixXd Lb;
  if (llt.info() == Eigen::Success) {
    Lb = llt.matrixL();
  } else {
    Lb = block.diagonal().cwiseMax(1e-12).cwiseSqrt().asDiagonal();
  }

  m.Z.conservativeResize(m.Z.rows() + 1, Eigen::NoChange);
  m.Z.row(m.Z.rows() - 1) = z_new.transpose();
  m.labeled_ids.push_back(id_new);

  Eigen::VectorXd mean(D_old + n_t);
  mean.head(D_old) = m.var.mean;
  mean.tail(n_t) = pred.mean.row(0).transpose();
  m.var.mean = mean;

  Eigen::MatrixXd chol_raw = Eigen::MatrixXd::Zero(D_old + n_t, D_old + n_t);
  chol_raw.topLeftCorner(D_old, D_old) = m.var.chol_raw;
  for (int i = 0; i < n_t; ++i) {
    for (int j = 0; j < i; ++j) chol_raw(D_old + i, D_old + j) = Lb(i, j);
    chol_raw(D_old + i, D_old + i) = std::log(std::max(Lb(i, i), 1e-9));
  }
  m.var.chol_raw = chol_raw;
}

// --------------------------------------------------------------- model.bin --

inline constexpr std::uint16_t kModelFormatVersion = 1;

inline void save_model(const SurrogateModel& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw user_error("cannot write " + path);
  auto put = [&f](const void* p, std::size_t len) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
  };
  auto put_u16 = [&](std::uint16_t v) { put(&v, 2); };
  auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put_f64 = [&](double v) { put(&v, 8); };

  const int n_r = static_cast<int>(m.hyper.log_length.rows());
  const int n_z = static_cast<int>(m.Z.cols());
  const int n_t = m.n_outputs();
  const int N = static_cast<int>(m.Z.rows());
  const int D = N * n_t;
  const int n_y = static_cast<int>(m.ystats.mu.size());

  put("BGMO", 4);
  put_u16(kModelFormatVersion);
  put_u16(0);
  put(&m.config_hash, 8);
  put_u32(static_cast<std::uint32_t>(n_z));
  put_u32(static_cast<std::uint32_t>(n_t));
  put_u32(static_cast<std::uint32_t>(n_r));
  put_u32(static_cast<std::uint32_t>(N));
  put_u32(static_cast<std::uint32_t>(m.schedule.n_increments));
  put_u32(static_cast<std::uint32_t>(n_y));
  put_f64(m.schedule.beta_deg);

  for (int r = 0; r < n_r; ++r)
    for (int k = 0; k < n_z; ++k) put_f64(m.hyper.log_length(r, k));
  for (int r = 0; r < n_r; ++r)
    for (int t = 0; t < n_t; ++t) put_f64(m.hyper.mixing(r, t));
  for (int r = 0; r < n_r; ++r) put_f64(m.hyper.kappa_raw[r]);
  put_f64(m.hyper.log_noise);
  for (int d = 0; d < D; ++d) put_f64(m.var.mean[d]);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j <= i; ++j) put_f64(m.var.chol_raw(i, j));
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < n_z; ++k) put_f64(m.Z(i, k));
  for (int i = 0; i < N; ++i) put_u32(static_cast<std::uint32_t>(m.labeled_ids[static_cast<std::size_t>(i)]));
  for (int k = 0; k < n_y; ++k) put_f64(m.ystats.mu[k]);
  for (int k = 0; k < n_y; ++k) put_f64(m.ystats.sigma[k]);
  if (!f) throw user_error("short write to " + path);
}

inline SurrogateModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw user_error("cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "BGMO", 4) != 0)
    throw format_error(path + ": malformed header (bad magic)");
  auto get_u16 = [&f, &path] {
    std::uint16_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 2);
    if (!f) throw truncated_error(path + ": truncated header");
    return v;
  };
  auto get_u32 = [&f, &path] {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw truncated_error(path + ": truncated header");
    return v;
  };
  auto get_f64 = [&f, &path] {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw truncated_error(path + ": truncated payload");
    return v;
  };
  const std::uint16_t ver = get_u16();
  get_u16();  // reserved
  if (ver != kModelFormatVersion)
    throw format_error(path + ": unsupported format version " + std::to_string(ver));
  SurrogateModel m;
  f.read(reinterpret_cast<char*>(&m.config_hash), 8);
  if (!f) throw truncated_error(path + ": truncated header");
  const int n_z = static_cast<int>(get_u32());
  const int n_t = static_cast<int>(get_u32());
  const int n_r = static_cast<int>(get_u32());
  const int N = static_cast<int>(get_u32());
  const int n_incr = static_cast<int>(get_u32());
  const int n_y = static_cast<int>(get_u32());
  const double beta_deg = get_f64();
  if (n_z < 1 || n_t != kNumTheta || n_r < 1 || N < 1 || n_incr < 1)
    throw size_error(path + ": implausible dimensions");
  m.schedule = {n_incr, beta_deg};
  if (n_y != m.schedule.n_states() * static_cast<int>(obs_components().size()))
    throw size_error(path + ": observation length does not match schedule");
  const int D = N * n_t;

  m.hyper.log_length.resize(n_r, n_z);
  for (int r = 0; r < n_r; ++r)
    for (int k = 0; k < n_z; ++k) m.hyper.log_length(r, k) = get_f64();
  m.hyper.mixing.resize(n_r, n_t);
  for (int r = 0; r < n_r; ++r)
    for (int t = 0; t < n_t; ++t) m.hyper.mixing(r, t) = get_f64();
  m.hyper.kappa_raw.resize(n_r);
  for (int r = 0; r < n_r; ++r) m.hyper.kappa_raw[r] = get_f64();
  m.hyper.log_noise = get_f64();
  m.var.mean.resize(D);
  for (int d = 0; d < D; ++d) m.var.mean[d] = get_f64();
  m.var.chol_raw = Eigen::MatrixXd::Zero(D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j <= i; ++j) m.var.chol_raw(i, j) = get_f64();
  m.Z.resize(N, n_z);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < n_z; ++k) m.Z(i, k) = get_f64();
  m.labeled_ids.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) m.labeled_ids[static_cast<std::size_t>(i)] = static_cast<int>(get_u32());
  m.ystats.mu.resize(n_y);
  for (int k = 0; k < n_y; ++k) m.ystats.mu[k] = get_f64();
  m.ystats.sigma.resize(n_y);
  for (int k = 0; k < n_y; ++k) m.ystats.sigma[k] = get_f64();
  f.peek();
  if (!f.eof()) throw size_error(path + ": trailing bytes");
  m.rebuild_observation_cache();
  return m;
}

}  // namespace baygds
