#pragma once

// Forward oracles: the expensive ground-truth evaluator abstracted behind a
// uniform interface with an atomic query counter.
//
// SyntheticOracle draws a hidden smooth parameter field theta_true(z) over
// feature space (a fixed-seed radial-basis mixture squashed into configured
// ranges through a calibrated logistic), evaluates the constitutive model,
// and adds deterministic per-(design,state) Gaussian noise to the in-plane
// components. With zero noise and zero mismatch it sits exactly inside the
// model class, which several consistency checks rely on.
//
// ExternalOracle ships grids and deformation states to another process as
// JSON, either via a spawned subprocess (request on stdin, response on
// stdout) or a watched directory, and validates the returned tensors.

#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <functional>
#include <iterator>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "baygds/common.hpp"
#include "baygds/features.hpp"
#include "baygds/grid.hpp"
#include "baygds/mechanics.hpp"

namespace baygds {

class Oracle {
 public:
  virtual ~Oracle() = default;

  std::vector<Eigen::Matrix3d> evaluate(const Microstructure& design,
                                        const std::vector<DeformationState>& states) {
    ++count_;
    return evaluate_impl(design, states);
  }

  long evaluations() const { return count_.load(); }
  virtual std::string name() const = 0;

 protected:
  virtual std::vector<Eigen::Matrix3d> evaluate_impl(
      const Microstructure& design, const std::vector<DeformationState>& states) = 0;

 private:
  std::atomic<long> count_{0};
};

// ------------------------------------------------------- synthetic truth --

struct SyntheticOracleConfig {
  std::uint64_t seed = 99;
  double noise_std = 1e-2;          // stddev on in-plane stress components
  double mismatch_amplitude = 0.0;  // response term outside the model class
  // coefficient ranges; the isotropic range deliberately dominates
  double theta1_lo = 1.0, theta1_hi = 10.0;
  double theta4_lo = 0.1, theta4_hi = 3.0;
  double theta6_lo = 0.1, theta6_hi = 3.0;
};

// Hidden field theta_true(z): per-coefficient RBF mixture over standardized
// feature space, shifted/scaled by probe statistics so the logistic output
// sweeps its range instead of hugging the midpoint.
class SyntheticTruth {
 public:
  SyntheticTruth(int n_z, const SyntheticOracleConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    Rng rng(mix_seed(cfg.seed, 0x74727574ull));  // "trut"
    centers_.resize(kCenters, n_z);
    for (int c = 0; c < kCenters; ++c)
      for (int k = 0; k < n_z; ++k) centers_(c, k) = rng.normal();
    weights_.resize(kNumTheta, kCenters);
    for (int p = 0; p < kNumTheta; ++p)
      for (int c = 0; c < kCenters; ++c) weights_(p, c) = rng.normal();

    // Calibrate the affine pre-squash on probe draws so each coefficient
    // actually varies across a standard-normal feature cloud.
    Rng probe(mix_seed(cfg.seed, 0x70726f62ull));  // "prob"
    const int n_probe = 512;
    Eigen::MatrixXd raw(n_probe, kNumTheta);
    Eigen::VectorXd z(n_z);
    for (int i = 0; i < n_probe; ++i) {
      for (int k = 0; k < n_z; ++k) z[k] = probe.normal();
      raw.row(i) = mixture(z).transpose();
    }
    for (int p = 0; p < kNumTheta; ++p) {
      shift_[p] = raw.col(p).mean();
      const double sd = std::sqrt((raw.col(p).array() - shift_[p]).square().sum() /
                                  static_cast<double>(n_probe - 1));
      if (sd <= 1e-12) throw degenerate_error("synthetic truth: flat coefficient field");
      gain_[p] = 1.6 / sd;
    }
  }

  Eigen::Vector3d theta(const Eigen::VectorXd& z) const {
    const Eigen::Vector3d raw = mixture(z);
    Eigen::Vector3d th;
    const double lo[3] = {cfg_.theta1_lo, cfg_.theta4_lo, cfg_.theta6_lo};
    const double hi[3] = {cfg_.theta1_hi, cfg_.theta4_hi, cfg_.theta6_hi};
    for (int p = 0; p < kNumTheta; ++p)
      th[p] = lo[p] + (hi[p] - lo[p]) * sigmoid(gain_[p] * (raw[p] - shift_[p]));
    return th;
  }

 private:
  static constexpr int kCenters = 8;

  static void validate(const SyntheticOracleConfig& cfg) {
    if (cfg.theta1_lo <= 0 || cfg.theta4_lo <= 0 || cfg.theta6_lo <= 0)
      throw config_error("synthetic truth: coefficient ranges must be positive");
    if (cfg.theta1_hi <= cfg.theta1_lo || cfg.theta4_hi <= cfg.theta4_lo ||
        cfg.theta6_hi <= cfg.theta6_lo)
      throw config_error("synthetic truth: inverted coefficient range");
    if (cfg.noise_std < 0) throw config_error("synthetic truth: negative noise level");
  }

  Eigen::Vector3d mixture(const Eigen::VectorXd& z) const {
    if (z.size() != centers_.cols())
      throw size_error("synthetic truth: feature dimension mismatch");
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int c = 0; c < kCenters; ++c) {
      const double d2 = (z - centers_.row(c).transpose()).squaredNorm();
      const double phi = std::exp(-0.5 * d2);
      for (int p = 0; p < kNumTheta; ++p) out[p] += weights_(p, c) * phi;
    }
    return out;
  }

  SyntheticOracleConfig cfg_;
  Eigen::MatrixXd centers_;
  Eigen::MatrixXd weights_;
  double shift_[kNumTheta] = {0, 0, 0};
  double gain_[kNumTheta] = {1, 1, 1};
};

class SyntheticOracle : public Oracle {
 public:
  SyntheticOracle(const FeatureTable& features, const SyntheticOracleConfig& cfg)
      : cfg_(cfg), truth_(static_cast<int>(features.Z.cols()), cfg), features_(features) {}

  std::string name() const override { return "synthetic"; }

  Eigen::Vector3d theta_true(int design_id) const {
    return truth_.theta(features_.row(design_id));
  }
  const SyntheticTruth& truth() const { return truth_; }

 protected:
  std::vector<Eigen::Matrix3d> evaluate_impl(
      const Microstructure& design, const std::vector<DeformationState>& states) override {
    const Eigen::Vector3d th = theta_true(design.id);
    std::vector<Eigen::Matrix3d> out;
    out.reserve(states.size());
    for (std::size_t j = 0; j < states.size(); ++j) {
      const auto& s = states[j];
      Eigen::Matrix3d P = pk1_stress(s.F, th);
      if (cfg_.mismatch_amplitude != 0.0) {
        // An extra isotropic-like term with strain-dependent coefficient:
        // representable by no constant theta, but still plane-stress exact.
        const auto Q = pk1_coefficients(s.F);
        P += cfg_.mismatch_amplitude * 2.0 * (s.I1 - 3.0) * Q[0];
      }
      if (cfg_.noise_std > 0.0) {
        Rng noise(mix_seed(cfg_.seed, 0x6e6f6973ull, static_cast<std::uint64_t>(design.id),
                           static_cast<std::uint64_t>(j)));
        P(0, 0) += cfg_.noise_std * noise.normal();
        P(1, 1) += cfg_.noise_std * noise.normal();
        const double n12 = cfg_.noise_std * noise.normal();
        P(0, 1) += n12;
        P(1, 0) += n12;
      }
      out.push_back(P);
    }
    return out;
  }

 private:
  SyntheticOracleConfig cfg_;
  SyntheticTruth truth_;
  const FeatureTable& features_;
};

// Deterministic pushforward of externally supplied point estimates; turns the
// screening model into its own ground truth for ranking-consistency checks.
class PointEstimateOracle : public Oracle {
 public:
  PointEstimateOracle(std::vector<int> ids, Eigen::MatrixXd theta_rows)
      : ids_(std::move(ids)), theta_(std::move(theta_rows)) {
    if (static_cast<Eigen::Index>(ids_.size()) != theta_.rows())
      throw size_error("point-estimate oracle: id/theta mismatch");
  }

  std::string name() const override { return "point-estimate"; }

 protected:
  std::vector<Eigen::Matrix3d> evaluate_impl(
      const Microstructure& design, const std::vector<DeformationState>& states) override {
    Eigen::Vector3d th;
    bool found = false;
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (ids_[i] == design.id) {
        th = theta_.row(static_cast<Eigen::Index>(i)).transpose();
        found = true;
        break;
      }
    if (!found)
      throw oracle_error("point-estimate oracle: unknown design id " + std::to_string(design.id));
    std::vector<Eigen::Matrix3d> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(pk1_stress(s.F, th));
    return out;
  }

 private:
  std::vector<int> ids_;
  Eigen::MatrixXd theta_;
};

// --------------------------------------------------- external json bridge --

inline std::string encode_oracle_request(const Microstructure& design,
                                         const std::vector<DeformationState>& states) {
  nlohmann::json req;
  req["design_id"] = design.id;
  req["grid_n"] = design.n;
  req["grid_b64"] = base64_encode(pack_grid(design));
  auto& arr = req["states"] = nlohmann::json::array();
  for (const auto& s : states) {
    std::vector<double> f(9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) f[static_cast<std::size_t>(3 * i + j)] = s.F(i, j);
    arr.push_back({{"F", f}});
  }
  return req.dump();
}

struct OracleRequest {
  Microstructure design;
  std::vector<Eigen::Matrix3d> F;
};

inline OracleRequest decode_oracle_request(const std::string& text) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw oracle_error(std::string("oracle request: invalid json: ") + e.what());
  }
  try {
    OracleRequest out;
    out.design.id = req.at("design_id").get<int>();
    out.design.n = req.at("grid_n").get<int>();
    const auto bytes = base64_decode(req.at("grid_b64").get<std::string>());
    const std::size_t need = (static_cast<std::size_t>(out.design.n) * out.design.n + 7) / 8;
    if (bytes.size() != need) throw oracle_error("oracle request: grid payload size mismatch");
    unpack_grid(bytes.data(), out.design);
    for (const auto& st : req.at("states")) {
      const auto f = st.at("F").get<std::vector<double>>();
      if (f.size() != 9) throw oracle_error("oracle request: F must have 9 entries");
      Eigen::Matrix3d F;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) F(i, j) = f[static_cast<std::size_t>(3 * i + j)];
      out.F.push_back(F);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw oracle_error(std::string("oracle request: missing field: ") + e.what());
  }
}

inline std::string encode_oracle_response(int design_id,
                                          const std::vector<Eigen::Matrix3d>& stresses) {
  nlohmann::json resp;
  resp["design_id"] = design_id;
  auto& arr = resp["stresses"] = nlohmann::json::array();
  for (const auto& P : stresses) {
    std::vector<double> p(9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) p[static_cast<std::size_t>(3 * i + j)] = P(i, j);
    arr.push_back({{"P", p}});
  }
  return resp.dump();
}

inline std::vector<Eigen::Matrix3d> decode_oracle_response(const std::string& text,
                                                           int expect_id,
                                                           std::size_t expect_states) {
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw oracle_error(std::string("oracle response: invalid json: ") + e.what());
  }
  try {
    if (resp.at("design_id").get<int>() != expect_id)
      throw oracle_error("oracle response: design id mismatch");
    std::vector<Eigen::Matrix3d> out;
    for (const auto& st : resp.at("stresses")) {
      const auto p = st.at("P").get<std::vector<double>>();
      if (p.size() != 9) throw oracle_error("oracle response: P must have 9 entries");
      Eigen::Matrix3d P;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) P(i, j) = p[static_cast<std::size_t>(3 * i + j)];
      if (std::abs(P(2, 2)) > 1e-6)
        throw oracle_error("oracle response: plane-stress violation (P33 = " +
                           fmt_double(P(2, 2)) + ")");
      out.push_back(P);
    }
    if (out.size() != expect_states)
      throw oracle_error("oracle response: state count mismatch");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw oracle_error(std::string("oracle response: missing field: ") + e.what());
  }
}

// One request-response exchange; implementations own transport details.
using OracleTransport = std::function<std::string(const std::string& request)>;

// Spawns the solver per request; request on stdin, response on stdout.
inline OracleTransport subprocess_transport(std::vector<std::string> argv) {
  if (argv.empty()) throw config_error("subprocess transport: empty command");
  // a solver that exits before draining its stdin must surface as a failed
  // evaluation, not kill the host process with SIGPIPE
  static const bool sigpipe_ignored = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;
  return [argv](const std::string& request) -> std::string {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
      throw oracle_error("subprocess transport: pipe failed");
    const pid_t pid = fork();
    if (pid < 0) throw oracle_error("subprocess transport: fork failed");
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      std::vector<char*> cargv;
      for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      execvp(cargv[0], cargv.data());
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    std::size_t written = 0;
    while (written < request.size()) {
      const ssize_t k = write(in_pipe[1], request.data() + written, request.size() - written);
      if (k <= 0) break;
      written += static_cast<std::size_t>(k);
    }
    close(in_pipe[1]);
    std::string response;
    char buf[4096];
    ssize_t k;
    while ((k = read(out_pipe[0], buf, sizeof buf)) > 0)
      response.append(buf, static_cast<std::size_t>(k));
    close(out_pipe[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw oracle_error("subprocess transport: solver exited with status " +
                         std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    return response;
  };
}

// Writes req_<seq>.json into a watched directory and polls for the matching
// resp_<seq>.json until the timeout.
inline OracleTransport directory_transport(std::string dir, int timeout_ms = 10000,
                                           int poll_ms = 5) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw config_error("directory transport: not a directory: " + dir);
  auto seq = std::make_shared<std::atomic<std::uint64_t>>(0);
  return [dir, timeout_ms, poll_ms, seq](const std::string& request) -> std::string {
    const std::uint64_t id = seq->fetch_add(1);
    const fs::path req = fs::path(dir) / ("req_" + std::to_string(id) + ".json");
    const fs::path resp = fs::path(dir) / ("resp_" + std::to_string(id) + ".json");
    const fs::path tmp = fs::path(dir) / ("req_" + std::to_string(id) + ".tmp");
    {
      std::ofstream f(tmp);
      if (!f) throw oracle_error("directory transport: cannot write request");
      f << request;
    }
    fs::rename(tmp, req);  // atomic publish
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      if (fs::exists(resp)) {
        std::ifstream f(resp);
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        std::error_code ec;
        fs::remove(resp, ec);
        fs::remove(req, ec);
        return text;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
    }
    std::error_code ec;
    fs::remove(req, ec);
    throw oracle_error("directory transport: timed out after " + std::to_string(timeout_ms) +
                       " ms waiting for " + resp.string());
  };
}

class ExternalOracle : public Oracle {
 public:
  ExternalOracle(OracleTransport transport, std::string label = "external")
      : transport_(std::move(transport)), label_(std::move(label)) {}

  std::string name() const override { return label_; }

 protected:
  std::vector<Eigen::Matrix3d> evaluate_impl(
      const Microstructure& design, const std::vector<DeformationState>& states) override {
    const auto response = transport_(encode_oracle_request(design, states));
    return decode_oracle_response(response, design.id, states.size());
  }

 private:
  OracleTransport transport_;
  std::string label_;
};

}  // namespace baygds
