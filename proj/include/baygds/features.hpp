#pragma once

// Microstructure descriptors: periodic two-point autocorrelations of the
// solid and interface indicator fields, concatenated and compressed with PCA
// fitted over the full candidate pool, then standardized componentwise.
//
// The autocorrelation of indicator m on an n x n torus is
//   f(r) = (1/n^2) sum_x m(x) m(x+r)
// computed as the inverse FFT of the power spectrum. f(0) is the phase
// fraction and every value lies in [0, f(0)].

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "baygds/common.hpp"
#include "baygds/fft2.hpp"
#include "baygds/grid.hpp"

namespace baygds {

constexpr double kSigmaFloor = 1e-12;

// ---------------------------------------------------- indicator fields --

// Solid cells with at least one void neighbor in the periodic von Neumann
// stencil; with eight_neighbors the diagonal neighbors count too.
inline std::vector<std::uint8_t> interface_indicator(const Microstructure& m,
                                                     bool eight_neighbors = false) {
  const int n = m.n;
  std::vector<std::uint8_t> out(m.cells.size(), 0);
  auto wrap = [n](int i) { return (i % n + n) % n; };
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!m.at(r, c)) continue;
      bool boundary = !m.at(wrap(r - 1), c) || !m.at(wrap(r + 1), c) ||
                      !m.at(r, wrap(c - 1)) || !m.at(r, wrap(c + 1));
      if (!boundary && eight_neighbors)
        boundary = !m.at(wrap(r - 1), wrap(c - 1)) || !m.at(wrap(r - 1), wrap(c + 1)) ||
                   !m.at(wrap(r + 1), wrap(c - 1)) || !m.at(wrap(r + 1), wrap(c + 1));
      if (boundary) out[static_cast<std::size_t>(r) * n + c] = 1;
    }
  }
  return out;
}

// -------------------------------------------------------- autocorrelation --

inline std::vector<double> two_point_autocorr(int n, const std::vector<std::uint8_t>& indicator) {
  if (static_cast<int>(indicator.size()) != n * n)
    throw size_error("two_point_autocorr: size mismatch");
  std::vector<double> field(indicator.begin(), indicator.end());
  auto spec = rfft2(n, field);
  for (auto& v : spec) v = std::norm(v);  // |F(k)|^2, imaginary part exactly 0
  auto corr = irfft2(n, spec);            // sum_x m(x) m(x+r)
  const double scale = 1.0 / (static_cast<double>(n) * n);
  for (auto& v : corr) v *= scale;
  return corr;
}

// Concatenated solid + interface correlation maps, length 2 n^2.
inline Eigen::VectorXd correlation_features(const Microstructure& m,
                                            bool eight_neighbors = false) {
  const auto solid = two_point_autocorr(m.n, m.cells);
  const auto iface = two_point_autocorr(m.n, interface_indicator(m, eight_neighbors));
  Eigen::VectorXd v(2 * static_cast<Eigen::Index>(solid.size()));
  for (std::size_t i = 0; i < solid.size(); ++i) v[static_cast<Eigen::Index>(i)] = solid[i];
  for (std::size_t i = 0; i < iface.size(); ++i)
    v[static_cast<Eigen::Index>(solid.size() + i)] = iface[i];
  return v;
}

// ------------------------------------------------------------------ pca --

struct PcaModel {
  int grid_n = 0;             // provenance: side length the maps came from
  Eigen::VectorXd mean;       // dim
  Eigen::MatrixXd components; // n_z x dim, rows orthonormal
  Eigen::VectorXd variances;  // n_z, descending

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    if (x.size() != mean.size()) throw size_error("PcaModel::project: dimension mismatch");
    return components * (x - mean);
  }
};

// PCA via the route suited to the data shape: eigendecomposition of the
// d x d covariance when d <= N, of the N x N Gram matrix otherwise (the two
// share nonzero eigenvalues; Gram eigenvectors are lifted through X).
// Variances follow the sample (N-1) convention.
inline PcaModel fit_pca(const Eigen::MatrixXd& X, int n_z, int grid_n = 0) {
  const Eigen::Index N = X.rows(), d = X.cols();
  if (N < 2) throw size_error("fit_pca: need at least two samples");
  if (n_z < 1 || n_z > std::min<Eigen::Index>(N - 1, d))
    throw size_error("fit_pca: n_z out of range");

  PcaModel model;
  model.grid_n = grid_n;
  model.mean = X.colwise().mean();
  Eigen::MatrixXd Xc = X.rowwise() - model.mean.transpose();
  model.components.resize(n_z, d);
  model.variances.resize(n_z);

  if (d <= N) {
    Eigen::MatrixXd C = (Xc.transpose() * Xc) / static_cast<double>(N - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
    if (eig.info() != Eigen::Success) throw training_error("fit_pca: eigensolver failed");
    for (int k = 0; k < n_z; ++k) {  // eigenvalues ascend; take from the top
      model.variances[k] = std::max(0.0, eig.eigenvalues()[d - 1 - k]);
      model.components.row(k) = eig.eigenvectors().col(d - 1 - k).transpose();
    }
  } else {
    Eigen::MatrixXd G = (Xc * Xc.transpose()) / static_cast<double>(N - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    if (eig.info() != Eigen::Success) throw training_error("fit_pca: eigensolver failed");
    for (int k = 0; k < n_z; ++k) {
      const double lam = std::max(0.0, eig.eigenvalues()[N - 1 - k]);
      model.variances[k] = lam;
      Eigen::VectorXd u = Xc.transpose() * eig.eigenvectors().col(N - 1 - k);
      const double norm = u.norm();
      if (norm < 1e-300) throw degenerate_error("fit_pca: rank-deficient data for n_z requested");
      model.components.row(k) = (u / norm).transpose();
    }
  }
  // Sign convention: largest-magnitude entry positive, so fits are unique.
  for (int k = 0; k < n_z; ++k) {
    Eigen::Index imax = 0;
    model.components.row(k).cwiseAbs().maxCoeff(&imax);
    if (model.components(k, imax) < 0) model.components.row(k) *= -1.0;
  }
  return model;
}

// ------------------------------------------------------- standardization --

struct FeatureStats {
  Eigen::VectorXd mu, sigma;
};

// Componentwise mean and sample standard deviation over pool projections.
// A collapsed component is an error: it would silently erase a feature.
inline FeatureStats feature_stats(const Eigen::MatrixXd& Z_raw) {
  if (Z_raw.rows() < 2) throw size_error("feature_stats: need at least two samples");
  FeatureStats s;
  s.mu = Z_raw.colwise().mean();
  Eigen::MatrixXd c = Z_raw.rowwise() - s.mu.transpose();
  s.sigma = (c.array().square().colwise().sum() / static_cast<double>(Z_raw.rows() - 1))
                .sqrt()
                .transpose();
  for (Eigen::Index k = 0; k < s.sigma.size(); ++k)
    if (s.sigma[k] <= kSigmaFloor)
      throw degenerate_error("feature_stats: feature component " + std::to_string(k + 1) +
                             " has vanishing variance");
  return s;
}

inline Eigen::VectorXd standardize_features(const Eigen::VectorXd& z, const FeatureStats& s) {
  if (z.size() != s.mu.size()) throw size_error("standardize_features: dimension mismatch");
  return (z - s.mu).cwiseQuotient(s.sigma);
}

// Full descriptor path for one design: correlation maps -> PCA -> standardize.
inline Eigen::VectorXd featurize(const Microstructure& m, const PcaModel& pca,
                                 const FeatureStats& stats, bool eight_neighbors = false) {
  return standardize_features(pca.project(correlation_features(m, eight_neighbors)), stats);
}

// Per-component observation statistics (stress observables are standardized
// separately at every schedule state). Statistics come from the initial
// labeled set only and are frozen afterwards. An identically-zero component
// (the identity anchor states under a noise-free source) carries no
// information; its sigma is set to 1 so the standardized value is exactly 0.
// A constant nonzero component is a genuine degeneracy and errors out.
struct ObservationStats {
  Eigen::VectorXd mu, sigma;
};

inline ObservationStats observation_stats(const Eigen::MatrixXd& Y_raw) {
  if (Y_raw.rows() < 2) throw size_error("observation_stats: need at least two samples");
  ObservationStats s;
  s.mu = Y_raw.colwise().mean();
  Eigen::MatrixXd c = Y_raw.rowwise() - s.mu.transpose();
  s.sigma = (c.array().square().colwise().sum() / static_cast<double>(Y_raw.rows() - 1))
                .sqrt()
                .transpose();
  for (Eigen::Index k = 0; k < s.sigma.size(); ++k) {
    if (s.sigma[k] <= kSigmaFloor) {
      if (std::abs(s.mu[k]) <= kSigmaFloor) {
        s.sigma[k] = 1.0;
      } else {
        throw degenerate_error("observation_stats: component " + std::to_string(k + 1) +
                               " is constant and nonzero");
      }
    }
  }
  return s;
}

inline Eigen::VectorXd standardize_observations(const Eigen::VectorXd& y,
                                                const ObservationStats& s) {
  if (y.size() != s.mu.size()) throw size_error("standardize_observations: dimension mismatch");
  for (Eigen::Index k = 0; k < s.sigma.size(); ++k)
    if (s.sigma[k] <= kSigmaFloor)
      throw degenerate_error("standardize_observations: degenerate sigma at component " +
                             std::to_string(k + 1));
  return (y - s.mu).cwiseQuotient(s.sigma);
}

inline Eigen::VectorXd destandardize_observations(const Eigen::VectorXd& y_std,
                                                  const ObservationStats& s) {
  if (y_std.size() != s.mu.size())
    throw size_error("destandardize_observations: dimension mismatch");
  return s.mu + y_std.cwiseProduct(s.sigma);
}

// ------------------------------------------------------------- features.csv --

// Standardized pool features, one row per design: id,z1..z{n_z}.
inline void save_features_csv(const Eigen::MatrixXd& Z, const std::vector<int>& ids,
                              const std::string& path, const std::string& provenance) {
  if (Z.rows() != static_cast<Eigen::Index>(ids.size()))
    throw size_error("save_features_csv: id/row mismatch");
  std::ofstream f(path);
  if (!f) throw user_error("cannot write " + path);
  if (!provenance.empty()) f << "# " << provenance << "\n";
  f << "id";
  for (Eigen::Index k = 0; k < Z.cols(); ++k) f << ",z" << (k + 1);
  f << "\n";
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    f << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < Z.cols(); ++k) f << ',' << fmt_double(Z(i, k));
    f << '\n';
  }
}

struct FeatureTable {
  std::vector<int> ids;
  Eigen::MatrixXd Z;  // one row per id, standardized

  Eigen::Index index_of(int id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return static_cast<Eigen::Index>(i);
    throw user_error("feature table: unknown design id " + std::to_string(id));
  }
  Eigen::VectorXd row(int id) const { return Z.row(index_of(id)).transpose(); }
};

inline FeatureTable load_features_csv(const std::string& path) {
  auto lines = read_data_lines(path);
  if (lines.empty()) throw format_error(path + ": empty feature table");
  auto header = split_csv_row(lines[0]);
  if (header.size() < 2 || header[0] != "id")
    throw format_error(path + ": expected header id,z1,...");
  const Eigen::Index n_z = static_cast<Eigen::Index>(header.size()) - 1;
  FeatureTable t;
  t.Z.resize(static_cast<Eigen::Index>(lines.size()) - 1, n_z);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cols = split_csv_row(lines[i]);
    if (static_cast<Eigen::Index>(cols.size()) != n_z + 1)
      throw format_error(path + ": bad row " + std::to_string(i));
    t.ids.push_back(static_cast<int>(parse_long(cols[0])));
    for (Eigen::Index k = 0; k < n_z; ++k)
      t.Z(static_cast<Eigen::Index>(i) - 1, k) = parse_double(cols[k + 1]);
  }
  return t;
}

// ---------------------------------------------------------------- pca.bin --

// Flat binary blob: magic "BGPC", u16 version, u16 grid_n, u32 dim, u32 n_z,
// u64 config hash, then mean, row-major components, variances as f64 LE.
inline constexpr std::uint16_t kPcaFormatVersion = 1;

inline void save_pca(const PcaModel& m, const std::string& path, std::uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw user_error("cannot write " + path);
  auto put = [&f](const void* p, std::size_t len) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
  };
  put("BGPC", 4);
  const std::uint16_t ver = kPcaFormatVersion;
  const std::uint16_t gn = static_cast<std::uint16_t>(m.grid_n);
  const std::uint32_t dim = static_cast<std::uint32_t>(m.mean.size());
  const std::uint32_t nz = static_cast<std::uint32_t>(m.components.rows());
  put(&ver, 2);
  put(&gn, 2);
  put(&dim, 4);
  put(&nz, 4);
  put(&config_hash, 8);
  put(m.mean.data(), sizeof(double) * dim);
  for (std::uint32_t k = 0; k < nz; ++k) {
    Eigen::VectorXd row = m.components.row(k).transpose();
    put(row.data(), sizeof(double) * dim);
  }
  put(m.variances.data(), sizeof(double) * nz);
  if (!f) throw user_error("short write to " + path);
}

inline PcaModel load_pca(const std::string& path, std::uint64_t* config_hash = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw user_error("cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "BGPC", 4) != 0)
    throw format_error(path + ": malformed header (bad magic)");
  std::uint16_t ver = 0, gn = 0;
  std::uint32_t dim = 0, nz = 0;
  std::uint64_t hash = 0;
  f.read(reinterpret_cast<char*>(&ver), 2);
  f.read(reinterpret_cast<char*>(&gn), 2);
  f.read(reinterpret_cast<char*>(&dim), 4);
  f.read(reinterpret_cast<char*>(&nz), 4);
  f.read(reinterpret_cast<char*>(&hash), 8);
  if (!f) throw format_error(path + ": malformed header (too short)");
  if (ver != kPcaFormatVersion)
    throw format_error(path + ": unsupported format version " + std::to_string(ver));
  if (dim == 0 || nz == 0 || nz > dim) throw size_error(path + ": implausible dimensions");
  PcaModel m;
  m.grid_n = gn;
  m.mean.resize(dim);
  m.components.resize(nz, dim);
  m.variances.resize(nz);
  f.read(reinterpret_cast<char*>(m.mean.data()), sizeof(double) * dim);
  for (std::uint32_t k = 0; k < nz; ++k) {
    Eigen::VectorXd row(dim);
    f.read(reinterpret_cast<char*>(row.data()), sizeof(double) * dim);
    m.components.row(k) = row.transpose();
  }
  f.read(reinterpret_cast<char*>(m.variances.data()), sizeof(double) * nz);
  if (!f) throw truncated_error(path + ": truncated payload");
  if (config_hash) *config_hash = hash;
  return m;
}

}  // namespace baygds
