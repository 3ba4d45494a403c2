#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldw/domain.hpp"

namespace ldw::test {

inline Eigen::MatrixXd random_spd(std::size_t d, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(d);
  s.diagonal().array() += ridge;
  return s;
}

inline Eigen::VectorXd random_vector(std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
  return v;
}

// Draws n columns from N(mu, sigma).
inline Eigen::MatrixXd sample_gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, std::size_t n,
                                       std::mt19937_64& rng) {
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
  std::normal_distribution<double> g;
  Eigen::MatrixXd out(mu.size(), static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    Eigen::VectorXd z(mu.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = g(rng);
    out.col(c) = mu + l * z;
  }
  return out;
}

// Plausible highway point near the boundary.
inline DrivingPoint random_point(std::mt19937_64& rng, double t = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DrivingPoint p;
  p.t = t;
  p.v = 15.0 + 20.0 * u(rng);
  p.psi = -0.04 + 0.08 * u(rng);
  p.rho = -1e-4 + 2e-4 * u(rng);
  p.dy = -0.5 + 2.5 * u(rng);
  p.psidot = -0.05 + 0.1 * u(rng);
  return p;
}

// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ldw_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ldw::test
