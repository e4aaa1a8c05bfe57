#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "serec/rating_core.hpp"

// Exposure prior read from a fixed dense U x V matrix.
class MatrixPrior final : public serec::ExposureModel {
 public:
  explicit MatrixPrior(serec::Matrix mu) : mu_(std::move(mu)) {}
  std::string kind() const override { return "matrix"; }
  void prior_block(serec::Index u0, serec::Index i0, Eigen::Ref<serec::Matrix> out) const override {
    out = mu_.block(u0, i0, out.rows(), out.cols());
  }
  void update(const serec::InteractionMatrix&, const serec::Posterior&, const serec::FactorModel&, int) override {}
  void save(const std::filesystem::path&) const override {}
  serec::Matrix& mu() { return mu_; }

 private:
  serec::Matrix mu_;
};

inline serec::Matrix dense_clicks(const serec::InteractionMatrix& y) {
  serec::Matrix d = serec::Matrix::Zero(y.n_users(), y.n_items());
  for (const auto& [u, i] : y.entries()) d(u, i) = 1.0;
  return d;
}

inline serec::InteractionMatrix random_clicks(serec::Index users, serec::Index items, double density,
                                              std::mt19937_64& rng) {
  std::bernoulli_distribution click(density);
  std::vector<serec::Pair> e;
  for (serec::Index u = 0; u < users; ++u)
    for (serec::Index i = 0; i < items; ++i)
      if (click(rng)) e.emplace_back(u, i);
  return serec::InteractionMatrix(users, items, e);
}

inline serec::Matrix random_matrix(serec::Index rows, serec::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  serec::Matrix m(rows, cols);
  for (serec::Index c = 0; c < cols; ++c)
    for (serec::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}
