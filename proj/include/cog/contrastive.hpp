#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cog/corpus.hpp"

namespace cog::contrastive {

inline constexpr double kEpsilon = 1e-7;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  // Throws DimensionMismatchError on ragged input.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// One in-batch contrastive batch of n entity texts against n images.
struct BatchSpec {
  std::vector<EntityRecord> entities;         // size n
  Matrix entity_predictions;                  // n x n, p(t_a, i_b)
  std::vector<Matrix> concept_predictions;    // per a: m_a x n, p(c_k, i_b)
  Matrix entity_labels;                       // n x n
  std::vector<Matrix> concept_labels;         // per a: m_a x n

  std::size_t batch_size() const { return entities.size(); }

  // Throws DimensionMismatchError when shapes disagree with the entities.
  void validate() const;
};

struct Labels {
  Matrix entity;
  std::vector<Matrix> concepts;
};

// Entity labels: identity. Concept labels: l[a](k, b) = 1 iff entity b
// carries the k-th concept of entity a.
Labels build_labels(std::span<const EntityRecord> entities);

// Binary cross-entropy with p clamped to [eps, 1 - eps].
double bce(double label, double p);

// Sum of BCE over all n*n cells, row-major.
double entity_loss(const BatchSpec& spec);
// Sum of BCE over all (a, k, b) cells, accumulated in (a, b, k) order.
double concept_loss(const BatchSpec& spec);
double total_loss(const BatchSpec& spec);

struct LossBreakdown {
  double entity = 0.0;
  double concept_total = 0.0;
  double total = 0.0;
  // Per-cell means; zero when the corresponding sum is empty.
  double entity_mean = 0.0;
  double concept_mean = 0.0;
};

LossBreakdown compute_losses(const BatchSpec& spec);

}  // namespace cog::contrastive
