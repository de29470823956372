#include "cog/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "cog/error.hpp"

namespace cog::contrastive {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw DimensionMismatchError("ragged matrix: row " + std::to_string(r) + " has " +
                                   std::to_string(rows[r].size()) + " columns, expected " +
                                   std::to_string(cols));
    }
    if (cols > 0) std::copy(rows[r].begin(), rows[r].end(), &m(r, 0));
  }
  return m;
}

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionMismatchError(what + " is " + std::to_string(m.rows()) + "x" +
                                 std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                                 "x" + std::to_string(cols));
  }
}

void expect_binary(const Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (m(r, c) != 0.0 && m(r, c) != 1.0) {
        throw DomainError(what + " must be binary");
      }
    }
  }
}

void expect_probabilities(const Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!(m(r, c) >= 0.0 && m(r, c) <= 1.0)) throw DomainError(what + " must lie in [0, 1]");
    }
  }
}

}  // namespace

void BatchSpec::validate() const {
  const std::size_t n = batch_size();
  if (n == 0) throw DimensionMismatchError("batch is empty");
  expect_shape(entity_predictions, n, n, "entity_predictions");
  expect_shape(entity_labels, n, n, "entity_labels");
  if (concept_predictions.size() != n || concept_labels.size() != n) {
    throw DimensionMismatchError("concept matrices must be given for each of the " +
                                 std::to_string(n) + " entities");
  }
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t m = entities[a].concepts.size();
    // An entity without concepts contributes an empty (0 x n or 0 x 0) block.
    const auto& cp = concept_predictions[a];
    const auto& cl = concept_labels[a];
    const std::string tag = "[" + std::to_string(a) + "]";
    if (m == 0 && cp.rows() == 0 && cl.rows() == 0) continue;
    expect_shape(cp, m, n, "concept_predictions" + tag);
    expect_shape(cl, m, n, "concept_labels" + tag);
    expect_probabilities(cp, "concept_predictions" + tag);
    expect_binary(cl, "concept_labels" + tag);
  }
  expect_probabilities(entity_predictions, "entity_predictions");
  expect_binary(entity_labels, "entity_labels");
  for (std::size_t a = 0; a < n; ++a) {
    if (entity_labels(a, a) != 1.0) throw DomainError("entity_labels diagonal must be all ones");
  }
}

Labels build_labels(std::span<const EntityRecord> entities) {
  const std::size_t n = entities.size();
  Labels labels{Matrix::identity(n), {}};
  std::vector<std::unordered_set<std::string_view>> concept_sets(n);
  for (std::size_t b = 0; b < n; ++b) {
    concept_sets[b].insert(entities[b].concepts.begin(), entities[b].concepts.end());
  }
  labels.concepts.reserve(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto& concepts = entities[a].concepts;
    Matrix m(concepts.size(), n);
    for (std::size_t k = 0; k < concepts.size(); ++k) {
      for (std::size_t b = 0; b < n; ++b) {
        m(k, b) = concept_sets[b].contains(concepts[k]) ? 1.0 : 0.0;
      }
    }
    labels.concepts.push_back(std::move(m));
  }
  return labels;
}

double bce(double label, double p) {
  // Clamping the complement separately keeps log(eps) exact when p hits 1.
  const double q = std::clamp(p, kEpsilon, 1.0 - kEpsilon);
  const double qc = std::clamp(1.0 - p, kEpsilon, 1.0 - kEpsilon);
  return -(label * std::log(q) + (1.0 - label) * std::log(qc));
}

double entity_loss(const BatchSpec& spec) {
  spec.validate();
  const std::size_t n = spec.batch_size();
  double sum = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      sum += bce(spec.entity_labels(a, b), spec.entity_predictions(a, b));
    }
  }
  return sum;
}

double concept_loss(const BatchSpec& spec) {
  spec.validate();
  const std::size_t n = spec.batch_size();
  double sum = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const auto& pred = spec.concept_predictions[a];
    const auto& label = spec.concept_labels[a];
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t k = 0; k < pred.rows(); ++k) {
        sum += bce(label(k, b), pred(k, b));
      }
    }
  }
  return sum;
}

double total_loss(const BatchSpec& spec) { return entity_loss(spec) + concept_loss(spec); }

LossBreakdown compute_losses(const BatchSpec& spec) {
  LossBreakdown out;
  out.entity = entity_loss(spec);
  out.concept_total = concept_loss(spec);
  out.total = out.entity + out.concept_total;
  const std::size_t n = spec.batch_size();
  std::size_t concept_cells = 0;
  for (const auto& m : spec.concept_predictions) concept_cells += m.rows() * n;
  out.entity_mean = out.entity / static_cast<double>(n * n);
  if (concept_cells > 0) out.concept_mean = out.concept_total / static_cast<double>(concept_cells);
  return out;
}

}  // namespace cog::contrastive
