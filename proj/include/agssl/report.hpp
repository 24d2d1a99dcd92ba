#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/tensor.hpp"

namespace agssl {

/// Row argmax, ties to the lowest index.
std::size_t argmax_row(std::span<const double> row);

/// Fraction of `nodes` whose argmax matches the label. NaN for an empty set.
double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> nodes);

struct DegreeAccuracy {
  std::vector<std::size_t> bucket_lo;
  std::vector<std::size_t> bucket_hi;  ///< exclusive; 0 marks the open last bucket
  std::vector<std::size_t> count;
  std::vector<double> accuracy;        ///< NaN for empty buckets
};

/// Accuracy over all nodes, split by degree bucket.
DegreeAccuracy per_degree_accuracy(const Matrix& logits, std::span<const int> labels, const Graph& g,
                                   std::span<const std::size_t> boundaries);

/// Mean weight row per degree bucket (buckets × K); empty buckets are NaN rows.
Matrix per_degree_mean_weights(const Matrix& weights, const Graph& g, std::span<const std::size_t> boundaries);

/// Mean and sample standard deviation (0 for a single value).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

/// Formats a CSV cell; NaN becomes an empty field.
std::string csv_number(double v);

}  // namespace agssl
