#include "agssl/report.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "agssl/io.hpp"

namespace agssl {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> nodes) {
  if (nodes.empty()) return kNaN;
  std::size_t hits = 0;
  for (NodeId i : nodes)
    if (static_cast<int>(argmax_row(logits.row(static_cast<std::size_t>(i)))) == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

DegreeAccuracy per_degree_accuracy(const Matrix& logits, std::span<const int> labels, const Graph& g,
                                   std::span<const std::size_t> boundaries) {
  if (logits.rows() != static_cast<std::size_t>(g.num_nodes()))
    throw std::invalid_argument("per_degree_accuracy: logits rows != N");
  const auto buckets = degree_buckets(g, boundaries);
  const std::size_t nb = boundaries.size();
  DegreeAccuracy out;
  out.count.assign(nb, 0);
  std::vector<std::size_t> hits(nb, 0);
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    ++out.count[buckets[i]];
    if (static_cast<int>(argmax_row(logits.row(i))) == labels[i]) ++hits[buckets[i]];
  }
  for (std::size_t b = 0; b < nb; ++b) {
    out.bucket_lo.push_back(boundaries[b]);
    out.bucket_hi.push_back(b + 1 < nb ? boundaries[b + 1] : 0);
    out.accuracy.push_back(out.count[b] == 0 ? kNaN
                                             : static_cast<double>(hits[b]) / static_cast<double>(out.count[b]));
  }
  return out;
}

Matrix per_degree_mean_weights(const Matrix& weights, const Graph& g, std::span<const std::size_t> boundaries) {
  if (weights.rows() != static_cast<std::size_t>(g.num_nodes()))
    throw std::invalid_argument("per_degree_mean_weights: weights rows != N");
  const auto buckets = degree_buckets(g, boundaries);
  Matrix out(boundaries.size(), weights.cols());
  std::vector<std::size_t> count(boundaries.size(), 0);
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    ++count[buckets[i]];
    auto dst = out.row(buckets[i]);
    auto src = weights.row(i);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  for (std::size_t b = 0; b < count.size(); ++b)
    for (double& v : out.row(b)) v = count[b] == 0 ? kNaN : v / static_cast<double>(count[b]);
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return {kNaN, kNaN};
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::string csv_number(double v) { return std::isnan(v) ? std::string() : io::format_double(v); }

}  // namespace agssl
