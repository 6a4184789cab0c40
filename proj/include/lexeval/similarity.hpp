#pragma once

// Cosine-similarity ranking of prompt labels against feature vectors.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lexeval/common.hpp"

namespace lexeval {

// Unit-normalized, zero-padded label (or query) embeddings. Row i belongs
// to prompt-list entry i.
class LabelEmbeddings {
 public:
  LabelEmbeddings() = default;
  // Throws DomainError on an empty matrix or an all-zero row.
  explicit LabelEmbeddings(const Matrix& raw);

  std::size_t size() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::size_t padded_dim() const { return padded_; }
  const float* data() const { return normalized_.data(); }
  const float* row(std::size_t i) const { return normalized_.data() + i * padded_; }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::size_t padded_ = 0;
  std::vector<float> normalized_;
};

// Feature rows addressed by index, so callers can stream or remap rows
// without materializing a copy.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t dim() const = 0;
  // out.size() == dim()
  virtual void read_row(std::size_t row, std::span<float> out) const = 0;
};

// Rows of a matrix, optionally through an index map (row i reads
// matrix row map[i]).
class MatrixFeatures final : public FeatureSource {
 public:
  explicit MatrixFeatures(const Matrix& matrix) : matrix_(matrix) {}
  MatrixFeatures(const Matrix& matrix, std::span<const std::uint32_t> row_map)
      : matrix_(matrix), map_(row_map), mapped_(true) {}

  std::size_t rows() const override { return mapped_ ? map_.size() : matrix_.rows(); }
  std::size_t dim() const override { return matrix_.cols(); }
  void read_row(std::size_t row, std::span<float> out) const override;

 private:
  const Matrix& matrix_;
  std::span<const std::uint32_t> map_;
  bool mapped_ = false;
};

// Prompt indices by descending similarity (ties: ascending index) and the
// matching similarity values.
struct RankedLabelList {
  std::vector<std::uint32_t> order;
  std::vector<float> similarity;

  std::size_t size() const { return order.size(); }
};

struct RankingDiagnostics {
  std::vector<std::size_t> zero_norm_rows;
};

// Normalizes the given source rows into `out` (rows.size() x padded).
// Rows with zero norm are written as zeros and appended to `zero_rows`
// when it is non-null.
void load_normalized(const FeatureSource& source, std::span<const std::size_t> rows,
                     std::size_t padded, float* out, std::vector<std::size_t>* zero_rows);

// Full ranking of every prompt label for every feature row. Results do not
// depend on the number of threads.
std::vector<RankedLabelList> rank_labels(const Matrix& features, const LabelEmbeddings& embeddings,
                                         RankingDiagnostics* diagnostics = nullptr);

// First n entries of a ranking. Throws DomainError unless 1 <= n <= |L|.
std::vector<std::uint32_t> top_n(const RankedLabelList& ranked, std::size_t n);

// Top n straight from similarity values without a full sort; agrees with
// the prefix of the full ranking.
std::vector<std::uint32_t> top_n(std::span<const float> similarities, std::size_t n);

}  // namespace lexeval
