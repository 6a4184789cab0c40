#include "lexeval/similarity.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "lexeval/kernels.hpp"

namespace lexeval {
namespace {

constexpr std::size_t kRankBatch = 64;

void check_n(std::size_t n, std::size_t size) {
  if (n < 1 || n > size) {
    throw DomainError("top-n of " + std::to_string(n) + " is outside [1, " +
                      std::to_string(size) + "]");
  }
}

}  // namespace

LabelEmbeddings::LabelEmbeddings(const Matrix& raw)
    : rows_(raw.rows()), dim_(raw.cols()), padded_(kernels::padded_dim(raw.cols())) {
  if (rows_ == 0 || dim_ == 0) throw DomainError("embedding matrix is empty");
  normalized_.assign(rows_ * padded_, 0.0f);
  for (std::size_t i = 0; i < rows_; ++i) {
    if (!kernels::normalize_row(raw.row(i), {normalized_.data() + i * padded_, padded_})) {
      throw DomainError("embedding row " + std::to_string(i) + " is the zero vector");
    }
  }
}

void MatrixFeatures::read_row(std::size_t row, std::span<float> out) const {
  const auto src = matrix_.row(mapped_ ? map_[row] : row);
  std::copy(src.begin(), src.end(), out.begin());
}

void load_normalized(const FeatureSource& source, std::span<const std::size_t> rows,
                     std::size_t padded, float* out, std::vector<std::size_t>* zero_rows) {
  std::vector<float> raw(source.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    source.read_row(rows[i], raw);
    if (!kernels::normalize_row(raw, {out + i * padded, padded}) && zero_rows != nullptr) {
      zero_rows->push_back(rows[i]);
    }
  }
}

std::vector<RankedLabelList> rank_labels(const Matrix& features, const LabelEmbeddings& embeddings,
                                         RankingDiagnostics* diagnostics) {
  if (features.cols() != embeddings.dim()) {
    throw DomainError("feature dimension " + std::to_string(features.cols()) +
                      " does not match embedding dimension " + std::to_string(embeddings.dim()));
  }
  const std::size_t n = features.rows();
  const std::size_t labels = embeddings.size();
  const std::size_t padded = embeddings.padded_dim();
  std::vector<RankedLabelList> out(n);
  const MatrixFeatures source(features);
  const auto batches = static_cast<std::int64_t>((n + kRankBatch - 1) / kRankBatch);
  std::vector<std::vector<std::size_t>> zero_rows(static_cast<std::size_t>(batches));

#pragma omp parallel
  {
    std::vector<float> normalized(kRankBatch * padded);
    std::vector<float> sims(kRankBatch * labels);
    std::vector<std::size_t> rows;
#pragma omp for schedule(dynamic, 1)
    for (std::int64_t b = 0; b < batches; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * kRankBatch;
      const std::size_t count = std::min(kRankBatch, n - begin);
      rows.resize(count);
      std::iota(rows.begin(), rows.end(), begin);
      load_normalized(source, rows, padded, normalized.data(), &zero_rows[static_cast<std::size_t>(b)]);
      kernels::similarity_block(normalized.data(), count, embeddings.data(), labels, padded,
                                sims.data());
      for (std::size_t i = 0; i < count; ++i) {
        const float* s = sims.data() + i * labels;
        RankedLabelList& ranked = out[begin + i];
        ranked.order.resize(labels);
        std::iota(ranked.order.begin(), ranked.order.end(), 0u);
        std::sort(ranked.order.begin(), ranked.order.end(), [s](std::uint32_t a, std::uint32_t b) {
          if (s[a] != s[b]) return s[a] > s[b];
          return a < b;
        });
        ranked.similarity.resize(labels);
        for (std::size_t k = 0; k < labels; ++k) ranked.similarity[k] = s[ranked.order[k]];
      }
    }
  }
  if (diagnostics != nullptr) {
    for (const auto& rows : zero_rows) {
      diagnostics->zero_norm_rows.insert(diagnostics->zero_norm_rows.end(), rows.begin(), rows.end());
    }
  }
  return out;
}

std::vector<std::uint32_t> top_n(const RankedLabelList& ranked, std::size_t n) {
  check_n(n, ranked.size());
  return {ranked.order.begin(), ranked.order.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<std::uint32_t> top_n(std::span<const float> similarities, std::size_t n) {
  check_n(n, similarities.size());
  std::vector<std::uint32_t> out(n);
  kernels::top_k(similarities, n, out.data());
  return out;
}

}  // namespace lexeval
