#pragma once

// Hot loops of the evaluator. Each kernel has a plain serial reference in
// `serial` and an OpenMP/SIMD implementation in `parallel`; both produce
// bit-identical results, which the test suite checks.
//
// Dot products use a fixed accumulation order: lane l (of kLanes) sums the
// elements d = l, l + kLanes, ... with fused multiply-add, and the lanes are
// combined by a fixed pairwise tree. Rows are zero padded to a multiple of
// kLanes, so the result does not depend on tiling, batching or threads.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lexeval/common.hpp"

namespace lexeval::kernels {

inline constexpr std::size_t kLanes = 16;

constexpr std::size_t padded_dim(std::size_t dim) {
  return (dim + kLanes - 1) / kLanes * kLanes;
}

// Writes the unit-normalized row into `out` (size padded_dim(in.size())),
// zero padded. A zero row is written as zeros and false is returned.
bool normalize_row(std::span<const float> in, std::span<float> out);

// Reference dot product of two padded rows in the fixed lane order.
float dot(const float* a, const float* b, std::size_t padded);

// 1-based position of `label` in the ranking of `sims` by descending value,
// ties by ascending index.
std::size_t label_rank(std::span<const float> sims, std::uint32_t label);

// The best k indices under the same ordering, written to `out` in rank order.
void top_k(std::span<const float> sims, std::size_t k, std::uint32_t* out);

// Single-thread blocked SIMD similarity: out[i * n_labels + j] =
// dot(queries row i, labels row j). Used inside already-parallel regions.
void similarity_block(const float* queries, std::size_t n_queries, const float* labels,
                      std::size_t n_labels, std::size_t padded, float* out);

namespace serial {

void similarity(const float* queries, std::size_t n_queries, const float* labels,
                std::size_t n_labels, std::size_t padded, float* out);

// Full argsort, then position lookup.
std::size_t label_rank(std::span<const float> sims, std::uint32_t label);

// Brute force nearest neighbour within max_distance, lowest index on ties.
std::vector<std::uint32_t> match_points(std::span<const Point3> gt,
                                        std::span<const Point3> pred, double max_distance);

}  // namespace serial

namespace parallel {

void similarity(const float* queries, std::size_t n_queries, const float* labels,
                std::size_t n_labels, std::size_t padded, float* out);

// Hash grid with cell size just above max_distance; 27-cell neighbourhood.
std::vector<std::uint32_t> match_points(std::span<const Point3> gt,
                                        std::span<const Point3> pred, double max_distance);

}  // namespace parallel

}  // namespace lexeval::kernels
