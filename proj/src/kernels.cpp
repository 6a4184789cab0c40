#include "lexeval/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <utility>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
#include <immintrin.h>
#endif

#include "lexeval/geometry.hpp"

namespace lexeval::kernels {
namespace {

float reduce_lanes(float* acc) {
  for (std::size_t width = kLanes / 2; width > 0; width /= 2) {
    for (std::size_t i = 0; i < width; ++i) acc[i] = acc[i] + acc[i + width];
  }
  return acc[0];
}

#if defined(__AVX512F__)

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 6;

void tile(const float* q, const float* lab, std::size_t padded, float* out,
          std::size_t out_stride) {
  __m512 acc[kTileRows][kTileCols];
  for (auto& row : acc) {
    for (auto& a : row) a = _mm512_setzero_ps();
  }
  for (std::size_t d = 0; d < padded; d += kLanes) {
    __m512 lv[kTileCols];
    for (std::size_t c = 0; c < kTileCols; ++c) lv[c] = _mm512_loadu_ps(lab + c * padded + d);
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const __m512 qv = _mm512_loadu_ps(q + r * padded + d);
      for (std::size_t c = 0; c < kTileCols; ++c) acc[r][c] = _mm512_fmadd_ps(qv, lv[c], acc[r][c]);
    }
  }
  alignas(64) float lanes[kLanes];
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t c = 0; c < kTileCols; ++c) {
      _mm512_store_ps(lanes, acc[r][c]);
      out[r * out_stride + c] = reduce_lanes(lanes);
    }
  }
}

#elif defined(__AVX2__) && defined(__FMA__)

constexpr std::size_t kTileRows = 2;
constexpr std::size_t kTileCols = 2;

// Lanes 0-7 live in lo, 8-15 in hi.
void tile(const float* q, const float* lab, std::size_t padded, float* out,
          std::size_t out_stride) {
  __m256 lo[kTileRows][kTileCols];
  __m256 hi[kTileRows][kTileCols];
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t c = 0; c < kTileCols; ++c) {
      lo[r][c] = _mm256_setzero_ps();
      hi[r][c] = _mm256_setzero_ps();
    }
  }
  for (std::size_t d = 0; d < padded; d += kLanes) {
    __m256 llo[kTileCols];
    __m256 lhi[kTileCols];
    for (std::size_t c = 0; c < kTileCols; ++c) {
      llo[c] = _mm256_loadu_ps(lab + c * padded + d);
      lhi[c] = _mm256_loadu_ps(lab + c * padded + d + 8);
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const __m256 qlo = _mm256_loadu_ps(q + r * padded + d);
      const __m256 qhi = _mm256_loadu_ps(q + r * padded + d + 8);
      for (std::size_t c = 0; c < kTileCols; ++c) {
        lo[r][c] = _mm256_fmadd_ps(qlo, llo[c], lo[r][c]);
        hi[r][c] = _mm256_fmadd_ps(qhi, lhi[c], hi[r][c]);
      }
    }
  }
  alignas(32) float lanes[kLanes];
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t c = 0; c < kTileCols; ++c) {
      _mm256_store_ps(lanes, lo[r][c]);
      _mm256_store_ps(lanes + 8, hi[r][c]);
      out[r * out_stride + c] = reduce_lanes(lanes);
    }
  }
}

#else

constexpr std::size_t kTileRows = 1;
constexpr std::size_t kTileCols = 1;

void tile(const float* q, const float* lab, std::size_t padded, float* out, std::size_t) {
  out[0] = dot(q, lab, padded);
}

#endif

// Labels per cache block; a multiple of every tile width above.
constexpr std::size_t kLabelBlock = 48;
// Query rows per parallel work item.
constexpr std::size_t kRowBlock = 64;

double distance2(const Point3& a, const Point3& b) {
  const double dx = static_cast<double>(a[0]) - static_cast<double>(b[0]);
  const double dy = static_cast<double>(a[1]) - static_cast<double>(b[1]);
  const double dz = static_cast<double>(a[2]) - static_cast<double>(b[2]);
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

bool normalize_row(std::span<const float> in, std::span<float> out) {
  double sum = 0.0;
  for (float v : in) sum += static_cast<double>(v) * static_cast<double>(v);
  std::fill(out.begin(), out.end(), 0.0f);
  if (sum == 0.0) return false;
  const double norm = std::sqrt(sum);
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(in[i]) / norm);
  }
  return true;
}

float dot(const float* a, const float* b, std::size_t padded) {
  float acc[kLanes] = {};
  for (std::size_t d = 0; d < padded; d += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] = std::fma(a[d + l], b[d + l], acc[l]);
  }
  return reduce_lanes(acc);
}

std::size_t label_rank(std::span<const float> sims, std::uint32_t label) {
  const float s = sims[label];
  const float* p = sims.data();
  const std::size_t n = sims.size();
  std::size_t greater = 0;
  for (std::size_t j = 0; j < n; ++j) greater += p[j] > s ? 1 : 0;
  std::size_t tied_before = 0;
  for (std::size_t j = 0; j < label; ++j) tied_before += p[j] == s ? 1 : 0;
  return 1 + greater + tied_before;
}

void top_k(std::span<const float> sims, std::size_t k, std::uint32_t* out) {
  k = std::min(k, sims.size());
  if (k == 0) return;
  std::size_t count = 0;
  for (std::uint32_t j = 0; j < sims.size(); ++j) {
    const float v = sims[j];
    std::size_t pos;
    if (count < k) {
      pos = count++;
    } else if (v > sims[out[k - 1]]) {
      pos = k - 1;
    } else {
      continue;
    }
    // j exceeds every stored index, so equal values never move ahead.
    while (pos > 0 && v > sims[out[pos - 1]]) {
      out[pos] = out[pos - 1];
      --pos;
    }
    out[pos] = j;
  }
}

void similarity_block(const float* queries, std::size_t n_queries, const float* labels,
                      std::size_t n_labels, std::size_t padded, float* out) {
  for (std::size_t lb = 0; lb < n_labels; lb += kLabelBlock) {
    const std::size_t le = std::min(n_labels, lb + kLabelBlock);
    std::size_t i = 0;
    for (; i + kTileRows <= n_queries; i += kTileRows) {
      std::size_t j = lb;
      for (; j + kTileCols <= le; j += kTileCols) {
        tile(queries + i * padded, labels + j * padded, padded, out + i * n_labels + j,
             n_labels);
      }
      for (; j < le; ++j) {
        for (std::size_t r = 0; r < kTileRows; ++r) {
          out[(i + r) * n_labels + j] = dot(queries + (i + r) * padded, labels + j * padded, padded);
        }
      }
    }
    for (; i < n_queries; ++i) {
      for (std::size_t j = lb; j < le; ++j) {
        out[i * n_labels + j] = dot(queries + i * padded, labels + j * padded, padded);
      }
    }
  }
}

namespace serial {

void similarity(const float* queries, std::size_t n_queries, const float* labels,
                std::size_t n_labels, std::size_t padded, float* out) {
  for (std::size_t i = 0; i < n_queries; ++i) {
    for (std::size_t j = 0; j < n_labels; ++j) {
      out[i * n_labels + j] = dot(queries + i * padded, labels + j * padded, padded);
    }
  }
}

std::size_t label_rank(std::span<const float> sims, std::uint32_t label) {
  std::vector<std::uint32_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), label) - order.begin()) + 1;
}

std::vector<std::uint32_t> match_points(std::span<const Point3> gt,
                                        std::span<const Point3> pred, double max_distance) {
  const double max2 = max_distance * max_distance;
  std::vector<std::uint32_t> matched(gt.size(), PointMatching::kMissing);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < pred.size(); ++p) {
      const double d2 = distance2(gt[g], pred[p]);
      if (d2 <= max2 && d2 < best) {
        best = d2;
        matched[g] = static_cast<std::uint32_t>(p);
      }
    }
  }
  return matched;
}

}  // namespace serial

namespace parallel {

void similarity(const float* queries, std::size_t n_queries, const float* labels,
                std::size_t n_labels, std::size_t padded, float* out) {
  const auto blocks = static_cast<std::int64_t>((n_queries + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t b = 0; b < blocks; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * kRowBlock;
    const std::size_t rows = std::min(kRowBlock, n_queries - begin);
    similarity_block(queries + begin * padded, rows, labels, n_labels, padded,
                     out + begin * n_labels);
  }
}

std::vector<std::uint32_t> match_points(std::span<const Point3> gt,
                                        std::span<const Point3> pred, double max_distance) {
  std::vector<std::uint32_t> matched(gt.size(), PointMatching::kMissing);
  if (pred.empty() || gt.empty()) return matched;

  // Slightly larger than max_distance so that any pair within range differs
  // by at most one cell per axis despite rounding in the division.
  const double cell = max_distance * (1.0 + 1e-6);
  std::vector<VoxelKey> keys(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) keys[i] = voxel_key(pred[i], cell);
  std::vector<std::uint32_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  std::unordered_map<VoxelKey, std::pair<std::size_t, std::size_t>, VoxelKeyHash> cells;
  cells.reserve(pred.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && keys[order[j]] == keys[order[i]]) ++j;
    cells.emplace(keys[order[i]], std::make_pair(i, j));
    i = j;
  }

  const double max2 = max_distance * max_distance;
  const auto n = static_cast<std::int64_t>(gt.size());
#pragma omp parallel for schedule(dynamic, 1024)
  for (std::int64_t gi = 0; gi < n; ++gi) {
    const Point3& g = gt[static_cast<std::size_t>(gi)];
    const VoxelKey k = voxel_key(g, cell);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_index = PointMatching::kMissing;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells.find(VoxelKey{k.x + dx, k.y + dy, k.z + dz});
          if (it == cells.end()) continue;
          for (std::size_t s = it->second.first; s < it->second.second; ++s) {
            const std::uint32_t p = order[s];
            const double d2 = distance2(g, pred[p]);
            if (d2 <= max2 && (d2 < best || (d2 == best && p < best_index))) {
              best = d2;
              best_index = p;
            }
          }
        }
      }
    }
    matched[static_cast<std::size_t>(gi)] = best_index;
  }
  return matched;
}

}  // namespace parallel

}  // namespace lexeval::kernels
