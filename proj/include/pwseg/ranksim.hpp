#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pwseg/tensor.hpp"

namespace pwseg {

// Indices of the k largest components of a feature vector, stored ascending.
// "Largest" means the raw signed value; ties go to the lower index.
struct TopKIndexSet {
  int k = 0;
  std::vector<int> indices;
};

inline void top_k_indices_into(const double* z, int dim, int k, std::vector<int>& out) {
  if (k < 1 || k > dim) {
    throw std::invalid_argument("k exceeds feature dimension");
  }
  out.resize(dim);
  std::iota(out.begin(), out.end(), 0);
  std::partial_sort(out.begin(), out.begin() + k, out.end(), [z](int a, int b) {
    if (z[a] != z[b]) return z[a] > z[b];
    return a < b;
  });
  out.resize(k);
  std::sort(out.begin(), out.end());
}

inline TopKIndexSet top_k_indices(const FeatureVector& z, int k) {
  TopKIndexSet set;
  set.k = k;
  top_k_indices_into(z.data(), static_cast<int>(z.size()), k, set.indices);
  return set;
}

// Count of shared members between two ascending index lists.
inline int index_overlap(const std::vector<int>& a, const std::vector<int>& b) {
  int count = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++count;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return count;
}

// Rank-statistics similarity s/k: the fraction of shared top-k feature
// dimensions between a pixel embedding and a class prototype.
inline double rank_overlap_weight(const FeatureVector& z, const FeatureVector& prototype,
                                  int k) {
  if (z.size() != prototype.size()) {
    throw std::invalid_argument("rank_overlap_weight: dimension mismatch");
  }
  const TopKIndexSet a = top_k_indices(z, k);
  const TopKIndexSet b = top_k_indices(prototype, k);
  return static_cast<double>(index_overlap(a.indices, b.indices)) / k;
}

// Hamming distance between binary embeddings that have 1s at the top-k
// index positions. Always even: equals 2*(k - overlap).
inline int hamming_topk(const FeatureVector& a, const FeatureVector& b, int k) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("hamming_topk: dimension mismatch");
  }
  const TopKIndexSet ta = top_k_indices(a, k);
  const TopKIndexSet tb = top_k_indices(b, k);
  std::vector<std::uint8_t> ba(a.size(), 0), bb(b.size(), 0);
  for (int i : ta.indices) ba[i] = 1;
  for (int i : tb.indices) bb[i] = 1;
  int dist = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dist += ba[i] != bb[i];
  return dist;
}

inline double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace pwseg
