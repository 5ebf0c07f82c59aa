#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pwseg/rng.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

// Mean of the features currently queued for one class.
struct ClassPrototype {
  int class_id = -1;
  FeatureVector vector;
  int support = 0;
};

// Per-class FIFO feature queues with bounded capacity. Pushes subsample the
// offered features with the bank's own seeded RNG; eviction is oldest-first.
class PrototypeBank {
 public:
  PrototypeBank(int capacity_per_class, std::uint64_t seed)
      : capacity_(capacity_per_class), rng_(seed) {
    if (capacity_per_class < 1) {
      throw std::invalid_argument("bank capacity must be >= 1");
    }
  }

  void push_features(int class_id, const std::vector<FeatureVector>& features,
                     int per_image_limit) {
    if (per_image_limit < 1) {
      throw std::invalid_argument("per_image_limit must be >= 1");
    }
    if (features.empty()) return;
    for (const auto& f : features) {
      if (dim_ == 0) dim_ = static_cast<int>(f.size());
      if (static_cast<int>(f.size()) != dim_) {
        throw std::invalid_argument("push_features: feature dimension mismatch");
      }
    }
    auto& queue = queues_[class_id];
    const int n = static_cast<int>(features.size());
    const std::vector<int> picked =
        rng_.sample_indices(n, std::min(per_image_limit, n));
    for (int idx : picked) {
      queue.push_back(features[idx]);
      if (static_cast<int>(queue.size()) > capacity_) queue.pop_front();
    }
  }

  std::optional<ClassPrototype> prototype(int class_id) const {
    auto it = queues_.find(class_id);
    if (it == queues_.end() || it->second.empty()) return std::nullopt;
    const auto& queue = it->second;
    std::vector<long double> acc(dim_, 0.0L);
    for (const auto& f : queue) {
      for (int d = 0; d < dim_; ++d) acc[d] += f[d];
    }
    ClassPrototype proto;
    proto.class_id = class_id;
    proto.support = static_cast<int>(queue.size());
    proto.vector.resize(dim_);
    for (int d = 0; d < dim_; ++d) {
      proto.vector[d] = static_cast<double>(acc[d] / proto.support);
    }
    return proto;
  }

  std::map<int, ClassPrototype> all_prototypes() const {
    std::map<int, ClassPrototype> out;
    for (const auto& [class_id, queue] : queues_) {
      if (queue.empty()) continue;
      out.emplace(class_id, *prototype(class_id));
    }
    return out;
  }

  int capacity_per_class() const { return capacity_; }
  int dim() const { return dim_; }

  const std::deque<FeatureVector>& queue(int class_id) const {
    static const std::deque<FeatureVector> empty;
    auto it = queues_.find(class_id);
    return it == queues_.end() ? empty : it->second;
  }

  std::vector<int> class_ids() const {
    std::vector<int> ids;
    for (const auto& [class_id, queue] : queues_) {
      if (!queue.empty()) ids.push_back(class_id);
    }
    return ids;
  }

  // Checkpoint restore: replaces a queue wholesale.
  void restore_queue(int class_id, std::deque<FeatureVector> features) {
    if (!features.empty()) {
      if (dim_ == 0) dim_ = static_cast<int>(features.front().size());
      for (const auto& f : features) {
        if (static_cast<int>(f.size()) != dim_) {
          throw std::invalid_argument("restore_queue: feature dimension mismatch");
        }
      }
    }
    queues_[class_id] = std::move(features);
  }

 private:
  int capacity_;
  int dim_ = 0;
  Rng rng_;
  std::map<int, std::deque<FeatureVector>> queues_;
};

}  // namespace pwseg
