#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "voltgrid/env.hpp"
#include "voltgrid/rng.hpp"

namespace voltgrid {

struct Transition {
  Observation obs;
  std::size_t action = 0;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

/// Binary tree of partial sums over a fixed number of leaves. Every internal
/// node is recomputed from its children, so its value depends only on the
/// current leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t leaves);

  std::size_t leaves() const { return n_; }
  double total() const { return nodes_[1]; }
  double get(std::size_t i) const { return nodes_[base_ + i]; }
  void set(std::size_t i, double value);
  /// Smallest i whose inclusive prefix sum exceeds `mass`, restricted to
  /// leaves with positive value. Requires total() > 0.
  std::size_t find(double mass) const;

 private:
  std::size_t n_;
  std::size_t base_;
  std::vector<double> nodes_;
};

/// Ring buffer sampled in proportion to priority^alpha.
class PrioritizedReplay {
 public:
  PrioritizedReplay(std::size_t capacity, double alpha, double priority_floor);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  double alpha() const { return alpha_; }
  double max_priority() const { return max_priority_; }

  /// Stores with the largest priority seen so far (1.0 on an empty history),
  /// overwriting the oldest entry once full.
  void add(Transition t);
  const Transition& at(std::size_t i) const { return items_[i]; }
  /// P(i) = priority_i^alpha / sum over the buffer.
  double probability(std::size_t i) const;

  struct Batch {
    std::vector<std::size_t> indices;
    /// (N·P(i))^-beta divided by the largest value in the batch.
    std::vector<double> weights;
  };
  /// Independent proportional draws with replacement. Requires size() > 0.
  Batch sample(std::size_t batch_size, double beta, Rng& rng) const;
  /// Uniform draws with unit weights, for the unprioritized variant.
  Batch sample_uniform(std::size_t batch_size, Rng& rng) const;

  /// Sets priority_i = |td_i| + floor.
  void update_priorities(const std::vector<std::size_t>& indices,
                         const std::vector<double>& td_errors);

  void save(const std::filesystem::path& path) const;
  /// Throws CorruptFileError, or SpecMismatchError when capacity or alpha
  /// differ from this buffer's.
  void load(const std::filesystem::path& path);

 private:
  std::size_t capacity_;
  double alpha_;
  double floor_;
  double max_priority_ = 1.0;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  std::vector<Transition> items_;
  SumTree tree_;
};

}  // namespace voltgrid
