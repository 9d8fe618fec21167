#include "voltgrid/replay.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "voltgrid/error.hpp"

namespace voltgrid {

namespace {

constexpr std::string_view kReplayMagic = "VGRB";
constexpr std::uint32_t kReplayVersion = 1;

Eigen::VectorXd as_vector(const Observation& obs) {
  return Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
}

Observation as_observation(const Eigen::VectorXd& v) {
  return Observation(v.data(), v.data() + v.size());
}

}  // namespace

SumTree::SumTree(std::size_t leaves) : n_(leaves), base_(1) {
  while (base_ < std::max<std::size_t>(n_, 1)) base_ *= 2;
  nodes_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t i, double value) {
  std::size_t node = base_ + i;
  nodes_[node] = value;
  for (node /= 2; node >= 1; node /= 2) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
}

std::size_t SumTree::find(double mass) const {
  mass = std::clamp(mass, 0.0, total());
  std::size_t node = 1;
  while (node < base_) {
    const std::size_t left = 2 * node;
    if (mass < nodes_[left]) {
      node = left;
    } else {
      mass -= nodes_[left];
      node = left + 1;
    }
  }
  std::size_t i = node - base_;
  // Rounding at the right edge can land on an empty leaf.
  while (i > 0 && (i >= n_ || nodes_[base_ + i] <= 0.0)) --i;
  return i;
}

PrioritizedReplay::PrioritizedReplay(std::size_t capacity, double alpha, double priority_floor)
    : capacity_(capacity), alpha_(alpha), floor_(priority_floor), tree_(capacity) {
  if (capacity == 0) throw ConfigError("replay.capacity", "must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 4096));
}

void PrioritizedReplay::add(Transition t) {
  if (size_ < capacity_) {
    items_.push_back(std::move(t));
    ++size_;
  } else {
    items_[next_] = std::move(t);
  }
  tree_.set(next_, std::pow(max_priority_, alpha_));
  next_ = (next_ + 1) % capacity_;
}

double PrioritizedReplay::probability(std::size_t i) const { return tree_.get(i) / tree_.total(); }

PrioritizedReplay::Batch PrioritizedReplay::sample(std::size_t batch_size, double beta,
                                                   Rng& rng) const {
  if (size_ == 0) throw StateError("sampling from an empty replay buffer");
  Batch b;
  b.indices.reserve(batch_size);
  b.weights.reserve(batch_size);
  const double total = tree_.total();
  const double n = static_cast<double>(size_);
  double max_w = 0.0;
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t i = tree_.find(rng.uniform() * total);
    const double w = std::pow(n * tree_.get(i) / total, -beta);
    b.indices.push_back(i);
    b.weights.push_back(w);
    max_w = std::max(max_w, w);
  }
  for (double& w : b.weights) w /= max_w;
  return b;
}

PrioritizedReplay::Batch PrioritizedReplay::sample_uniform(std::size_t batch_size,
                                                           Rng& rng) const {
  if (size_ == 0) throw StateError("sampling from an empty replay buffer");
  Batch b;
  for (std::size_t k = 0; k < batch_size; ++k) b.indices.push_back(rng.below(size_));
  b.weights.assign(batch_size, 1.0);
  return b;
}

void PrioritizedReplay::update_priorities(const std::vector<std::size_t>& indices,
                                          const std::vector<double>& td_errors) {
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size_) throw StateError("priority update for an empty slot");
    const double p = std::abs(td_errors[k]) + floor_;
    if (!std::isfinite(p)) throw StateError("non-finite priority");
    tree_.set(indices[k], std::pow(p, alpha_));
    max_priority_ = std::max(max_priority_, p);
  }
}

void PrioritizedReplay::save(const std::filesystem::path& path) const {
  detail::BinaryWriter out(kReplayMagic, kReplayVersion);
  out.put<std::uint64_t>(capacity_);
  out.put<double>(alpha_);
  out.put<double>(floor_);
  out.put<double>(max_priority_);
  out.put<std::uint64_t>(next_);
  out.put<std::uint64_t>(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& t = items_[i];
    out.put_vector(as_vector(t.obs));
    out.put<std::uint64_t>(t.action);
    out.put<double>(t.reward);
    out.put_vector(as_vector(t.next_obs));
    out.put<std::uint8_t>(t.done ? 1 : 0);
    out.put<double>(tree_.get(i));
  }
  out.write(path);
}

void PrioritizedReplay::load(const std::filesystem::path& path) {
  detail::BinaryReader in(path, kReplayMagic, kReplayVersion);
  const auto capacity = in.get<std::uint64_t>();
  const double alpha = in.get<double>();
  const double floor = in.get<double>();
  if (capacity != capacity_ || alpha != alpha_ || floor != floor_) {
    throw SpecMismatchError(path.string() + ": replay buffer settings differ from the config");
  }
  const double max_priority = in.get<double>();
  const auto next = in.get<std::uint64_t>();
  const auto size = in.get<std::uint64_t>();
  if (size > capacity || next >= capacity || (size < capacity && next != size)) {
    in.corrupt("inconsistent ring position");
  }
  std::vector<Transition> items;
  SumTree tree(capacity_);
  for (std::size_t i = 0; i < size; ++i) {
    Transition t;
    t.obs = as_observation(in.get_vector());
    t.action = in.get<std::uint64_t>();
    t.reward = in.get<double>();
    t.next_obs = as_observation(in.get_vector());
    t.done = in.get<std::uint8_t>() != 0;
    const double leaf = in.get<double>();
    if (!(leaf > 0.0) || !std::isfinite(leaf)) in.corrupt("non-positive priority");
    tree.set(i, leaf);
    items.push_back(std::move(t));
  }
  in.expect_end();
  max_priority_ = max_priority;
  next_ = next;
  size_ = size;
  items_ = std::move(items);
  tree_ = std::move(tree);
}

}  // namespace voltgrid
