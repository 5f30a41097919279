#pragma once

#include "adrrl/envs/trajectory.hpp"

namespace adrrl::envs {

// Ring buffer of trajectory windows with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ConfigError("replay buffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  void add(Trajectory traj) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(traj));
    } else {
      items_[next_] = std::move(traj);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Trajectory& operator[](std::size_t i) const { return items_.at(i); }
  const std::vector<Trajectory>& items() const { return items_; }

  std::size_t sample_index() {
    if (items_.empty()) throw UsageError("replay buffer: sampling from an empty buffer");
    return std::uniform_int_distribution<std::size_t>(0, items_.size() - 1)(rng_);
  }

  const Trajectory& sample() { return items_[sample_index()]; }

  std::vector<std::size_t> sample_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = sample_index();
    return idx;
  }

  // A state drawn uniformly over all stored windows and time indices.
  Vector sample_state() {
    const auto& traj = sample();
    const int t = std::uniform_int_distribution<int>(0, traj.length())(rng_);
    return traj.states.row(t).transpose();
  }

  // Flattened windows as columns.
  Matrix tensors() const {
    if (items_.empty()) return {};
    Matrix out(layout_of(items_.front()).dim(), static_cast<Eigen::Index>(items_.size()));
    for (std::size_t i = 0; i < items_.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = flatten(items_[i]);
    return out;
  }

  Rng& rng() { return rng_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Trajectory> items_;
  Rng rng_;
};

}  // namespace adrrl::envs
