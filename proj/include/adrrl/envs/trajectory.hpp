#pragma once

#include "adrrl/common.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace adrrl::envs {

// Fixed-length window: L+1 states, L actions, L rewards.
struct Trajectory {
  Matrix states;   // (L+1) x d_s
  Matrix actions;  // L x d_a
  Vector rewards;  // L
  double gamma = 0.99;

  int length() const { return static_cast<int>(actions.rows()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  int action_dim() const { return static_cast<int>(actions.cols()); }

  void validate() const {
    if (states.rows() != actions.rows() + 1 || rewards.size() != actions.rows())
      throw ConfigError("trajectory: inconsistent lengths");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("trajectory: gamma must lie in (0, 1]");
    if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite())
      throw ConfigError("trajectory: non-finite entries");
  }
};

inline double discounted_return(const Eigen::Ref<const Vector>& rewards, double gamma) {
  double total = 0.0, discount = 1.0;
  for (Eigen::Index t = 0; t < rewards.size(); ++t) {
    total += discount * rewards[t];
    discount *= gamma;
  }
  return total;
}

inline double discounted_return(const Trajectory& traj) { return discounted_return(traj.rewards, traj.gamma); }

// Flattened layout of a trajectory tensor: all states row-major, then all
// actions row-major. The state block is therefore the prefix of length
// (L+1) * d_s and s_0 occupies entries [0, d_s).
struct TrajectoryLayout {
  int length = 10;
  int state_dim = 2;
  int action_dim = 1;

  int state_block() const { return (length + 1) * state_dim; }
  int action_block() const { return length * action_dim; }
  int dim() const { return state_block() + action_block(); }
  int state_offset(int t) const { return t * state_dim; }
  int action_offset(int t) const { return state_block() + t * action_dim; }

  // 1 on state entries, 0 on action entries.
  Vector state_mask() const {
    Vector m = Vector::Zero(dim());
    m.head(state_block()).setOnes();
    return m;
  }

  bool operator==(const TrajectoryLayout&) const = default;
};

inline TrajectoryLayout layout_of(const Trajectory& t) {
  return {t.length(), t.state_dim(), t.action_dim()};
}

inline Vector flatten(const Trajectory& traj) {
  const auto layout = layout_of(traj);
  Vector out(layout.dim());
  for (int t = 0; t <= layout.length; ++t)
    out.segment(layout.state_offset(t), layout.state_dim) = traj.states.row(t).transpose();
  for (int t = 0; t < layout.length; ++t)
    out.segment(layout.action_offset(t), layout.action_dim) = traj.actions.row(t).transpose();
  return out;
}

// Rewards are left at zero; label them separately.
inline Trajectory unflatten(const Eigen::Ref<const Vector>& flat, const TrajectoryLayout& layout, double gamma) {
  if (flat.size() != layout.dim()) throw ConfigError("trajectory: flat tensor has wrong size");
  Trajectory traj;
  traj.states.resize(layout.length + 1, layout.state_dim);
  traj.actions.resize(layout.length, layout.action_dim);
  traj.rewards = Vector::Zero(layout.length);
  traj.gamma = gamma;
  for (int t = 0; t <= layout.length; ++t)
    traj.states.row(t) = flat.segment(layout.state_offset(t), layout.state_dim).transpose();
  for (int t = 0; t < layout.length; ++t)
    traj.actions.row(t) = flat.segment(layout.action_offset(t), layout.action_dim).transpose();
  return traj;
}

// CSV: one row per timestep "t,s0..,a0..,r". The final row (t = L) carries
// only the state; its action and reward cells are empty.
inline void write_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (int j = 0; j < traj.state_dim(); ++j) os << ",s" << j;
  for (int j = 0; j < traj.action_dim(); ++j) os << ",a" << j;
  os << ",r\n";
  os << std::setprecision(17);
  for (int t = 0; t <= traj.length(); ++t) {
    os << t;
    for (int j = 0; j < traj.state_dim(); ++j) os << ',' << traj.states(t, j);
    for (int j = 0; j < traj.action_dim(); ++j) {
      os << ',';
      if (t < traj.length()) os << traj.actions(t, j);
    }
    os << ',';
    if (t < traj.length()) os << traj.rewards[t];
    os << '\n';
  }
}

inline Trajectory read_csv(std::istream& is, double gamma) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("trajectory csv: missing header");
  int ds = 0, da = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (!cell.empty() && cell[0] == 's') ++ds;
      if (!cell.empty() && cell[0] == 'a') ++da;
    }
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (static_cast<int>(cells.size()) != 2 + ds + da) throw FormatError("trajectory csv: bad row width");
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw FormatError("trajectory csv: no rows");
  const int L = static_cast<int>(rows.size()) - 1;
  Trajectory traj;
  traj.gamma = gamma;
  traj.states.resize(L + 1, ds);
  traj.actions.resize(L, da);
  traj.rewards.resize(L);
  for (int t = 0; t <= L; ++t) {
    for (int j = 0; j < ds; ++j) traj.states(t, j) = std::stod(rows[t][1 + j]);
    if (t < L) {
      for (int j = 0; j < da; ++j) traj.actions(t, j) = std::stod(rows[t][1 + ds + j]);
      traj.rewards[t] = std::stod(rows[t][1 + ds + da]);
    }
  }
  traj.validate();
  return traj;
}

}  // namespace adrrl::envs
