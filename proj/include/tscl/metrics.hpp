#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tscl/ode.hpp"
#include "tscl/training.hpp"

namespace tscl {

enum class Measure { Forgetting, Transfer };

inline std::string_view to_string(Measure m) { return m == Measure::Forgetting ? "forgetting" : "transfer"; }

/// An error trace on an integer step grid that contains the switch step.
class SwitchAnchoredTrace {
 public:
  SwitchAnchoredTrace(std::vector<long long> steps, std::vector<double> eps_dag, std::vector<double> eps_ddag,
                      long long switch_step)
      : steps_(std::move(steps)), eps_dag_(std::move(eps_dag)), eps_ddag_(std::move(eps_ddag)) {
    if (steps_.size() != eps_dag_.size() || steps_.size() != eps_ddag_.size())
      throw std::invalid_argument("SwitchAnchoredTrace: column lengths differ");
    if (!std::is_sorted(steps_.begin(), steps_.end()) ||
        std::adjacent_find(steps_.begin(), steps_.end()) != steps_.end())
      throw std::invalid_argument("SwitchAnchoredTrace: steps must be strictly increasing");
    auto it = std::lower_bound(steps_.begin(), steps_.end(), switch_step);
    if (it == steps_.end() || *it != switch_step)
      throw std::invalid_argument("SwitchAnchoredTrace: switch step " + std::to_string(switch_step) + " not on grid");
    switch_index_ = static_cast<std::size_t>(it - steps_.begin());
  }

  SwitchAnchoredTrace(const ErrorTrace& tr, long long switch_step)
      : SwitchAnchoredTrace(tr.steps, tr.eps_dag, tr.eps_ddag, switch_step) {}

  /// ODE trajectory mapped onto steps s = round(tau * D).
  static SwitchAnchoredTrace from_ode(const OdeTrajectory& tr, double switch_time, long long input_dim) {
    std::vector<long long> steps;
    steps.reserve(tr.times.size());
    for (double t : tr.times) steps.push_back(std::llround(t * static_cast<double>(input_dim)));
    return {std::move(steps), tr.eps_dag, tr.eps_ddag, std::llround(switch_time * static_cast<double>(input_dim))};
  }

  const std::vector<long long>& steps() const { return steps_; }
  const std::vector<double>& eps(TaskId t) const { return t == TaskId::Dagger ? eps_dag_ : eps_ddag_; }
  std::size_t switch_index() const { return switch_index_; }
  long long switch_step() const { return steps_[switch_index_]; }
  long long end_step() const { return steps_.back(); }
  long long phase2_length() const { return end_step() - switch_step(); }

  /// Index of step s~ + t; throws if absent.
  std::size_t index_after_switch(long long t) const {
    if (t < 0) throw std::out_of_range("negative offset after switch");
    if (t > phase2_length())
      throw std::out_of_range("offset " + std::to_string(t) + " beyond trace end (" +
                              std::to_string(phase2_length()) + " steps after switch)");
    const long long target = switch_step() + t;
    auto it = std::lower_bound(steps_.begin() + static_cast<std::ptrdiff_t>(switch_index_), steps_.end(), target);
    if (it == steps_.end() || *it != target)
      throw std::invalid_argument("step " + std::to_string(target) + " is not on the logged grid");
    return static_cast<std::size_t>(it - steps_.begin());
  }

 private:
  std::vector<long long> steps_;
  std::vector<double> eps_dag_, eps_ddag_;
  std::size_t switch_index_ = 0;
};

namespace detail {
// Signed change at grid index i relative to the switch; positive is forgetting
// (first task) or transfer (second task).
inline double change(const SwitchAnchoredTrace& tr, Measure m, std::size_t i) {
  const std::size_t s = tr.switch_index();
  if (m == Measure::Forgetting) return tr.eps(TaskId::Dagger)[i] - tr.eps(TaskId::Dagger)[s];
  return tr.eps(TaskId::Ddagger)[s] - tr.eps(TaskId::Ddagger)[i];
}
}  // namespace detail

/// eps_dag(s~ + t) - eps_dag(s~)
inline double forgetting_at(const SwitchAnchoredTrace& tr, long long t) {
  return detail::change(tr, Measure::Forgetting, tr.index_after_switch(t));
}

/// eps_ddag(s~) - eps_ddag(s~ + t)
inline double transfer_at(const SwitchAnchoredTrace& tr, long long t) {
  return detail::change(tr, Measure::Transfer, tr.index_after_switch(t));
}

inline double measure_at(const SwitchAnchoredTrace& tr, Measure m, long long t) {
  return detail::change(tr, m, tr.index_after_switch(t));
}

/// Mean per-step change over the first n steps after the switch.
inline double initial_rate(const SwitchAnchoredTrace& tr, Measure m, int n = 20) {
  if (n < 1) throw std::invalid_argument("initial_rate: n must be >= 1");
  const auto& e = tr.eps(m == Measure::Forgetting ? TaskId::Dagger : TaskId::Ddagger);
  const double sign = m == Measure::Forgetting ? 1.0 : -1.0;
  double acc = 0.0;
  std::size_t prev = tr.index_after_switch(0);
  for (int i = 1; i <= n; ++i) {
    std::size_t cur;
    try {
      cur = tr.index_after_switch(i);
    } catch (const std::exception& ex) {
      throw std::invalid_argument(std::string("initial_rate: insufficient resolution after switch: ") + ex.what());
    }
    acc += sign * (e[cur] - e[prev]);
    prev = cur;
  }
  return acc / static_cast<double>(n);
}

inline double max_measure(const SwitchAnchoredTrace& tr, Measure m) {
  double best = 0.0;
  for (std::size_t i = tr.switch_index(); i < tr.steps().size(); ++i) best = std::max(best, detail::change(tr, m, i));
  return best;
}

inline double max_forgetting(const SwitchAnchoredTrace& tr) { return max_measure(tr, Measure::Forgetting); }
inline double max_transfer(const SwitchAnchoredTrace& tr) { return max_measure(tr, Measure::Transfer); }

/// First post-switch grid index where eps_ddag has reached the best phase-1
/// eps_dag, or the last index if that never happens.
inline std::size_t adjusted_end_index(const SwitchAnchoredTrace& tr) {
  const auto& e1 = tr.eps(TaskId::Dagger);
  const auto& e2 = tr.eps(TaskId::Ddagger);
  const double best = *std::min_element(e1.begin(), e1.begin() + static_cast<std::ptrdiff_t>(tr.switch_index()) + 1);
  for (std::size_t i = tr.switch_index(); i < e2.size(); ++i)
    if (e2[i] <= best) return i;
  return e2.size() - 1;
}

/// Value of the measure at the end of the trace; with `adjusted`, forgetting
/// is read at adjusted_end_index() instead.
inline double long_time(const SwitchAnchoredTrace& tr, Measure m, bool adjusted = false) {
  if (adjusted && m != Measure::Forgetting)
    throw std::invalid_argument("long_time: the adjusted variant is defined for forgetting only");
  return detail::change(tr, m, adjusted ? adjusted_end_index(tr) : tr.steps().size() - 1);
}

using TraceMetric = std::function<double(const SwitchAnchoredTrace&, long long)>;

/// (V, metric(trace, t)) for each run, ordered by V.
inline std::vector<std::pair<double, double>> cross_section(
    const std::vector<std::pair<double, SwitchAnchoredTrace>>& runs, const TraceMetric& metric, long long t) {
  std::vector<std::pair<double, double>> out;
  out.reserve(runs.size());
  for (const auto& [v, tr] : runs) out.emplace_back(v, metric(tr, t));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace tscl
