#pragma once

#include <string_view>

namespace tscl {

/// The two tasks of a continual-learning run: teacher "dagger" is learned
/// first, teacher "double dagger" after the switch.
enum class TaskId { Dagger = 0, Ddagger = 1 };

inline constexpr TaskId other(TaskId t) {
  return t == TaskId::Dagger ? TaskId::Ddagger : TaskId::Dagger;
}

inline constexpr int index(TaskId t) { return static_cast<int>(t); }

inline std::string_view to_string(TaskId t) { return t == TaskId::Dagger ? "dagger" : "ddagger"; }

}  // namespace tscl
