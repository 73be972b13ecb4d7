#pragma once

#include <stdexcept>
#include <string>

namespace mgcd {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TapeError : std::runtime_error {
  explicit TapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateStatsError : std::runtime_error {
  explicit DegenerateStatsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SamplerDivergence : std::runtime_error {
  long step;
  double max_abs;
  SamplerDivergence(long step_, double max_abs_, const std::string& msg)
      : std::runtime_error(msg), step(step_), max_abs(max_abs_) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mgcd
