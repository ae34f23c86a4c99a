#pragma once

#include <stdexcept>
#include <string>

namespace reidaug {

/// Invalid caller-supplied argument (sizes, ranges, shapes).
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Shape mismatch inside an operator; names the node and the offending dimension.
class ShapeError : public ArgumentError {
public:
  ShapeError(const std::string &node, const std::string &dimension, const std::string &detail)
      : ArgumentError(node + ": shape mismatch in " + dimension + " (" + detail + ")"), node_(node),
        dimension_(dimension) {}

  const std::string &node() const noexcept { return node_; }
  const std::string &dimension() const noexcept { return dimension_; }

private:
  std::string node_;
  std::string dimension_;
};

/// API misuse, e.g. backward() without a retained forward context.
class UsageError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training stopped on a non-finite loss. The last good state is kept by the caller.
class TrainingAborted : public std::runtime_error {
public:
  TrainingAborted(const std::string &what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

private:
  int epoch_;
};

} // namespace reidaug
