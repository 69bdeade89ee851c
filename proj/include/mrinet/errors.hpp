#pragma once

#include <stdexcept>
#include <string>

namespace mrinet {

// Root of every error thrown by the library. The CLI maps ConfigError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement. `axis()` names the offending axis (e.g. "channels").
class DimensionError : public Error {
public:
  DimensionError(std::string axis, const std::string &message)
      : Error("dimension error [" + axis + "]: " + message),
        axis_(std::move(axis)) {}
  const std::string &axis() const noexcept { return axis_; }

private:
  std::string axis_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string &m) : Error("config error: " + m) {}
};

class LookupError : public Error {
public:
  explicit LookupError(const std::string &m) : Error("lookup error: " + m) {}
};

class BlockConstructionError : public Error {
public:
  explicit BlockConstructionError(const std::string &m)
      : Error("block construction error: " + m) {}
};

class TaxonomyError : public Error {
public:
  explicit TaxonomyError(const std::string &m)
      : Error("taxonomy error: " + m) {}
};

class SplitError : public Error {
public:
  explicit SplitError(const std::string &m) : Error("split error: " + m) {}
};

class DecodeError : public Error {
public:
  explicit DecodeError(const std::string &m) : Error("decode error: " + m) {}
};

class IterationError : public Error {
public:
  explicit IterationError(const std::string &m)
      : Error("iteration error: " + m) {}
};

class ImportError : public Error {
public:
  explicit ImportError(const std::string &m) : Error("import error: " + m) {}
};

class CheckpointError : public Error {
public:
  explicit CheckpointError(const std::string &m)
      : Error("checkpoint error: " + m) {}
};

class LabelError : public Error {
public:
  explicit LabelError(const std::string &m) : Error("label error: " + m) {}
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string &m)
      : Error("numeric error: " + m) {}
};

class EvaluationError : public Error {
public:
  explicit EvaluationError(const std::string &m)
      : Error("evaluation error: " + m) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string &m) : Error("io error: " + m) {}
};

// Raised when training stops on a non-finite loss or gradient.
class TrainingHalted : public Error {
public:
  TrainingHalted(const std::string &message, std::string last_good)
      : Error("training halted: " + message +
              (last_good.empty() ? std::string(" (no checkpoint written yet)")
                                 : " (last good checkpoint: " + last_good + ")")),
        last_good_(std::move(last_good)) {}
  const std::string &last_good_checkpoint() const noexcept { return last_good_; }

private:
  std::string last_good_;
};

} // namespace mrinet
