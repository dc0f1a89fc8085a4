#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace urdmu {

// Caller broke a documented precondition (shape mismatch, bad argument).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A forward pass produced NaN/Inf.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(std::string op, const std::string& what)
      : std::runtime_error(what), op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

// Malformed FVB or checkpoint bytes.
class FormatFault : public std::runtime_error {
 public:
  FormatFault(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Bad user-supplied input: missing files, id mismatches, empty pools.
class InputFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric not defined for the given labels (e.g. single-class ROC).
class UndefinedMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The finite-difference oracle saw a non-deterministic function.
class OracleFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace urdmu

namespace urdmu {

// A numeric fault raised inside the training loop, tagged with the 1-based
// optimizer step it happened on.
class TrainingFault : public NumericFault {
 public:
  TrainingFault(std::size_t step, const NumericFault& cause)
      : NumericFault(cause.op(), "step " + std::to_string(step) + ": " +
                                     cause.what()),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace urdmu
