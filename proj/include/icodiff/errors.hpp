#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icodiff {

// Shapes, orders or channel counts that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite value appeared during training or sampling.
class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reference samples with (near) zero spread in some ROI.
class DegenerateReference : public std::runtime_error {
 public:
  DegenerateReference(std::size_t roi, double stddev)
      : std::runtime_error("degenerate reference set: ROI " + std::to_string(roi) +
                           " has standard deviation " + std::to_string(stddev)),
        roi_(roi) {}
  std::size_t roi() const noexcept { return roi_; }

 private:
  std::size_t roi_;
};

// Malformed files, manifests and configuration values.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace icodiff
