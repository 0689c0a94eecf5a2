#pragma once

#include <stdexcept>
#include <string>

namespace streamal {

// Zero-spread samples, zero MAD, leverage ~1: the input carries no usable scale.
class degenerate_error : public std::runtime_error {
public:
  explicit degenerate_error(const std::string& what) : std::runtime_error(what) {}
};

// Rank-deficient or singular Gram / covariance matrices.
class singular_error : public std::runtime_error {
public:
  explicit singular_error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid scenario/experiment configuration or config-file parse failure.
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace streamal
