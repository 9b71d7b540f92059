// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of every differentiable primitive and of
// a small Conformer.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "megc/tensor.hpp"

namespace megc::nn {

/// |a - n| / max(|a|, |n|, floor): relative, with a floor so that gradients
/// that vanish analytically are compared absolutely.
inline constexpr double kGradcheckFloor = 1e-4;
double gradient_relative_error(double analytic, double numeric);

using ScalarFn = std::function<Tensor(const std::vector<Tensor>& inputs)>;

struct GradientComparison {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Backpropagates `f(inputs)` once, then perturbs every element of every
/// input by +-step. `corrupt` scales the analytic gradient (fault injection).
GradientComparison compare_gradients(const ScalarFn& f, std::vector<Tensor> inputs, double step = 1e-5,
                                     double corrupt = 1.0);

struct GradcheckEntry {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool pass = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Scales the analytic gradient of the named op by (1 + 1e-3).
  std::optional<std::string> inject_fault;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  bool pass() const;
  /// Ops that failed, in report order.
  std::vector<std::string> failures() const;
  /// One line per op: name, max relative error, PASS/FAIL.
  std::string text() const;
};

/// Names of every checked op, in report order; the last is the toy model.
const std::vector<std::string>& gradcheck_ops();

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace megc::nn
