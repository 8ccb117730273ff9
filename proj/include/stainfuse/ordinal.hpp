// Copyright 2026 The stainfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Gaussian cumulative-link ordinal head. Classes are 0-based: y in [0, K-1].
//
//   P(y <= k) = Phi(alpha_k - s),  alpha_0 <= alpha_1 <= ... <= alpha_{K-2}
//
// Effective thresholds come from unconstrained raw values through
// alpha_0 = r_0, alpha_i = alpha_{i-1} + softplus(r_i).

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stainfuse/tensor.hpp"

namespace stainfuse {

/// Probabilities below this are clamped inside the loss.
inline constexpr double kProbabilityFloor = 1e-300;

std::vector<double> effective_thresholds(std::span<const double> raw);
/// Differentiable version of effective_thresholds on a 1 x (K-1) row.
Tensor monotone_thresholds(Tape& tape, const Tensor& raw);
/// Inverse of effective_thresholds; gaps below `min_gap` are widened to it.
std::vector<double> raw_from_thresholds(std::span<const double> alpha, double min_gap = 1e-3);

bool is_monotone(std::span<const double> alpha);

/// Class probabilities p_0..p_{K-1}. Throws ContractError for decreasing thresholds.
std::vector<double> cl_probs(double s, std::span<const double> alpha);
/// -log p_y, with p_y clamped at kProbabilityFloor.
double cl_loss(double s, std::span<const double> alpha, int y);
/// argmax_y p_y, ties to the lower class.
int predict_class(double s, std::span<const double> alpha);

/// Mean of -log p_{y_i}(s_i) over rows of `s` (n x 1) against thresholds `alpha` (1 x (K-1)).
Tensor cumulative_link_nll(Tape& tape, const Tensor& s, const Tensor& alpha, std::span<const int> y);

/// Number of clamped probabilities seen by cl_loss and cumulative_link_nll in this process.
std::uint64_t cl_underflow_count();
void reset_cl_underflow_count();

/// Maps rater ids to bias slots in a fixed (sorted) order.
class RaterIndex {
 public:
  RaterIndex() = default;
  explicit RaterIndex(std::vector<std::string> raters);

  /// Throws ContractError for a rater never seen at construction.
  std::size_t at(const std::string& rater) const;
  bool contains(const std::string& rater) const { return slot_.count(rater) != 0; }
  const std::vector<std::string>& raters() const { return raters_; }
  std::size_t size() const { return raters_.size(); }

 private:
  std::vector<std::string> raters_;
  std::map<std::string, std::size_t> slot_;
};

/// s_i + b[rater_i]; `s` is n x 1, `biases` is 1 x R.
Tensor apply_rater_bias(Tape& tape, const Tensor& s, const Tensor& biases, std::span<const std::size_t> rater);

/// Subtract the mean so the biases sum to zero.
void center_biases(Tensor& biases);

/// Inverse standard normal CDF by bisection on gauss_cdf.
double gauss_quantile(double p);

/// Thresholds at the Gaussian quantiles of the cumulative label marginal (0-based labels).
std::vector<double> initial_thresholds(std::span<const int> labels, int classes);

}  // namespace stainfuse
