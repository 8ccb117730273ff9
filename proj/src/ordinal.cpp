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

#include "stainfuse/ordinal.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "stainfuse/errors.hpp"

namespace stainfuse {

namespace {

std::atomic<std::uint64_t> g_underflow{0};

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid_value(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double inverse_softplus(double y) { return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y)); }

void require_monotone(std::span<const double> alpha) {
  if (!is_monotone(alpha)) throw ContractError("cumulative link: thresholds must be non-decreasing");
}

struct Interval {
  double lower, upper;  // alpha_{y-1} - s and alpha_y - s, infinite at the ends
};

Interval interval(double s, std::span<const double> alpha, int y) {
  const double inf = std::numeric_limits<double>::infinity();
  return {y == 0 ? -inf : alpha[y - 1] - s, y == static_cast<int>(alpha.size()) ? inf : alpha[y] - s};
}

double interval_probability(const Interval& iv) {
  // Work in whichever tail keeps the difference away from catastrophic cancellation.
  if (iv.lower > 0.0) return gauss_cdf(-iv.lower) - gauss_cdf(-iv.upper);
  return gauss_cdf(iv.upper) - gauss_cdf(iv.lower);
}

double pdf_or_zero(double x) { return std::isinf(x) ? 0.0 : gauss_pdf(x); }

void check_class(int y, std::size_t classes) {
  if (y < 0 || y >= static_cast<int>(classes)) {
    throw ContractError("cumulative link: class " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes - 1) + "]");
  }
}

}  // namespace

std::vector<double> effective_thresholds(std::span<const double> raw) {
  std::vector<double> alpha(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) alpha[i] = i == 0 ? raw[0] : alpha[i - 1] + softplus_value(raw[i]);
  return alpha;
}

Tensor monotone_thresholds(Tape& tape, const Tensor& raw) {
  if (raw.rank() != 2 || raw.rows() != 1) throw ShapeError("thresholds must be a 1 x (K-1) row, got " + shape_string(raw.shape()));
  Tensor out = make_output(raw.shape());
  const auto alpha = effective_thresholds(raw.values());
  std::copy(alpha.begin(), alpha.end(), out.values().begin());
  check_finite(out, "monotone_thresholds");
  if (tape.needs({&raw})) {
    auto rn = raw.node();
    tape.record("monotone_thresholds", out, [rn](std::span<const double> g) {
      auto& gr = grad_buffer(*rn);
      double tail = 0.0;
      for (std::size_t i = g.size(); i-- > 0;) {
        tail += g[i];
        gr[i] += (i == 0 ? 1.0 : sigmoid_value(rn->data[i])) * tail;
      }
    });
  }
  return out;
}

std::vector<double> raw_from_thresholds(std::span<const double> alpha, double min_gap) {
  std::vector<double> raw(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    raw[i] = i == 0 ? alpha[0] : inverse_softplus(std::max(alpha[i] - alpha[i - 1], min_gap));
  }
  return raw;
}

bool is_monotone(std::span<const double> alpha) {
  for (std::size_t i = 1; i < alpha.size(); ++i)
    if (!(alpha[i] >= alpha[i - 1])) return false;
  return true;
}

std::vector<double> cl_probs(double s, std::span<const double> alpha) {
  require_monotone(alpha);
  std::vector<double> p(alpha.size() + 1);
  for (std::size_t y = 0; y < p.size(); ++y) p[y] = interval_probability(interval(s, alpha, static_cast<int>(y)));
  return p;
}

double cl_loss(double s, std::span<const double> alpha, int y) {
  require_monotone(alpha);
  check_class(y, alpha.size() + 1);
  double p = interval_probability(interval(s, alpha, y));
  if (p < kProbabilityFloor) {
    ++g_underflow;
    p = kProbabilityFloor;
  }
  return -std::log(p);
}

int predict_class(double s, std::span<const double> alpha) {
  const auto p = cl_probs(s, alpha);
  int best = 0;
  for (std::size_t y = 1; y < p.size(); ++y)
    if (p[y] > p[best]) best = static_cast<int>(y);
  return best;
}

Tensor cumulative_link_nll(Tape& tape, const Tensor& s, const Tensor& alpha, std::span<const int> y) {
  if (s.rank() != 2 || s.cols() != 1) throw ShapeError("cumulative_link_nll: scores must be n x 1, got " + shape_string(s.shape()));
  if (alpha.rank() != 2 || alpha.rows() != 1) {
    throw ShapeError("cumulative_link_nll: thresholds must be a row, got " + shape_string(alpha.shape()));
  }
  if (y.size() != s.rows()) {
    throw ShapeError("cumulative_link_nll: " + std::to_string(y.size()) + " labels for " + std::to_string(s.rows()) +
                     " scores");
  }
  if (y.empty()) throw ContractError("cumulative_link_nll: empty batch");
  const auto a = alpha.values();
  require_monotone(a);
  const std::size_t n = y.size();
  std::vector<Interval> iv(n);
  std::vector<double> prob(n);
  std::vector<char> clamped(n, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    check_class(y[i], a.size() + 1);
    iv[i] = interval(s.values()[i], a, y[i]);
    prob[i] = interval_probability(iv[i]);
    if (prob[i] < kProbabilityFloor) {
      ++g_underflow;
      clamped[i] = 1;
      prob[i] = kProbabilityFloor;
    }
    total -= std::log(prob[i]);
  }
  Tensor out = make_output({1, 1});
  out.values()[0] = total / static_cast<double>(n);
  check_finite(out, "cumulative_link_nll");
  if (tape.needs({&s, &alpha})) {
    auto sn = s.node();
    auto an = alpha.node();
    std::vector<int> labels(y.begin(), y.end());
    tape.record("cumulative_link_nll", out,
                [sn, an, labels = std::move(labels), iv = std::move(iv), prob = std::move(prob),
                 clamped = std::move(clamped)](std::span<const double> g) {
                  const double scale = g[0] / static_cast<double>(labels.size());
                  auto& gs = grad_buffer(*sn);
                  auto& ga = grad_buffer(*an);
                  const int last = static_cast<int>(an->data.size());
                  for (std::size_t i = 0; i < labels.size(); ++i) {
                    if (clamped[i]) continue;
                    const double pu = pdf_or_zero(iv[i].upper);
                    const double pl = pdf_or_zero(iv[i].lower);
                    const double inv = -scale / prob[i];
                    gs[i] += inv * (pl - pu);
                    if (labels[i] < last) ga[labels[i]] += inv * pu;
                    if (labels[i] > 0) ga[labels[i] - 1] -= inv * pl;
                  }
                });
  }
  return out;
}

std::uint64_t cl_underflow_count() { return g_underflow.load(); }
void reset_cl_underflow_count() { g_underflow = 0; }

RaterIndex::RaterIndex(std::vector<std::string> raters) {
  std::sort(raters.begin(), raters.end());
  raters.erase(std::unique(raters.begin(), raters.end()), raters.end());
  raters_ = std::move(raters);
  for (std::size_t i = 0; i < raters_.size(); ++i) slot_[raters_[i]] = i;
}

std::size_t RaterIndex::at(const std::string& rater) const {
  auto it = slot_.find(rater);
  if (it == slot_.end()) throw ContractError("unknown rater '" + rater + "'");
  return it->second;
}

Tensor apply_rater_bias(Tape& tape, const Tensor& s, const Tensor& biases, std::span<const std::size_t> rater) {
  if (s.rank() != 2 || s.cols() != 1 || s.rows() != rater.size()) {
    throw ShapeError("apply_rater_bias: scores " + shape_string(s.shape()) + " for " + std::to_string(rater.size()) +
                     " rater slots");
  }
  for (auto r : rater) {
    if (r >= biases.size()) {
      throw ContractError("apply_rater_bias: rater slot " + std::to_string(r) + " outside " +
                          std::to_string(biases.size()) + " known raters");
    }
  }
  return add(tape, s, take(tape, biases, rater));
}

void center_biases(Tensor& biases) {
  auto b = biases.values();
  if (b.empty()) return;
  double mean = 0.0;
  for (double v : b) mean += v;
  mean /= static_cast<double>(b.size());
  for (double& v : b) v -= mean;
}

double gauss_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("gauss_quantile: p must lie in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gauss_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> initial_thresholds(std::span<const int> labels, int classes) {
  if (classes < 2) throw ContractError("initial_thresholds: need at least 2 classes");
  if (labels.empty()) throw ContractError("initial_thresholds: no training labels");
  std::vector<double> count(static_cast<std::size_t>(classes), 0.0);
  for (int y : labels) {
    check_class(y, count.size());
    count[static_cast<std::size_t>(y)] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  const double edge = 0.5 / n;
  std::vector<double> alpha(static_cast<std::size_t>(classes - 1));
  double cum = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    cum += count[k];
    alpha[k] = gauss_quantile(std::clamp(cum / n, edge, 1.0 - edge));
  }
  return alpha;
}

}  // namespace stainfuse
