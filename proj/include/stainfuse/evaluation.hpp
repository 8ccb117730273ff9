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

// Agreement statistics and report rendering. Ratings are 0-based classes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stainfuse {

/// Lower median of the scores; throws ContractError when empty.
int consensus(std::span<const int> scores);

struct KappaResult {
  double value = 0.0;
  bool degenerate = false;  // expected agreement was 1
};

/// Linearly weighted Cohen's kappa with w_ij = 1 - |i - j| / (K - 1).
KappaResult weighted_kappa(std::span<const int> a, std::span<const int> b, int classes);

struct BootstrapResult {
  double point = 0.0;  // kappa on the full sample
  double mean = 0.0;
  double lo = 0.0;  // 2.5th percentile
  double hi = 0.0;  // 97.5th percentile
  std::size_t resamples = 0;
  std::size_t degenerate = 0;
  std::size_t n = 0;
};

/// Percentile with linear interpolation between order statistics; q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Resample sample indices with replacement. Deterministic per seed for any `jobs`.
BootstrapResult bootstrap_kappa(std::span<const int> a, std::span<const int> b, int classes, std::size_t resamples,
                                std::uint64_t seed, std::size_t jobs = 1);

/// Groups of (a, b) rating pairs resampled as units; kappa is computed on the pooled pairs.
BootstrapResult bootstrap_kappa_grouped(std::span<const std::vector<std::pair<int, int>>> groups, int classes,
                                        std::size_t resamples, std::uint64_t seed, std::size_t jobs = 1);

/// Per-sample rater scores -> (rater score, consensus of the others or of all) pairs, grouped by sample.
std::vector<std::vector<std::pair<int, int>>> rater_consensus_pairs(std::span<const std::vector<int>> scores,
                                                                     bool leave_one_out);

/// "0.61 [0.57,0.65]"
std::string format_ci(double mean, double lo, double hi, int digits = 2);

struct ReportRow {
  std::string name;  // strategy name, or "pathologists" for the baseline
  std::string endpoint;
  std::size_t n = 0;
  double point = 0.0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t resamples = 0;
  std::size_t degenerate = 0;
};

ReportRow make_row(std::string name, std::string endpoint, const BootstrapResult& r);

/// Header: name,endpoint,n,kappa,boot_mean,ci_lo,ci_hi,resamples,degenerate
std::string encode_report(std::span<const ReportRow> rows);
std::vector<ReportRow> decode_report(std::string_view text);

/// Fixed-width table with one "mean [lo,hi]" cell per endpoint column.
std::string render_table(std::span<const ReportRow> rows);
/// Horizontal bar chart of bootstrap means with CI whiskers.
std::string render_svg(std::span<const ReportRow> rows);

/// Run fn(i) for i in [0, n) on up to `jobs` threads; jobs == 0 means hardware concurrency.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace stainfuse
