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

#include "stainfuse/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "stainfuse/errors.hpp"
#include "stainfuse/rng.hpp"

namespace stainfuse {

int consensus(std::span<const int> scores) {
  if (scores.empty()) throw ContractError("consensus: no rater scores");
  std::vector<int> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  return s[(s.size() - 1) / 2];
}

KappaResult weighted_kappa(std::span<const int> a, std::span<const int> b, int classes) {
  if (a.size() != b.size()) {
    throw ContractError("weighted_kappa: rating vectors differ in length (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ContractError("weighted_kappa: no ratings");
  if (classes < 2) throw ContractError("weighted_kappa: need at least 2 classes");
  const auto k = static_cast<std::size_t>(classes);
  std::vector<double> ma(k, 0.0), mb(k, 0.0);
  const double n = static_cast<double>(a.size());
  const double span = static_cast<double>(classes - 1);
  double po = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= classes || b[i] < 0 || b[i] >= classes) {
      throw ContractError("weighted_kappa: rating outside [0, " + std::to_string(classes - 1) + "]");
    }
    ma[static_cast<std::size_t>(a[i])] += 1.0;
    mb[static_cast<std::size_t>(b[i])] += 1.0;
    po += 1.0 - std::abs(a[i] - b[i]) / span;
  }
  po /= n;
  const bool constant_a = std::count(ma.begin(), ma.end(), 0.0) == static_cast<std::ptrdiff_t>(k - 1);
  const bool constant_b = std::count(mb.begin(), mb.end(), 0.0) == static_cast<std::ptrdiff_t>(k - 1);
  if (constant_a && constant_b && a[0] == b[0]) return {1.0, true};
  double pe = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double w = 1.0 - std::abs(static_cast<double>(i) - static_cast<double>(j)) / span;
      pe += (ma[i] / n) * (mb[j] / n) * w;
    }
  }
  return {(po - pe) / (1.0 - pe), false};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("percentile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("percentile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

BootstrapResult summarize(double point, std::vector<double> kappas, std::size_t degenerate, std::size_t n) {
  BootstrapResult r;
  r.point = point;
  r.n = n;
  r.resamples = kappas.size();
  r.degenerate = degenerate;
  double sum = 0.0;
  for (double k : kappas) sum += k;
  r.mean = sum / static_cast<double>(kappas.size());
  r.lo = percentile(kappas, 0.025);
  r.hi = percentile(std::move(kappas), 0.975);
  return r;
}

}  // namespace

BootstrapResult bootstrap_kappa(std::span<const int> a, std::span<const int> b, int classes, std::size_t resamples,
                                std::uint64_t seed, std::size_t jobs) {
  if (a.size() < 2) throw ContractError("bootstrap_kappa: need at least 2 ratings");
  if (resamples == 0) throw ContractError("bootstrap_kappa: need at least one resample");
  const double point = weighted_kappa(a, b, classes).value;
  std::vector<double> kappas(resamples);
  std::vector<char> degenerate(resamples, 0);
  parallel_for(resamples, jobs, [&](std::size_t r) {
    Rng rng(derive_seed(seed, 0xb007, r));
    std::vector<int> ra(a.size()), rb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::size_t j = uniform_index(rng, a.size());
      ra[i] = a[j];
      rb[i] = b[j];
    }
    const auto k = weighted_kappa(ra, rb, classes);
    kappas[r] = k.value;
    degenerate[r] = k.degenerate;
  });
  return summarize(point, std::move(kappas), static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1)),
                   a.size());
}

BootstrapResult bootstrap_kappa_grouped(std::span<const std::vector<std::pair<int, int>>> groups, int classes,
                                        std::size_t resamples, std::uint64_t seed, std::size_t jobs) {
  if (groups.size() < 2) throw ContractError("bootstrap_kappa_grouped: need at least 2 groups");
  if (resamples == 0) throw ContractError("bootstrap_kappa_grouped: need at least one resample");
  auto pooled = [&](auto&& pick) {
    std::vector<int> a, b;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (const auto& [x, y] : groups[pick(i)]) {
        a.push_back(x);
        b.push_back(y);
      }
    }
    return weighted_kappa(a, b, classes);
  };
  const double point = pooled([](std::size_t i) { return i; }).value;
  std::vector<double> kappas(resamples);
  std::vector<char> degenerate(resamples, 0);
  parallel_for(resamples, jobs, [&](std::size_t r) {
    Rng rng(derive_seed(seed, 0xb008, r));
    std::vector<std::size_t> pick(groups.size());
    for (auto& p : pick) p = uniform_index(rng, groups.size());
    const auto k = pooled([&](std::size_t i) { return pick[i]; });
    kappas[r] = k.value;
    degenerate[r] = k.degenerate;
  });
  std::size_t pairs = 0;
  for (const auto& g : groups) pairs += g.size();
  return summarize(point, std::move(kappas), static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1)),
                   pairs);
}

std::vector<std::vector<std::pair<int, int>>> rater_consensus_pairs(std::span<const std::vector<int>> scores,
                                                                     bool leave_one_out) {
  std::vector<std::vector<std::pair<int, int>>> groups;
  for (const auto& s : scores) {
    std::vector<std::pair<int, int>> g;
    if (leave_one_out && s.size() < 2) {
      groups.push_back(std::move(g));
      continue;
    }
    for (std::size_t r = 0; r < s.size(); ++r) {
      std::vector<int> others;
      for (std::size_t q = 0; q < s.size(); ++q)
        if (!leave_one_out || q != r) others.push_back(s[q]);
      g.emplace_back(s[r], consensus(others));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::string format_ci(double mean, double lo, double hi, int digits) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f [%.*f,%.*f]", digits, mean, digits, lo, digits, hi);
  return buf;
}

ReportRow make_row(std::string name, std::string endpoint, const BootstrapResult& r) {
  return ReportRow{std::move(name), std::move(endpoint), r.n, r.point, r.mean, r.lo, r.hi, r.resamples, r.degenerate};
}

namespace {

std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
T parse_field(const std::string& s, std::size_t line, const char* field) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("report line " + std::to_string(line) + ": bad " + field + " '" + s + "'", 0);
  }
  return v;
}

constexpr std::string_view kReportHeader = "name,endpoint,n,kappa,boot_mean,ci_lo,ci_hi,resamples,degenerate";

}  // namespace

std::string encode_report(std::span<const ReportRow> rows) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.name + ',' + r.endpoint + ',' + std::to_string(r.n) + ',' + num(r.point) + ',' + num(r.mean) + ',' +
           num(r.lo) + ',' + num(r.hi) + ',' + std::to_string(r.resamples) + ',' + std::to_string(r.degenerate) + '\n';
  }
  return out;
}

std::vector<ReportRow> decode_report(std::string_view text) {
  std::vector<ReportRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kReportHeader) throw ParseError("report: unexpected header '" + line + "'", 0);
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 9) throw ParseError("report line " + std::to_string(line_no) + ": expected 9 fields", 0);
    ReportRow r;
    r.name = f[0];
    r.endpoint = f[1];
    r.n = parse_field<std::size_t>(f[2], line_no, "n");
    r.point = parse_field<double>(f[3], line_no, "kappa");
    r.mean = parse_field<double>(f[4], line_no, "boot_mean");
    r.lo = parse_field<double>(f[5], line_no, "ci_lo");
    r.hi = parse_field<double>(f[6], line_no, "ci_hi");
    r.resamples = parse_field<std::size_t>(f[7], line_no, "resamples");
    r.degenerate = parse_field<std::size_t>(f[8], line_no, "degenerate");
    rows.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError("report: empty input", 0);
  return rows;
}

std::string render_table(std::span<const ReportRow> rows) {
  std::vector<std::string> names, endpoints;
  std::map<std::pair<std::string, std::string>, std::string> cell;
  for (const auto& r : rows) {
    if (std::find(names.begin(), names.end(), r.name) == names.end()) names.push_back(r.name);
    if (std::find(endpoints.begin(), endpoints.end(), r.endpoint) == endpoints.end()) endpoints.push_back(r.endpoint);
    cell[{r.name, r.endpoint}] = format_ci(r.mean, r.lo, r.hi);
  }
  // Baseline row goes last, as in the usual layout.
  if (auto it = std::find(names.begin(), names.end(), "pathologists"); it != names.end()) {
    names.erase(it);
    names.push_back("pathologists");
  }
  std::size_t w0 = std::string_view("model").size();
  for (const auto& n : names) w0 = std::max(w0, n.size());
  std::vector<std::size_t> w(endpoints.size());
  for (std::size_t j = 0; j < endpoints.size(); ++j) {
    w[j] = std::max<std::size_t>(endpoints[j].size(), 17);
  }
  auto pad = [](const std::string& s, std::size_t width) { return s + std::string(width - std::min(width, s.size()), ' '); };
  std::string out = pad("model", w0);
  for (std::size_t j = 0; j < endpoints.size(); ++j) out += "  " + pad(endpoints[j], w[j]);
  out += '\n';
  for (const auto& n : names) {
    std::string line = pad(n, w0);
    for (std::size_t j = 0; j < endpoints.size(); ++j) {
      auto it = cell.find({n, endpoints[j]});
      line += "  " + pad(it == cell.end() ? "-" : it->second, w[j]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string render_svg(std::span<const ReportRow> rows) {
  const double bar_h = 18, gap = 8, left = 190, width = 360, top = 30;
  const double height = top + static_cast<double>(rows.size()) * (bar_h + gap) + 30;
  auto x_of = [&](double k) { return left + width * std::clamp((k + 0.2) / 1.2, 0.0, 1.0); };
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"11\">\n",
                left + width + 120, height);
  out += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\"/>\n", x_of(0),
                top - 10, x_of(0), height - 20);
  out += buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double y = top + static_cast<double>(i) * (bar_h + gap);
    std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"%.1f\">%s / %s</text>\n", y + 13, r.name.c_str(),
                  r.endpoint.c_str());
    out += buf;
    const double x0 = x_of(0), x1 = x_of(r.mean);
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                  std::min(x0, x1), y, std::abs(x1 - x0), bar_h, r.name == "pathologists" ? "#b0b0b0" : "#4a7fb5");
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#000\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#000\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#000\"/>\n",
                  x_of(r.lo), y + bar_h / 2, x_of(r.hi), y + bar_h / 2, x_of(r.lo), y + 4, x_of(r.lo), y + bar_h - 4,
                  x_of(r.hi), y + 4, x_of(r.hi), y + bar_h - 4);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n", left + width + 6, y + 13,
                  format_ci(r.mean, r.lo, r.hi).c_str());
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace stainfuse
