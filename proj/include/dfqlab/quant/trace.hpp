/* Copyright 2026 The dfqlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dfqlab/error.hpp"

namespace dfq::quant {

enum class ParamGroup { kActScale = 0, kWeightRounding = 1, kWeightScale = 2 };
inline constexpr std::size_t kNumGroups = 3;
inline constexpr std::array<ParamGroup, kNumGroups> kAllGroups = {
    ParamGroup::kActScale, ParamGroup::kWeightRounding, ParamGroup::kWeightScale};

inline std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kActScale: return "act_scale";
    case ParamGroup::kWeightRounding: return "weight_rounding";
    case ParamGroup::kWeightScale: return "weight_scale";
  }
  return "?";
}

inline ParamGroup group_from_string(std::string_view s) {
  for (auto g : kAllGroups)
    if (to_string(g) == s) return g;
  throw ParseError("unknown parameter group '" + std::string(s) + "'");
}

// One optimization step of one block: g(t) per parameter group, i.e. the
// mini-batch mean of per-sample squared gradient L2 norms of the
// reconstruction loss, with the step size and noise scale in effect.
struct TraceStep {
  std::array<double, kNumGroups> grad_sq{};
  std::array<double, kNumGroups> gamma{};
  double sigma = 1.0;
  std::size_t n = 0;
};

struct GradTrace {
  std::size_t block = 0;
  std::vector<TraceStep> steps;

  std::size_t length() const noexcept { return steps.size(); }

  double mean_grad_sq(ParamGroup g) const {
    if (steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& st : steps) s += st.grad_sq[static_cast<std::size_t>(g)];
    return s / static_cast<double>(steps.size());
  }
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const std::vector<GradTrace>& traces) {
  os << "block,step,group,grad_sq_norm,gamma_t,sigma_t,n\n";
  for (const auto& tr : traces)
    for (std::size_t t = 0; t < tr.steps.size(); ++t)
      for (auto g : kAllGroups) {
        const auto gi = static_cast<std::size_t>(g);
        const auto& st = tr.steps[t];
        os << tr.block << ',' << t << ',' << to_string(g) << ',' << format_double(st.grad_sq[gi])
           << ',' << format_double(st.gamma[gi]) << ',' << format_double(st.sigma) << ','
           << st.n << '\n';
      }
}

inline std::vector<GradTrace> read_trace_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != "block,step,group,grad_sq_norm,gamma_t,sigma_t,n")
    throw ParseError("trace CSV: bad header", 1);
  std::vector<GradTrace> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[7];
    for (int i = 0; i < 7; ++i)
      if (!std::getline(ss, f[i], ',')) throw ParseError("trace CSV: missing column", lineno);
    try {
      const auto block = std::stoul(f[0]);
      const auto step = std::stoul(f[1]);
      const auto g = static_cast<std::size_t>(group_from_string(f[2]));
      if (out.empty() || out.back().block != block) out.push_back(GradTrace{block, {}});
      auto& steps = out.back().steps;
      if (step >= steps.size()) steps.resize(step + 1);
      steps[step].grad_sq[g] = std::stod(f[3]);
      steps[step].gamma[g] = std::stod(f[4]);
      steps[step].sigma = std::stod(f[5]);
      steps[step].n = std::stoul(f[6]);
    } catch (const std::logic_error&) {
      throw ParseError("trace CSV: bad number", lineno);
    }
  }
  return out;
}

}  // namespace dfq::quant
