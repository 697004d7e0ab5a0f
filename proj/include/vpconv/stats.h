// Copyright 2026 The VPConv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VPCONV_STATS_H_
#define VPCONV_STATS_H_

#include <string>

namespace vpconv {

// I_x(a, b), the regularized incomplete beta function.
double RegularizedIncompleteBeta(double a, double b, double x);

// Inverse of I_x(a, b) in x for probability p in [0, 1].
double BetaQuantile(double p, double a, double b);

struct Interval {
  double low = 0.0;
  double high = 1.0;

  bool Contains(double v) const { return low <= v && v <= high; }
};

// Exact (Clopper-Pearson) two-sided binomial interval for k successes out of
// n trials. low is the alpha/2 quantile of Beta(k, n - k + 1) (0 when k = 0),
// high the 1 - alpha/2 quantile of Beta(k + 1, n - k) (1 when k = n), with
// alpha = 1 - confidence.
Interval ClopperPearson(int k, int n, double confidence);

inline constexpr double kChanceLevel = 0.5;

struct BinaryCriterionStats {
  std::string criterion;
  int successes = 0;
  int total = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  // True exactly when the interval excludes kChanceLevel.
  bool significant_vs_chance = false;
};

BinaryCriterionStats SummarizeCriterion(std::string criterion, int successes,
                                        int total, double confidence);

}  // namespace vpconv

#endif  // VPCONV_STATS_H_
