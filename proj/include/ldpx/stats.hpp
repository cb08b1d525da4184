//
// Copyright 2026 The ldpx Authors
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
//
#pragma once

#include <optional>
#include <span>

namespace ldpx::stats {

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> v);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

enum class TTestKind {
  Regular,
  ExactShift,  // constant non-zero difference: zero variance, t infinite
  ExactTie,    // all differences zero
};

struct TTestResult {
  TTestKind kind = TTestKind::Regular;
  double t = 0.0;
  double df = 0.0;
  double mean_difference = 0.0;
  std::optional<double> p_two_sided;

  // p for the alternative mean(a - b) > 0; undefined for degenerate kinds.
  std::optional<double> p_greater() const;
};

// Dependent (paired) two-sample t-test on a - b. Throws SizeError unless
// both have the same length >= 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace ldpx::stats
