#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rome/error.hpp"
#include "rome/tensor.hpp"

namespace rome {

/// One finite-difference disagreement, reported against the analytic value.
struct GradCheckEntry {
  std::string param;
  int64_t flat_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  std::vector<GradCheckEntry> worst;  // sorted by rel_err, descending, capped

  bool ok(double tol) const { return max_rel_err <= tol; }
};

/// Symmetric relative error with a floored denominator. The floor keeps
/// central-difference noise (roughly eps * |loss| / h, about 1e-12 at
/// h = 1e-5) from registering as relative disagreement on near-zero
/// gradients: below 1e-5 the comparison is effectively absolute, so a 1e-4
/// tolerance still demands agreement to 1e-9 there.
inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-5});
  return std::fabs(a - b) / denom;
}

/// Central-difference check of d loss / d param for every element of every
/// named parameter. `forward` must rebuild the whole computation from the
/// current parameter values; it receives a tape pointer that is null during
/// the perturbed evaluations (no gradients needed there, and skipping the
/// tape keeps the 2 x numel forward passes affordable).
///
/// Double precision is required: float rounding drowns the h=1e-5 signal.
template <class S>
GradCheckReport finite_diff_check(std::function<Tensor<S>(Tape<S>*)> forward,
                                  const std::vector<std::pair<std::string, Tensor<S>*>>& params,
                                  S h = S(1e-5), size_t keep_worst = 10) {
  static_assert(sizeof(S) >= 8, "finite_diff_check needs double precision scalars");
  for (auto& [name, p] : params) {
    p->enable_grad();
    p->zero_grad();
  }
  Tape<S> tape;
  Tensor<S> loss = forward(&tape);
  if (!loss.is_scalar())
    throw ValueError("finite_diff_check: loss must be scalar, got " + shape_str(loss.shape));
  backward(loss, tape);

  GradCheckReport report;
  for (auto& [name, p] : params) {
    const int64_t n = p->numel();
    for (int64_t i = 0; i < n; ++i) {
      const S saved = p->at(i);
      p->at(i) = saved + h;
      const double up = static_cast<double>(forward(nullptr).at(0));
      p->at(i) = saved - h;
      const double down = static_cast<double>(forward(nullptr).at(0));
      p->at(i) = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double analytic = static_cast<double>((*p->grad)[static_cast<size_t>(i)]);
      const double e = rel_err(analytic, numeric);
      ++report.checked;
      if (e > report.max_rel_err) report.max_rel_err = e;
      if (report.worst.size() < keep_worst || e > report.worst.back().rel_err) {
        report.worst.push_back({name, i, analytic, numeric, e});
        std::sort(report.worst.begin(), report.worst.end(),
                  [](const GradCheckEntry& a, const GradCheckEntry& b) {
                    return a.rel_err > b.rel_err;
                  });
        if (report.worst.size() > keep_worst) report.worst.resize(keep_worst);
      }
    }
  }
  return report;
}

}  // namespace rome
