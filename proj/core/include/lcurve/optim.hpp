// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lcurve/curve.hpp"

namespace lcurve {

/// Cosine one-cycle schedule: warm up from peak/div_factor to peak over
/// pct_start * total_steps, then anneal to peak/(div_factor * final_div_factor).
struct OneCycleSchedule {
  std::int64_t total_steps = 1000;
  double peak = 1e-4;
  double pct_start = 0.12;
  double div_factor = 300.0;
  double final_div_factor = 1e4;

  double operator()(std::int64_t step) const;
};

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

/// Moment buffers for one parameter vector.
struct AdamWSlot {
  Vector m;
  Vector v;
};

/// Decoupled weight decay Adam over a list of parameter vectors. Slots that
/// are frozen carry no moment state and are never touched.
class AdamW {
 public:
  AdamW(AdamWParams params, const std::vector<bool>& frozen, Eigen::Index dim);

  /// One update. `grads[i]` is ignored for frozen slots. Throws
  /// std::domain_error on non-finite gradients.
  void step(std::vector<Vector>& params, const std::vector<Vector>& grads, double lr);

  std::int64_t steps_taken() const noexcept { return step_; }
  const std::vector<AdamWSlot>& slots() const noexcept { return slots_; }
  const AdamWParams& params() const noexcept { return params_; }

 private:
  AdamWParams params_;
  std::vector<bool> frozen_;
  std::vector<AdamWSlot> slots_;
  std::int64_t step_ = 0;
};

}  // namespace lcurve
