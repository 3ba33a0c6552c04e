// SPDX-License-Identifier: Apache-2.0
#include "lcurve/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lcurve {

namespace {

constexpr double kPi = 3.14159265358979323846;

double cosine_anneal(double from, double to, double progress) {
  return to + 0.5 * (from - to) * (1.0 + std::cos(kPi * progress));
}

}  // namespace

double OneCycleSchedule::operator()(std::int64_t step) const {
  if (step < 0 || step > total_steps) {
    throw std::out_of_range("schedule step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
  }
  const double initial = peak / div_factor;
  const double final_lr = initial / final_div_factor;
  const double warmup = pct_start * static_cast<double>(total_steps);
  const auto s = static_cast<double>(step);
  if (s <= warmup) {
    return warmup > 0.0 ? cosine_anneal(initial, peak, s / warmup) : peak;
  }
  const double decay = static_cast<double>(total_steps) - warmup;
  return cosine_anneal(peak, final_lr, (s - warmup) / decay);
}

AdamW::AdamW(AdamWParams params, const std::vector<bool>& frozen, Eigen::Index dim)
    : params_(params), frozen_(frozen), slots_(frozen.size()) {
  for (std::size_t i = 0; i < frozen_.size(); ++i) {
    if (frozen_[i]) continue;
    slots_[i].m = Vector::Zero(dim);
    slots_[i].v = Vector::Zero(dim);
  }
}

void AdamW::step(std::vector<Vector>& params, const std::vector<Vector>& grads, double lr) {
  if (params.size() != frozen_.size() || grads.size() != frozen_.size()) {
    throw std::invalid_argument("AdamW slot count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen_[i]) continue;
    if (grads[i].size() != params[i].size() || params[i].size() != slots_[i].m.size()) {
      throw std::invalid_argument("AdamW dimension mismatch");
    }
    if (!grads[i].allFinite()) throw std::domain_error("non-finite gradient");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen_[i]) continue;
    Vector& p = params[i];
    AdamWSlot& s = slots_[i];
    p *= 1.0 - lr * params_.weight_decay;
    s.m = params_.beta1 * s.m + (1.0 - params_.beta1) * grads[i];
    s.v = params_.beta2 * s.v + (1.0 - params_.beta2) * grads[i].cwiseAbs2();
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double m_hat = s.m[j] / bc1;
      const double v_hat = s.v[j] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + params_.eps);
    }
  }
}

}  // namespace lcurve
