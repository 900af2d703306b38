#pragma once

#include <cmath>

#include "sfbc/error.hpp"

namespace sfbc::diffusion {

struct ScheduleCoeffs {
  double alpha;  // mean scale of the perturbation kernel
  double sigma;  // std of the perturbation kernel
  double beta;   // instantaneous noise rate
};

/// Variance-preserving SDE with linear beta(t) on t in [0, 1].
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  static constexpr double horizon = 1.0;

  void validate() const {
    require(beta_min > 0.0 && beta_min < beta_max, ErrorKind::InvalidArgument,
            "noise schedule needs 0 < beta_min < beta_max");
  }

  double beta(double t) const { return (beta_max - beta_min) * t + beta_min; }

  /// Integral of beta over [0, t].
  double integrated_beta(double t) const {
    return 0.5 * (beta_max - beta_min) * t * t + beta_min * t;
  }

  ScheduleCoeffs coeffs(double t) const {
    require(t >= 0.0 && t <= horizon, ErrorKind::InvalidArgument,
            "schedule time " + std::to_string(t) + " outside [0, 1]");
    const double integral = integrated_beta(t);
    return {std::exp(-0.5 * integral), std::sqrt(-std::expm1(-integral)), beta(t)};
  }
};

inline ScheduleCoeffs schedule_coeffs(const NoiseSchedule& schedule, double t) {
  return schedule.coeffs(t);
}

}  // namespace sfbc::diffusion
