#pragma once

#include "json.hpp"

namespace eatt::toy {

// lr(t) = peak * min(t / warmup, 1, (decay_ref / t)^0.5)
struct LrSchedule {
  double peak = 0.001;
  double warmup = 8000.0;
  double decay_ref = 20000.0;

  // Throws DomainError for t < 1.
  double operator()(long t) const;
};

// The default schedule.
double lr_schedule(long t);

void to_json(nlohmann::json& j, const LrSchedule& s);
void from_json(const nlohmann::json& j, LrSchedule& s);

}  // namespace eatt::toy
