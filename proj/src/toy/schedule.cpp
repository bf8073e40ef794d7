#include "eatt/toy/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eatt/error.hpp"

namespace eatt::toy {

double LrSchedule::operator()(long t) const {
  if (t < 1) throw DomainError("lr_schedule: step must be >= 1, got " + std::to_string(t));
  const double td = static_cast<double>(t);
  return peak * std::min({td / warmup, 1.0, std::sqrt(decay_ref / td)});
}

double lr_schedule(long t) { return LrSchedule{}(t); }

void to_json(nlohmann::json& j, const LrSchedule& s) {
  j = {{"peak", s.peak}, {"warmup", s.warmup}, {"decay_ref", s.decay_ref}};
}

void from_json(const nlohmann::json& j, LrSchedule& s) {
  for (const auto& [key, value] : j.items()) {
    if (key == "peak")
      s.peak = value.get<double>();
    else if (key == "warmup")
      s.warmup = value.get<double>();
    else if (key == "decay_ref")
      s.decay_ref = value.get<double>();
    else
      throw FormatError("schedule config: unknown key '" + key + "'");
  }
  if (!(s.peak > 0) || !(s.warmup > 0) || !(s.decay_ref > 0))
    throw DomainError("schedule: peak, warmup and decay_ref must be positive");
}

}  // namespace eatt::toy
