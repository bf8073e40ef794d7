#include "eatt/op_counter.hpp"

#include "eatt/error.hpp"

namespace eatt {

namespace {
thread_local OpTally* g_active = nullptr;
}

namespace counter {

bool active() { return g_active != nullptr; }

void charge(const OpTally& tally) {
  if (g_active) *g_active += tally;
}

}  // namespace counter

CountScope::CountScope() {
  if (g_active) throw NestingError("instrumented regions cannot be nested");
  g_active = &tally_;
}

CountScope::~CountScope() { g_active = nullptr; }

}  // namespace eatt
