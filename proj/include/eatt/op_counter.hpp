#pragma once

#include <cstdint>
#include <utility>

namespace eatt {

// Number of scalar additions and multiplications charged to a computation.
// Subtractions count as additions.
struct OpCount {
  std::uint64_t additions = 0;
  std::uint64_t multiplications = 0;

  OpCount& operator+=(const OpCount& o) {
    additions += o.additions;
    multiplications += o.multiplications;
    return *this;
  }
  friend OpCount operator+(OpCount a, const OpCount& b) { return a += b; }
  bool operator==(const OpCount&) const = default;
};

// What a kernel reports after running. `selections` counts weight rows
// gathered by the selective projection; they are tracked but not priced.
struct OpTally {
  std::uint64_t additions = 0;
  std::uint64_t multiplications = 0;
  std::uint64_t selections = 0;

  OpTally& operator+=(const OpTally& o) {
    additions += o.additions;
    multiplications += o.multiplications;
    selections += o.selections;
    return *this;
  }
  OpCount count() const { return {additions, multiplications}; }
};

#if defined(EATT_OP_COUNTERS)
inline constexpr bool kOpCountersEnabled = true;
#define EATT_TALLY(tally, field, n) ((tally).field += static_cast<std::uint64_t>(n))
#else
inline constexpr bool kOpCountersEnabled = false;
#define EATT_TALLY(tally, field, n) ((void)0)
#endif

namespace counter {

// True while a CountScope is open on the calling thread.
bool active();

// Adds a kernel's tally to the open scope, if any. Forward ops call this;
// backward rules do not, so gradients never show up in a trace.
void charge(const OpTally& tally);

}  // namespace counter

// Opens an instrumented region on the calling thread. Regions do not nest:
// constructing a second scope while one is open throws NestingError.
class CountScope {
 public:
  CountScope();
  ~CountScope();
  CountScope(const CountScope&) = delete;
  CountScope& operator=(const CountScope&) = delete;

  const OpTally& tally() const { return tally_; }

 private:
  OpTally tally_;
};

// Runs `fn` inside a CountScope and returns what it executed.
template <class F>
OpTally instrument(F&& fn) {
  CountScope scope;
  std::forward<F>(fn)();
  return scope.tally();
}

}  // namespace eatt
