// One line per acceptance criterion; exit status 0 only when every criterion passes.

#include <algorithm>
#include <cstdio>
#include <exception>

#include "corpus.hpp"

int main() {
  using namespace biharm::corpus;
  int failed = 0;
  auto print = [&](const Row& r) {
    failed += !r.pass;
    std::printf("%s %-4s %-52s value=%.6g bound=%.6g %.1fs/%.0fs | %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                std::find_if(checks().begin(), checks().end(), [&](const Check& c) { return c.name == r.name; })
                    ->summary.c_str(),
                r.value, r.bound, r.seconds, r.limit, r.detail.c_str());
    std::fflush(stdout);
  };
  try {
    run({}, Options{}, print);
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of %zu criteria failed\n", failed, checks().size());
  return failed == 0 ? 0 : 1;
}
