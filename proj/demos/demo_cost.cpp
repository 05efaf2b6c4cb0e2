// Per-stage cost of the two presets on a 320x180 input, and how the
// split ratio trades parameters against work.
#include <cstdio>

#include "splitsr/cost.hpp"

using namespace splitsr;

int main() {
  for (const char* name : {"latency", "accuracy"}) {
    const auto r = count_config(NetworkConfig::preset(name), 180, 320);
    std::printf("%s preset: %llu params, %.2f GMAC\n", name, static_cast<unsigned long long>(r.params), r.macs / 1e9);
    for (const auto& s : r.per_stage)
      std::printf("  %-20s %9llu params %8.3f GMAC\n", s.name.c_str(), static_cast<unsigned long long>(s.params),
                  s.macs / 1e9);
  }
  std::printf("\nalpha   params   GMAC   split-block reduction\n");
  for (double alpha : {0.125, 0.25, 0.5, 1.0}) {
    auto c = NetworkConfig::latency_focused();
    c.alpha = alpha;
    const auto r = count_config(c, 180, 320);
    std::printf("%-6g %8llu %6.2f   %.4f\n", alpha, static_cast<unsigned long long>(r.params), r.macs / 1e9,
                reduction_split(alpha));
  }
}
