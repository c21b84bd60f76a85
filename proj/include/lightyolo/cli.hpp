#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lightyolo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitBand = 2;

// One "metric:target%±tol" term of --assert; "+-" is accepted for "±".
struct Band {
  std::string metric;  // "params" or "gflops"
  double target_pct = 0.0;
  double tolerance_pp = 0.0;

  bool contains(double value_pct) const;
};

std::vector<Band> parse_bands(std::string_view spec);

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace lightyolo::cli
