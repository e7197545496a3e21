#include <algorithm>
#include <cmath>

#include "ocskill/errors.hpp"
#include "ocskill/eval/eval.hpp"

namespace ocskill::eval {

std::string to_string(Method m) {
  switch (m) {
    case Method::MP_RL: return "MP_RL";
    case Method::MP_RL_no_transition: return "MP_RL_no_transition";
    case Method::MP_BC: return "MP_BC";
    case Method::MP_Heuristic: return "MP_Heuristic";
    case Method::MP_Replay: return "MP_Replay";
    case Method::SAC_scratch: return "SAC_scratch";
  }
  return "?";
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::goal_id: return "goal_id";
    case Stage::planning: return "planning";
    case Stage::transition: return "transition";
    case Stage::skill: return "skill";
    case Stage::none: return "none";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (auto m : kAllMethods)
    if (to_string(m) == name) return m;
  throw UsageError("unknown method '" + name + "'");
}

bool uses_transition(Method m) {
  return m == Method::MP_RL || m == Method::MP_BC || m == Method::MP_Heuristic || m == Method::MP_Replay;
}

std::pair<double, double> wilson_interval(int successes, int n, double z) {
  if (n <= 0) throw DomainError("wilson_interval: n must be positive");
  if (successes < 0 || successes > n) throw DomainError("wilson_interval: successes outside [0, n]");
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

double iou(const std::array<double, 4>& first, const std::array<double, 4>& second) {
  const bool swap = second < first;
  const auto& a = swap ? second : first;
  const auto& b = swap ? first : second;
  const double ix = std::max(0.0, std::min(a[0] + a[2], b[0] + b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[1] + a[3], b[1] + b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

}  // namespace ocskill::eval
