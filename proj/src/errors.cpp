#include "etp/errors.hpp"

#include <cstdio>

namespace etp {

namespace {

std::string unreachable_message(double target, double max_achievable) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "speed-up target %.6g is unreachable; maximum achievable is %.6g", target,
                max_achievable);
  return buf;
}

}  // namespace

UnreachableTarget::UnreachableTarget(double target, double max_achievable)
    : Error(unreachable_message(target, max_achievable)), target_(target), max_achievable_(max_achievable) {}

}  // namespace etp
