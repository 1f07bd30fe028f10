#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rac/diff/gradcheck.hpp"

namespace rac::harness {

struct GradcheckCase {
  std::string name;
  diff::GradcheckReport report;
};

// Finite-difference checks of every network and loss on a 2v2 Touch-Mark
// model with tiny layers. Stop-gradient inputs (TD targets, advantages, the
// L_Opp target distributions) are computed once and held fixed, since a
// central difference cannot see a detach.
std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed = 0, const diff::GradcheckOptions& options = {});

}  // namespace rac::harness
