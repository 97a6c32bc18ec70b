#pragma once

#include <string>
#include <vector>

#include "tsa/graph.hpp"

namespace tsa {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

// Central-difference checks for every differentiable primitive, the attention
// building blocks, and the end-to-end model (width `dim`, sequences of 4
// tokens, one layer) in the full, Var-TA and Var-A wirings.
std::vector<GradCheckCase> run_gradcheck_suite(std::size_t dim = 8, double h = 1e-5,
                                               double tol = 1e-4);

}  // namespace tsa
