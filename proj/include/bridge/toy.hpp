#pragma once

#include <cstdint>

#include "bridge/model.hpp"

namespace bridge {

/// Small fully specified objective used by the gradient check: 4 regions,
/// W = H = 4, one message-passing layer, K = 2 and a 6-entry bank.
struct ToyProblem {
  CityDataset city;
  ModelParams params;
  retrieval::MemoryBank bank;
  GraphInput input;
  ObjectiveOptions options;
};

ToyProblem make_toy_problem(std::uint64_t seed);

}  // namespace bridge
