#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bner/model.hpp"

namespace bner {

struct GradCheckResult {
    std::string group;  // parameter name
    int checked = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences (eps 1e-5) of the summed sentence loss against
// the analytic gradients, per parameter group, on a reduced configuration
// (BiLSTM 8, FFNN 6, input dims <= 20, c = 3, sentences of length <= 4).
// Entries per group are capped at `max_entries`, sampled deterministically.
std::vector<GradCheckResult> gradcheck(std::uint64_t seed, double tolerance = 1e-4,
                                       int max_entries = 80);

// Same check against an arbitrary model and data (used by tests).
std::vector<GradCheckResult> gradcheck_model(Model& model, const Split& sentences,
                                             std::uint64_t seed, double tolerance,
                                             int max_entries);

}  // namespace bner
