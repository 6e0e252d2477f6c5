#pragma once

#include <map>
#include <string>
#include <vector>

#include "bner/data.hpp"

namespace bner {

struct PrfCounts {
    long long gold = 0;
    long long predicted = 0;
    long long correct = 0;

    double precision() const { return predicted > 0 ? double(correct) / double(predicted) : 0.0; }
    double recall() const { return gold > 0 ? double(correct) / double(gold) : 0.0; }
    double f1() const {
        double p = precision(), r = recall();
        return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
};

struct EvalReport {
    PrfCounts micro;
    std::map<std::string, PrfCounts> per_category;

    double macro_f1() const;
    std::string to_json() const;
};

// Exact-match scoring: a prediction is correct iff the identical
// (start, end, category) triple is gold in the sentence with the same id.
// Duplicate predictions collapse under set semantics. Throws DataError if the
// two splits are not aligned by sentence id.
EvalReport evaluate(const Split& gold, const Split& predicted);

// Fixed-width comparison table, micro P/R/F1 as 1-decimal percentages.
std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& reports);

}  // namespace bner
