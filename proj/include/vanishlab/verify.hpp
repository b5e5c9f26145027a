#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vanishlab {

struct CriterionResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// The full theory-vs-Monte-Carlo agreement suite.  Each criterion is
// deterministic for a fixed master seed; thread count affects scheduling
// only, never values.
std::vector<CriterionResult> run_all_criteria(std::uint64_t master_seed, int threads);

// Individual criteria (1-based index, matching the order of run_all_criteria).
CriterionResult run_criterion(int index, std::uint64_t master_seed, int threads);
int criterion_count();

}  // namespace vanishlab
