#pragma once

#include <cstdint>
#include <string>

namespace vanishlab {

// One observable measured for one (depth, width, trial) of a sweep.
struct ScanObservation {
    int depth = 0;
    int width = 0;
    long trial = 0;
    std::uint64_t sub_seed = 0;
    std::string observable;
    double value = 0.0;
};

}  // namespace vanishlab
