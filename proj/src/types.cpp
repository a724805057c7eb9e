#include "fbmseg/types.hpp"

namespace fbmseg {

std::vector<std::size_t> Trajectory::truth_changepoints() const {
    std::vector<std::size_t> cps;
    if (!truth) {
        return cps;
    }
    for (const auto& seg : *truth) {
        if (seg.start > 0) {
            cps.push_back(seg.start);
        }
    }
    return cps;
}

} // namespace fbmseg
