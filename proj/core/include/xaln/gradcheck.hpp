#pragma once

#include <string>
#include <vector>

#include "xaln/model.hpp"
#include "xaln/objectives.hpp"

namespace xaln::gradcheck {

struct GroupReport {
    std::string name;
    double max_rel_err = 0;
    int samples = 0;
};

struct Report {
    double max_rel_err = 0;
    std::string worst_group;
    std::vector<GroupReport> groups;
    int total_samples = 0;
};

// Central finite differences (64-bit, the given step) of the full joint
// objective against the tape's analytic gradients, on a synthetic batch.
// Samples at least min_samples parameters spread across every parameter
// group; dropout masks are replayed identically for every evaluation.
Report run(const model::VariantConfig& variant, std::uint64_t seed,
           int min_samples = 208, double step = 1e-5, int batch = 4);

}  // namespace xaln::gradcheck
