#pragma once

#include <string>
#include <vector>

namespace tei {

struct OpCheck {
    std::string name;
    double max_rel_err = 0;
    bool pass = false;
};

std::vector<std::string> gradcheck_op_names();

// Runs the finite-difference suite at 64-bit over `seeds` random draws per
// op. `op_filter` is an op name or "all".
std::vector<OpCheck> run_gradcheck_suite(const std::string& op_filter, int seeds,
                                         double tol = 1e-4);

}  // namespace tei
