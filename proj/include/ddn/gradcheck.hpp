#pragma once

#include <cstdint>

#include "ddn/tensor.hpp"

namespace ddn {

// Finite-difference oracle for the tape: draws `trials` random instances of
// the op kind (valid shapes, kind-appropriate input ranges; relu inputs kept
// away from the kink), scalarizes the output with a random projection, and
// returns the maximum relative error between tape gradients and central
// differences with the given step. trials >= 1, step in (0, 1e-3].
double check_gradients(OpKind kind, int trials, double step,
                       std::uint64_t seed = 20240901ull);

}  // namespace ddn
