#pragma once

#include "bseg/tape.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace bseg {

// Scalar-valued function of several tensors, rebuilt from scratch for every
// finite-difference probe.
using TapeFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Max over probed elements of |analytic - central difference| /
// max(1, |analytic|, |difference|).
double max_rel_error_at(const TapeFn& f, const std::vector<Tensor>& inputs,
                        const std::vector<std::pair<size_t, Eigen::Index>>& coords,
                        double step = 1e-5);

// Probes every element of every input.
double max_rel_error(const TapeFn& f, const std::vector<Tensor>& inputs, double step = 1e-5);

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool pass = false;
};

// Finite-difference verification of every primitive operation, every
// composite block, and a 20-parameter probe of the assembled network.
std::vector<GradCheckReport> gradcheck_suite(uint64_t seed);

}  // namespace bseg
