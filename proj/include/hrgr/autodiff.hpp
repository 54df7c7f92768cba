#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hrgr/tensor.hpp"

namespace hrgr {

using Tensors = std::vector<Tensor>;

// A differentiable map with a hand-written vector-Jacobian product.
//
// vjp receives the forward inputs, the forward outputs and one cotangent per
// output, and returns one cotangent per input. Inputs the op treats as
// constants (index maps, adjacency) get an empty Tensor back.
struct DiffOp {
  std::string name;
  std::vector<std::string> input_names;
  std::function<Tensors(const Tensors&)> forward;
  std::function<Tensors(const Tensors& inputs, const Tensors& outputs, const Tensors& cotangents)> vjp;
};

struct GradReport {
  std::string op;
  std::string input;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  double h = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // A coordinate also passes when |analytic - numeric| is below this floor.
  double abs_floor = 1e-7;
  std::uint64_t seed = 0;
};

// Central finite differences of <v, f(x)> against vjp(v) for a random
// cotangent v, one report per differentiable float64 input.
// Throws NumericalError if the forward map produces a non-finite value.
std::vector<GradReport> grad_check(const DiffOp& op, const Tensors& inputs, const GradCheckOptions& options);

std::string format_reports(const std::vector<GradReport>& reports);
std::string reports_to_json(const std::vector<GradReport>& reports, int indent = 2);
bool all_pass(const std::vector<GradReport>& reports);

// ---- explicit chains ----------------------------------------------------------

using Values = std::map<std::string, Tensor>;

struct ChainStep {
  DiffOp op;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

// A fixed DAG of DiffOps wired through named value slots.
class Chain {
 public:
  void add(DiffOp op, std::vector<std::string> inputs, std::vector<std::string> outputs);

  // Runs every step in insertion order; returns all slots, seeds included.
  Values forward(Values seeds) const;

  const std::vector<ChainStep>& steps() const { return steps_; }

 private:
  std::vector<ChainStep> steps_;
};

// Applies step VJPs in reverse order. Cotangents for a slot consumed by
// several steps are summed. Returns the cotangent of every slot that
// received one.
Values backprop_chain(const Chain& chain, const Values& forward_values, const Values& final_cotangents);

}  // namespace hrgr
