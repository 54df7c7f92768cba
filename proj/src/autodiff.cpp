#include "hrgr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

namespace hrgr {

namespace {

double contract(const Tensors& outputs, const Tensors& cotangents) {
  double acc = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!cotangents[i].empty()) acc += dot(outputs[i], cotangents[i]);
  }
  return acc;
}

void require_finite(const DiffOp& op, const Tensors& outputs) {
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].dtype() == DType::kFloat64 && !all_finite(outputs[i])) {
      throw NumericalError("grad_check(" + op.name + "): forward output " + std::to_string(i) + " is not finite");
    }
  }
}

std::string input_label(const DiffOp& op, std::size_t i) {
  return i < op.input_names.size() ? op.input_names[i] : "input" + std::to_string(i);
}

}  // namespace

std::vector<GradReport> grad_check(const DiffOp& op, const Tensors& inputs, const GradCheckOptions& options) {
  const Tensors outputs = op.forward(inputs);
  require_finite(op, outputs);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensors cotangents;
  for (const auto& out : outputs) {
    // index outputs (hard labels) are piecewise constant
    if (out.dtype() != DType::kFloat64) {
      cotangents.emplace_back();
      continue;
    }
    Tensor v(out.shape());
    for (auto& x : v.f64()) x = normal(rng);
    cotangents.push_back(std::move(v));
  }
  const Tensors analytic = op.vjp(inputs, outputs, cotangents);

  std::vector<GradReport> reports;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].dtype() != DType::kFloat64 || i >= analytic.size() || analytic[i].empty()) continue;
    if (analytic[i].shape() != inputs[i].shape()) {
      throw ShapeError("grad_check(" + op.name + "): vjp for " + input_label(op, i) + " has shape " +
                       to_string(analytic[i].shape()) + ", input has " + to_string(inputs[i].shape()));
    }
    GradReport report{op.name, input_label(op, i), 0.0, 0.0, options.h, true};
    Tensors probe = inputs;
    auto x = probe[i].f64();
    auto g = analytic[i].f64();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double saved = x[j];
      x[j] = saved + options.h;
      const auto plus_out = op.forward(probe);
      require_finite(op, plus_out);
      const double plus = contract(plus_out, cotangents);
      x[j] = saved - options.h;
      const auto minus_out = op.forward(probe);
      require_finite(op, minus_out);
      const double minus = contract(minus_out, cotangents);
      x[j] = saved;

      const double numeric = (plus - minus) / (2.0 * options.h);
      const double abs_err = std::abs(g[j] - numeric);
      const double rel_err = abs_err / std::max({std::abs(g[j]), std::abs(numeric), 1e-8});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, rel_err);
      if (!(rel_err < options.tol || abs_err < options.abs_floor)) report.pass = false;
    }
    reports.push_back(report);
  }
  return reports;
}

std::string format_reports(const std::vector<GradReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "op" << std::setw(18) << "input" << std::setw(14) << "max_rel_err"
     << std::setw(14) << "max_abs_err" << std::setw(10) << "h"
     << "result\n";
  os << std::scientific << std::setprecision(3);
  for (const auto& r : reports) {
    os << std::setw(22) << r.op << std::setw(18) << r.input << std::setw(14) << r.max_rel_err << std::setw(14)
       << r.max_abs_err << std::setw(10) << r.h << (r.pass ? "PASS" : "FAIL") << '\n';
  }
  return os.str();
}

std::string reports_to_json(const std::vector<GradReport>& reports, int indent) {
  auto doc = nlohmann::json::array();
  for (const auto& r : reports) {
    doc.push_back({{"op", r.op},
                   {"input", r.input},
                   {"max_rel_err", r.max_rel_err},
                   {"max_abs_err", r.max_abs_err},
                   {"h", r.h},
                   {"pass", r.pass}});
  }
  return doc.dump(indent);
}

bool all_pass(const std::vector<GradReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const GradReport& r) { return r.pass; });
}

// ---- chains -------------------------------------------------------------------

void Chain::add(DiffOp op, std::vector<std::string> inputs, std::vector<std::string> outputs) {
  steps_.push_back({std::move(op), std::move(inputs), std::move(outputs)});
}

Values Chain::forward(Values seeds) const {
  Values values = std::move(seeds);
  for (const auto& step : steps_) {
    Tensors in;
    for (const auto& name : step.inputs) {
      auto it = values.find(name);
      if (it == values.end()) throw ValidationError("chain step " + step.op.name + ": missing input slot " + name);
      in.push_back(it->second);
    }
    Tensors out = step.op.forward(in);
    if (out.size() != step.outputs.size()) {
      throw ValidationError("chain step " + step.op.name + ": produced " + std::to_string(out.size()) +
                            " outputs, wired " + std::to_string(step.outputs.size()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) values[step.outputs[i]] = std::move(out[i]);
  }
  return values;
}

Values backprop_chain(const Chain& chain, const Values& forward_values, const Values& final_cotangents) {
  Values cot;
  for (const auto& [name, g] : final_cotangents) {
    auto it = forward_values.find(name);
    if (it == forward_values.end()) throw ValidationError("backprop_chain: unknown slot " + name);
    if (g.shape() != it->second.shape()) {
      throw ShapeError("backprop_chain: cotangent for " + name + " has shape " + to_string(g.shape()) +
                       ", forward value has " + to_string(it->second.shape()));
    }
    cot[name] = g;
  }

  const auto& steps = chain.steps();
  for (auto step = steps.rbegin(); step != steps.rend(); ++step) {
    bool reached = false;
    Tensors outs, out_cots, ins;
    for (const auto& name : step->outputs) {
      const Tensor& value = forward_values.at(name);
      outs.push_back(value);
      auto it = cot.find(name);
      if (it != cot.end()) {
        reached = true;
        out_cots.push_back(it->second);
      } else if (value.dtype() == DType::kFloat64) {
        out_cots.push_back(Tensor(value.shape()));
      } else {
        out_cots.emplace_back();
      }
    }
    if (!reached) continue;
    for (const auto& name : step->inputs) ins.push_back(forward_values.at(name));

    const Tensors in_cots = step->op.vjp(ins, outs, out_cots);
    for (std::size_t i = 0; i < step->inputs.size() && i < in_cots.size(); ++i) {
      if (in_cots[i].empty()) continue;
      if (in_cots[i].shape() != ins[i].shape()) {
        throw ShapeError("backprop_chain: step " + step->op.name + " returned cotangent " +
                         to_string(in_cots[i].shape()) + " for input " + step->inputs[i] + " of shape " +
                         to_string(ins[i].shape()));
      }
      auto it = cot.find(step->inputs[i]);
      if (it == cot.end()) {
        cot.emplace(step->inputs[i], in_cots[i]);
      } else {
        axpy(it->second, 1.0, in_cots[i]);
      }
    }
  }
  return cot;
}

}  // namespace hrgr
