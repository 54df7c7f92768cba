#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hrgr/autodiff.hpp"
#include "hrgr/dfp.hpp"
#include "hrgr/graph.hpp"
#include "hrgr/loss.hpp"
#include "hrgr/reasoning.hpp"

namespace hrgr {

// DiffOp adapters over the module functions. Each one is a thin wrapper:
// forward calls the module function and vjp calls its hand-written VJP.

DiffOp reduce_channels_op();                       // [f, weight, bias] -> [f'']
DiffOp init_centers_grid_op(std::size_t m);        // [f'' h x w x c] -> [centers]
DiffOp association_op();                           // [F'' n x c, centers] -> [D]
DiffOp update_centers_op(double epsilon);          // [D, F''] -> [centers]
DiffOp run_dfp_op(const DfpConfig& cfg);           // [f, weight, bias] -> [D, centers, labels]
DiffOp aggregate_nodes_op(double epsilon);         // [D, f h x w x c] -> [R]
DiffOp project_nodes_op(std::size_t layers);       // [R_1..R_k, W_1..W_k] -> [R_G]
DiffOp adjacency_op(std::vector<std::size_t> regions, const HrgrConfig& cfg);  // [J_1..J_k] -> [A]
DiffOp message_pass_op();                          // [R_G, A, W_G] -> [hat R_G]
DiffOp regularize_op();                            // [hat R_G, W_alpha, W_beta] -> [R_G]
DiffOp remap_op(std::size_t begin, std::size_t end);  // [R_G, D_i, W_inv] -> [F_G]
DiffOp fuse_op(std::size_t layer);                 // [f_i, F_G, mu] -> [f_i']
DiffOp focal_loss_op(const FocalConfig& cfg);      // [y, yhat] -> [loss]

// The whole block as one op with the monolithic reverse pass.
// Inputs: k feature maps followed by the tensors of like.named().
DiffOp hrgr_block_op(const HrgrConfig& cfg, const HrgrParams& like);

// Rebuild a parameter set shaped like `like` from its flattened tensors.
HrgrParams params_from(const HrgrParams& like, std::span<const Tensor> flat);
Tensors flatten(const HrgrParams& params);

// The same block wired step by step; seed slots are "f<i>" and the
// parameter names of HrgrParams::named(); outputs are "out<i>".
Chain build_hrgr_chain(const HrgrConfig& cfg, const HrgrParams& like);
Values hrgr_chain_seeds(std::span<const Tensor> features, const HrgrParams& params);

// ---- finite-difference suite ----------------------------------------------------------

struct GradCase {
  std::string name;
  DiffOp op;
  Tensors inputs;
};

// Names accepted by gradcheck_cases, in suite order.
std::vector<std::string> gradcheck_names();

// Small random instances for `name` ("all" selects every op).
std::vector<GradCase> gradcheck_cases(const std::string& name, std::uint64_t seed);

std::vector<GradReport> run_gradcheck(const std::string& name, std::uint64_t seed,
                                      const GradCheckOptions& options = {});

}  // namespace hrgr
