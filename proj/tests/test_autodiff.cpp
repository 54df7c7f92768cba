#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "hrgr/autodiff.hpp"
#include "hrgr/ops.hpp"
#include "support.hpp"

using namespace hrgr;
using hrgr::testing::random_tensor;

namespace {

DiffOp square_op() {
  DiffOp op;
  op.name = "square";
  op.input_names = {"x"};
  op.forward = [](const Tensors& in) { return Tensors{hadamard(in[0], in[0])}; };
  op.vjp = [](const Tensors& in, const Tensors&, const Tensors& cot) {
    return Tensors{scale(hadamard(in[0], cot[0]), 2.0)};
  };
  return op;
}

DiffOp linear_op(const Tensor& m, const std::string& name) {
  DiffOp op;
  op.name = name;
  op.input_names = {"x"};
  op.forward = [m](const Tensors& in) { return Tensors{matmul(m, in[0])}; };
  op.vjp = [m](const Tensors&, const Tensors&, const Tensors& cot) { return Tensors{matmul_tn(m, cot[0])}; };
  return op;
}

DiffOp add_op() {
  DiffOp op;
  op.name = "add";
  op.input_names = {"a", "b"};
  op.forward = [](const Tensors& in) { return Tensors{add(in[0], in[1])}; };
  op.vjp = [](const Tensors&, const Tensors&, const Tensors& cot) { return Tensors{cot[0], cot[0]}; };
  return op;
}


}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("grad_check on an elementwise square") {
  const Tensor x({3}, std::vector<double>{1, 2, 3});
  const auto reports = grad_check(square_op(), {x}, {});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].pass);
  CHECK(reports[0].max_rel_err < 1e-8);
  CHECK(reports[0].h == 1e-5);

  // the VJP itself is 2x * v
  const Tensor v({3}, std::vector<double>{0.5, -1, 2});
  const Tensor g = square_op().vjp({x}, {}, {v})[0];
  CHECK(g.f64()[0] == 1.0);
  CHECK(g.f64()[1] == -4.0);
  CHECK(g.f64()[2] == 12.0);
}

TEST_CASE("constant map has an exactly zero gradient") {
  DiffOp op;
  op.name = "constant";
  op.forward = [](const Tensors&) { return Tensors{Tensor({2}, std::vector<double>{4, 5})}; };
  op.vjp = [](const Tensors& in, const Tensors&, const Tensors&) { return Tensors{Tensor(in[0].shape())}; };
  const auto reports = grad_check(op, {Tensor({3}, std::vector<double>{1, 2, 3})}, {});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].pass);
  CHECK(reports[0].max_abs_err == 0.0);
}

TEST_CASE("a wrong gradient fails") {
  DiffOp op = square_op();
  op.vjp = [](const Tensors& in, const Tensors&, const Tensors& cot) {
    return Tensors{scale(hadamard(in[0], cot[0]), 3.0)};
  };
  CHECK_FALSE(all_pass(grad_check(op, {Tensor({2}, std::vector<double>{1, 2})}, {})));
}

TEST_CASE("non-finite forward output aborts the check") {
  DiffOp op = square_op();
  op.forward = [](const Tensors& in) { return Tensors{scale(in[0], std::nan(""))}; };
  CHECK_THROWS_AS(grad_check(op, {Tensor({2}, std::vector<double>{1, 2})}, {}), NumericalError);
}

TEST_CASE("reports serialize to text and json") {
  const auto reports = grad_check(square_op(), {Tensor({2}, std::vector<double>{1, 2})}, {});
  const auto doc = nlohmann::json::parse(reports_to_json(reports));
  REQUIRE(doc.size() == 1);
  for (const char* key : {"op", "input", "max_rel_err", "max_abs_err", "h", "pass"}) CHECK(doc[0].contains(key));
  CHECK(doc[0]["op"] == "square");
  CHECK(format_reports(reports).find("PASS") != std::string::npos);
}

TEST_CASE("every op passes grad_check on five seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto reports = run_gradcheck("all", seed, {});
    CHECK(reports.size() >= 13);
    for (const auto& r : reports) {
      INFO(r.op << " / " << r.input << " seed " << seed << " rel " << r.max_rel_err << " abs " << r.max_abs_err);
      CHECK(r.pass);
    }
  }
  CHECK_THROWS_AS(run_gradcheck("no_such_op", 0, {}), ValidationError);
}

TEST_CASE("vjps are linear in the cotangent") {
  for (const auto& c : gradcheck_cases("all", 21)) {
    const Tensors out = c.op.forward(c.inputs);
    std::mt19937_64 rng(4);
    Tensors v, v2, zero;
    for (const auto& o : out) {
      if (o.dtype() != DType::kFloat64) {
        v.emplace_back();
        v2.emplace_back();
        zero.emplace_back();
        continue;
      }
      v.push_back(random_tensor(o.shape(), rng));
      v2.push_back(scale(v.back(), 2.0));
      zero.emplace_back(o.shape());
    }
    const Tensors g1 = c.op.vjp(c.inputs, out, v), g2 = c.op.vjp(c.inputs, out, v2), g0 = c.op.vjp(c.inputs, out, zero);
    for (std::size_t i = 0; i < g1.size(); ++i) {
      if (g1[i].empty()) continue;
      INFO(c.name << " input " << i);
      CHECK(max_abs_diff(g2[i], scale(g1[i], 2.0)) <= 1e-12 * std::max(1.0, max_abs(g1[i])));
      CHECK(max_abs(g0[i]) == 0.0);
    }
  }
}

TEST_CASE("chain of two linear maps") {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({2, 4}, rng);
  Chain chain;
  chain.add(linear_op(a, "A"), {"x"}, {"y"});
  chain.add(linear_op(b, "B"), {"y"}, {"z"});
  const Tensor x = random_tensor({3, 1}, rng), v = random_tensor({2, 1}, rng);
  const Values values = chain.forward({{"x", x}});
  CHECK(max_abs_diff(values.at("z"), matmul(b, matmul(a, x))) == 0.0);
  const Values grads = backprop_chain(chain, values, {{"z", v}});
  CHECK(max_abs_diff(grads.at("x"), matmul(transpose(a), matmul(transpose(b), v))) < 1e-15);
}

TEST_CASE("fan-out sums both branches") {
  std::mt19937_64 rng(8);
  const Tensor a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
  Chain chain;
  chain.add(linear_op(a, "A"), {"x"}, {"p"});
  chain.add(linear_op(b, "B"), {"x"}, {"q"});
  chain.add(add_op(), {"p", "q"}, {"s"});
  const Tensor x = random_tensor({3, 1}, rng), v = random_tensor({3, 1}, rng);
  const Values values = chain.forward({{"x", x}});
  const Values grads = backprop_chain(chain, values, {{"s", v}});
  const Tensor want = add(matmul(transpose(a), v), matmul(transpose(b), v));
  CHECK(max_abs_diff(grads.at("x"), want) < 1e-15);
}

TEST_CASE("cotangent shape mismatch is named") {
  Chain chain;
  chain.add(square_op(), {"x"}, {"y"});
  const Values values = chain.forward({{"x", Tensor({3})}});
  CHECK_THROWS_AS(backprop_chain(chain, values, {{"y", Tensor({2})}}), ShapeError);
  CHECK_THROWS_AS(chain.forward({{"z", Tensor({3})}}), ValidationError);
}

TEST_CASE("chained block gradient equals the monolithic reverse pass") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    HrgrConfig cfg;
    cfg.dfp.regions = 4;
    cfg.dfp.iterations = 2;
    cfg.rounds = seed == 2 ? 2 : 1;
    const std::vector<std::size_t> channels{4, 6}, reduced{3, 4};
    HrgrParams params = HrgrParams::init(channels, reduced, 8, rng);
    for (auto& v : params.reducers[0].bias.f64()) v = 0.3;
    const std::vector<Tensor> features{random_tensor({8, 8, 4}, rng), random_tensor({4, 4, 6}, rng)};

    HrgrTrace trace;
    const HrgrOutput out = hrgr_block(features, params, cfg, &trace);
    std::vector<Tensor> cot{random_tensor(out.features[0].shape(), rng), random_tensor(out.features[1].shape(), rng)};
    const HrgrGrad mono = hrgr_block_vjp(trace, params, cfg, cot);

    const Chain chain = build_hrgr_chain(cfg, params);
    const Values values = chain.forward(hrgr_chain_seeds(features, params));
    CHECK(values.at("out0").bit_equal(out.features[0]));
    CHECK(values.at("out1").bit_equal(out.features[1]));
    const Values grads = backprop_chain(chain, values, {{"out0", cot[0]}, {"out1", cot[1]}});

    CHECK(max_abs_diff(grads.at("f0"), mono.features[0]) <= 1e-12);
    CHECK(max_abs_diff(grads.at("f1"), mono.features[1]) <= 1e-12);
    for (const auto& [name, t] : mono.params.named()) {
      INFO(name);
      REQUIRE(grads.count(name) == 1);
      CHECK(max_abs_diff(grads.at(name), *t) <= 1e-12);
      CHECK(max_abs(grads.at(name)) > 0.0);  // no silently dead parameter
    }
  }
}

}
