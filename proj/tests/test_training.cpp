#include <cmath>

#include "doctest.h"
#include "tencon/csse.hpp"
#include "tencon/training.hpp"

using namespace tencon;

namespace {

FormatSpec dense_toy() {
  FormatSpec s;
  s.format = Format::Dense;
  s.batch = 3;
  s.m_dims = {4};
  s.n_dims = {5};
  return s;
}

FormatSpec ttm_toy() {
  FormatSpec s;
  s.format = Format::TTM;
  s.batch = 4;
  s.m_dims = {2, 3};
  s.n_dims = {3, 2};
  s.ranks = {1, 2, 1};
  return s;
}

}  // namespace

TEST_CASE("training expansion emits two adjoints per forward op") {
  auto g = build_format(ttm_toy());
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  auto w = expand_training(g, seq);

  REQUIRE(w.ops.size() == 6);  // 2 forward + 4 adjoint
  int fp = 0, bp = 0, wg = 0;
  for (const auto& op : w.ops) {
    if (op.phase == Phase::FP) ++fp;
    if (op.phase == Phase::BP) ++bp;
    if (op.phase == Phase::WG) ++wg;
  }
  CHECK(fp == 2);
  CHECK(wg == 2);  // one weight-gradient op per core
  CHECK(bp == 2);

  CHECK(w.grad_seeds.size() == 1);
  CHECK(w.input_grads.size() == 1);
  CHECK(w.core_grads.size() == 2);
}

TEST_CASE("forward_workload keeps only the forward ops") {
  auto g = build_format(ttm_toy());
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  auto fw = forward_workload(g, seq);
  REQUIRE(fw.ops.size() == 2);
  for (const auto& op : fw.ops) CHECK(op.phase == Phase::FP);
}

TEST_CASE("dense input gradient equals the weight column sums for unit seed") {
  auto g = build_format(dense_toy());
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  auto w = expand_training(g, seq);
  auto values = random_values(g, 99, /*integer=*/true);
  auto results = run_workload(w, values);

  // Identify the weight node and its array: the non-input external node.
  NodeId wnode = -1;
  for (auto& [id, n] : g.nodes)
    if (n.kind == NodeKind::WeightCore) wnode = id;
  REQUIRE(wnode >= 0);
  const auto& wt = values.at(wnode);              // dims (M, N)
  const auto& wdims = g.nodes.at(wnode).dims;

  int dx_id = w.input_grads[0];
  auto dx = results.at(dx_id);
  // Bring dX to (B, N) order matching the input node's dim order.
  NodeId xnode = -1;
  for (auto& [id, n] : g.nodes)
    if (n.kind == NodeKind::Input) xnode = id;
  dx = transpose_to(dx, w.tensors[dx_id].dims, g.nodes.at(xnode).dims);

  // Loss = sum of outputs, so dY == 1 and dX[b,n] = sum_m W[m,n].
  std::int64_t M = g.dim_size(wdims[0]), N = g.dim_size(wdims[1]);
  for (std::int64_t n = 0; n < N; ++n) {
    double col = 0;
    for (std::int64_t m = 0; m < M; ++m) col += wt.data[m * N + n];
    for (std::int64_t b = 0; b < 3; ++b)
      CHECK(dx.data[b * N + n] == doctest::Approx(col));
  }
}

TEST_CASE("analytic gradients agree with finite differences") {
  for (auto spec : {dense_toy(), ttm_toy()}) {
    auto g = build_format(spec);
    auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
    auto w = expand_training(g, seq);
    auto values = random_values(g, 4242);
    double err = gradient_check(g, w, values);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("stored footprint covers the retained forward activations") {
  auto g = build_format(ttm_toy());
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  auto w = expand_training(g, seq);
  CHECK_FALSE(w.stored.empty());
  std::int64_t foot = stored_footprint(w);
  CHECK(foot > 0);
  std::int64_t sum = 0;
  for (int id : w.stored) sum += w.tensor_elems(id);
  CHECK(foot == sum);
}

TEST_CASE("workload numerics reproduce the forward oracle") {
  auto g = build_format(ttm_toy());
  auto seq = search::fixed_sequence(g, search::FixedKind::AscendingIndex);
  auto w = expand_training(g, seq);
  auto values = random_values(g, 7, /*integer=*/true);
  auto results = run_workload(w, values);

  auto ref = evaluate_numeric(g, seq, values);
  // The last forward op's result is the layer output.
  int out_id = -1;
  for (const auto& op : w.ops)
    if (op.phase == Phase::FP) out_id = op.result;
  auto got = squeeze(transpose_to(results.at(out_id), w.tensors[out_id].dims,
                                  g.block_output_dims[0]));
  auto want = squeeze(ref);
  REQUIRE(got.shape == want.shape);
  for (std::int64_t i = 0; i < got.elems(); ++i)
    CHECK(got.data[i] == want.data[i]);
}
