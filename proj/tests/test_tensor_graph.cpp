#include <algorithm>
#include <set>

#include "doctest.h"
#include "tencon/tensor_graph.hpp"

using namespace tencon;

namespace {

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

TEST_CASE("dense layer graph is one input and one weight node") {
  FormatSpec s;
  s.format = Format::Dense;
  s.batch = 16;
  s.m_dims = {64};
  s.n_dims = {64};
  auto g = build_format(s);
  REQUIRE(g.nodes.size() == 2);

  std::vector<NodeId> ids;
  for (auto& [id, n] : g.nodes) ids.push_back(id);
  auto [g2, cost] = contract_pair(g, ids[0], ids[1]);
  CHECK(cost.macs == 16 * 64 * 64);
  CHECK(g2.nodes.size() == 1);
}

TEST_CASE("contract_pair keeps the symmetric difference of dims") {
  TensorGraph g;
  DimId i = g.add_dim(2, "i"), j = g.add_dim(3, "j"), k = g.add_dim(4, "k");
  NodeId a = g.add_node({i, j}, NodeKind::Input);
  NodeId b = g.add_node({j, k}, NodeKind::Input);
  auto [g2, cost] = contract_pair(g, a, b);
  CHECK(cost.macs == 2 * 3 * 4);  // product over the dim union
  CHECK(cost.left_elems == 6);
  CHECK(cost.right_elems == 12);
  CHECK(cost.result_elems == 8);
  const auto& res = g2.nodes.begin()->second;
  CHECK(res.dims == std::vector<DimId>{i, k});
}

TEST_CASE("outer products are permitted") {
  TensorGraph g;
  DimId i = g.add_dim(2, "i"), k = g.add_dim(4, "k");
  NodeId a = g.add_node({i}, NodeKind::Input);
  NodeId b = g.add_node({k}, NodeKind::Input);
  auto [g2, cost] = contract_pair(g, a, b);
  CHECK(cost.macs == 8);
  CHECK(g2.nodes.begin()->second.dims.size() == 2);
}

TEST_CASE("a dim referenced by three nodes is rejected") {
  TensorGraph g;
  DimId j = g.add_dim(3, "j");
  g.add_node({j}, NodeKind::Input);
  g.add_node({j}, NodeKind::Input);
  g.add_node({j}, NodeKind::Input);
  CHECK_THROWS_AS(g.check_edges(), HyperEdge);
}

TEST_CASE("tensor-train graph structure") {
  FormatSpec s;
  s.format = Format::TT;
  s.batch = 2;
  s.m_dims = {2, 2, 2};
  s.n_dims = {3, 3, 3};
  s.ranks = {1, 4, 4, 4, 4, 4, 1};
  auto g = build_format(s);
  CHECK(g.nodes.size() == 7);  // input + six cores

  // Boundary ranks are real size-1 dims, not dropped.
  int unit_dims = 0;
  for (auto& [d, dim] : g.dim_table)
    if (dim.size == 1) ++unit_dims;
  CHECK(unit_dims >= 2);

  int cores = 0;
  std::set<int> core_indices;
  for (auto& [id, n] : g.nodes)
    if (n.kind == NodeKind::WeightCore) {
      ++cores;
      core_indices.insert(n.core_index);
      CHECK(n.dims.size() == 3);  // rank, mode factor, rank
    }
  CHECK(cores == 6);
  CHECK(core_indices.size() == 6);
}

TEST_CASE("sequence validity") {
  auto g = build_format(ttm_toy());
  std::vector<NodeId> ids;
  for (auto& [id, n] : g.nodes) ids.push_back(id);
  REQUIRE(ids.size() == 3);

  ContractionSequence seq;
  NodeId fresh = g.next_node_id;
  seq.steps.push_back({ids[0], ids[1], fresh});
  seq.steps.push_back({fresh, ids[2], fresh + 1});
  CHECK(sequence_is_valid(g, seq));

  ContractionSequence bad;
  bad.steps.push_back({ids[0], ids[1], fresh});
  bad.steps.push_back({ids[0], ids[2], fresh + 1});  // ids[0] already consumed
  CHECK_FALSE(sequence_is_valid(g, bad));

  ContractionSequence incomplete;
  incomplete.steps.push_back({ids[0], ids[1], fresh});
  CHECK_FALSE(sequence_is_valid(g, incomplete));
}

TEST_CASE("sequence totals accumulate macs and accesses") {
  auto g = build_format(ttm_toy());
  std::vector<NodeId> ids;
  for (auto& [id, n] : g.nodes) ids.push_back(id);
  ContractionSequence seq;
  NodeId fresh = g.next_node_id;
  seq.steps.push_back({ids[0], ids[1], fresh});
  seq.steps.push_back({fresh, ids[2], fresh + 1});
  auto tot = sequence_totals(g, seq);
  CHECK(tot.total_macs > 0);
  CHECK(tot.total_access_elems > 0);
  CHECK(tot.arithmetic_intensity ==
        doctest::Approx(double(tot.total_macs) / tot.total_access_elems));
  CHECK(tot.block_sum_adds == 0);
  CHECK(tot.peak_live_elems > 0);
}

TEST_CASE("block-term graphs count the elementwise block sum") {
  FormatSpec s;
  s.format = Format::BT;
  s.batch = 4;
  s.m_dims = {2, 2};
  s.n_dims = {2, 2};
  s.ranks = {2, 2};
  s.bt_blocks = 2;
  auto g2 = build_format(s);
  CHECK(g2.block_count() == 2);
  CHECK(g2.terminal_node_count() == 2);

  s.bt_blocks = 3;
  auto g3 = build_format(s);
  CHECK(g3.block_count() == 3);

  // One complete sequence per graph: fold each block in node order.
  auto fold = [](const TensorGraph& g) {
    ContractionSequence seq;
    NodeId fresh = g.next_node_id;
    for (const auto& blk : g.blocks) {
      NodeId acc = blk[0];
      for (std::size_t i = 1; i < blk.size(); ++i)
        seq.steps.push_back({acc, blk[i], acc = fresh++});
    }
    return seq;
  };
  auto t2 = sequence_totals(g2, fold(g2));
  auto t3 = sequence_totals(g3, fold(g3));
  CHECK(t2.block_sum_adds > 0);
  // Adds scale with the number of extra blocks merged into the output.
  CHECK(t3.block_sum_adds == 2 * t2.block_sum_adds);
}

TEST_CASE("evaluate_numeric matches a hand-computed GEMM") {
  FormatSpec s;
  s.format = Format::Dense;
  s.batch = 2;
  s.m_dims = {4};
  s.n_dims = {3};
  auto g = build_format(s);
  std::map<NodeId, NdArray> values;
  for (auto& [id, n] : g.nodes)
    values[id] = NdArray::ones({[&] {
      std::vector<std::int64_t> sh;
      for (DimId d : n.dims) sh.push_back(g.dim_size(d));
      return sh;
    }()});

  std::vector<NodeId> ids;
  for (auto& [id, n] : g.nodes) ids.push_back(id);
  ContractionSequence seq;
  seq.steps.push_back({ids[0], ids[1], g.next_node_id});
  auto out = evaluate_numeric(g, seq, values);
  REQUIRE(out.elems() == 2 * 4);
  for (double v : out.data) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("evaluate_numeric is independent of the sequence") {
  auto g = build_format(ttm_toy());
  std::vector<NodeId> ids;
  for (auto& [id, n] : g.nodes) ids.push_back(id);
  std::map<NodeId, NdArray> values;
  for (auto& [id, n] : g.nodes) {
    std::vector<std::int64_t> sh;
    for (DimId d : n.dims) sh.push_back(g.dim_size(d));
    values[id] = NdArray::random(sh, 17 + id, /*integer=*/true);
  }
  NodeId fresh = g.next_node_id;
  ContractionSequence s1, s2;
  s1.steps = {{ids[0], ids[1], fresh}, {fresh, ids[2], fresh + 1}};
  s2.steps = {{ids[1], ids[2], fresh}, {ids[0], fresh, fresh + 1}};
  auto r1 = evaluate_numeric(g, s1, values);
  auto r2 = evaluate_numeric(g, s2, values);
  REQUIRE(r1.shape == r2.shape);
  for (std::int64_t i = 0; i < r1.elems(); ++i)
    CHECK(r1.data[i] == r2.data[i]);  // integer inputs: exact
}

TEST_CASE("transpose_to and squeeze") {
  NdArray a({2, 3});
  for (int i = 0; i < 6; ++i) a.data[i] = i;
  auto t = transpose_to(a, {0, 1}, {1, 0});
  CHECK(t.shape == std::vector<std::int64_t>{3, 2});
  CHECK(t.data[0] == 0);
  CHECK(t.data[1] == 3);  // [j=0, i=1] == a[1][0]
  auto back = transpose_to(t, {1, 0}, {0, 1});
  CHECK(back.data == a.data);

  NdArray u({1, 2, 1, 3});
  auto sq = squeeze(u);
  CHECK(sq.shape == std::vector<std::int64_t>{2, 3});
}
