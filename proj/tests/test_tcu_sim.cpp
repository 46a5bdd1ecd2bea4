#include <random>
#include <set>

#include "doctest.h"
#include "tencon/tcu_sim.hpp"

using namespace tencon;
using tencon::hw::Stationarity;
using namespace tencon::tcu;

namespace {

// Map a logical GEMM (M, N, K) to the array occupancy of a mode.
struct TileShape {
  std::int64_t rows, cols, stream;
};
TileShape occupancy(const CeMode& m, std::int64_t M, std::int64_t N,
                    std::int64_t K) {
  if (m.st == Stationarity::OS)
    return m.swap_operands ? TileShape{N, M, K} : TileShape{M, N, K};
  if (m.st == Stationarity::WS) return {K, N, M};
  return {K, M, N};  // IS
}

NdArray reference_gemm(const NdArray& a, const NdArray& b) {
  std::int64_t M = a.shape[0], K = a.shape[1], N = b.shape[1];
  NdArray c({M, N});
  for (std::int64_t m = 0; m < M; ++m)
    for (std::int64_t n = 0; n < N; ++n) {
      double acc = 0;
      for (std::int64_t k = 0; k < K; ++k)
        acc += a.data[m * K + k] * b.data[k * N + n];
      c.data[m * N + n] = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("the engine has exactly six distinct modes") {
  auto modes = all_ce_modes();
  REQUIRE(modes.size() == 6);
  std::set<std::string> names;
  for (const auto& m : modes) names.insert(m.name());
  CHECK(names.size() == 6);
}

TEST_CASE("all six modes compute identical tiles") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::int64_t M = 1 + rng() % 4, N = 1 + rng() % 4, K = 1 + rng() % 4;
    auto a = NdArray::random({M, K}, rng(), /*integer=*/true);
    auto b = NdArray::random({K, N}, rng(), /*integer=*/true);
    auto want = reference_gemm(a, b);
    for (const auto& mode : all_ce_modes()) {
      auto got = run_ce(mode, a, b, 4, 4);
      REQUIRE(got.shape == want.shape);
      for (std::int64_t i = 0; i < got.elems(); ++i)
        CHECK(got.data[i] == want.data[i]);
    }
  }
}

TEST_CASE("closed-form tile cycles equal the simulated schedule") {
  for (const auto& mode : all_ce_modes())
    for (std::int64_t M = 1; M <= 4; ++M)
      for (std::int64_t N = 1; N <= 4; ++N)
        for (std::int64_t K = 1; K <= 4; ++K)
          for (bool hidden : {false, true}) {
            if (mode.st == Stationarity::OS && hidden) continue;
            auto a = NdArray::ones({M, K});
            auto b = NdArray::ones({K, N});
            CeTrace trace;
            run_ce(mode, a, b, 4, 4, &trace, hidden);
            auto sh = occupancy(mode, M, N, K);
            CHECK(trace.cycles ==
                  ce_tile_cycles(mode.st, sh.rows, sh.cols, sh.stream, hidden));
            CHECK(trace.macs == M * N * K);
          }
}

TEST_CASE("long streams keep the closed form exact") {
  CeMode ws{Stationarity::WS, true, false};
  for (std::int64_t L = 1; L <= 16; ++L) {
    auto a = NdArray::ones({L, 4});
    auto b = NdArray::ones({4, 4});
    CeTrace trace;
    run_ce(ws, a, b, 4, 4, &trace, false);
    CHECK(trace.cycles == ce_tile_cycles(Stationarity::WS, 4, 4, L, false));
  }
}

TEST_CASE("tiles exceeding the array bounds are rejected") {
  CeMode ws{Stationarity::WS, true, false};
  auto a = NdArray::ones({2, 5});  // K = 5 > 4 rows
  auto b = NdArray::ones({5, 2});
  CHECK_THROWS_AS(run_ce(ws, a, b, 4, 4), TileTooLarge);

  CeMode os{Stationarity::OS, true, false};
  auto a2 = NdArray::ones({5, 2});  // M = 5 > 4 rows
  auto b2 = NdArray::ones({2, 2});
  CHECK_THROWS_AS(run_ce(os, a2, b2, 4, 4), TileTooLarge);
}

TEST_CASE("multi-engine contraction matches the exact reference") {
  // Contraction over k with a contracted-dim split across engines, so the
  // partial sums flow through the reduction fabric.
  std::map<DimId, Dim> tab;
  auto add = [&](DimId id, std::int64_t size, const char* lb) {
    tab[id] = Dim{id, size, lb};
  };
  add(0, 6, "m0");
  add(1, 3, "m1");
  add(2, 8, "k");
  add(3, 5, "n0");

  TcuOperand a{NdArray::random({6, 3, 8}, 21, /*integer=*/true), {0, 1, 2}};
  TcuOperand b{NdArray::random({8, 5}, 22, /*integer=*/true), {2, 3}};

  auto cfg = hw::preset_fetta();
  hw::Mapping m;
  m.st = Stationarity::WS;
  m.stationary_is_b = true;
  m.row_dim = 2;
  m.col_dim = 3;
  m.row_extent = 4;
  m.col_extent = 4;
  m.ce_dim = 2;  // split the contracted dim: engines hold k-slices
  m.ce_extent = 2;
  m.layout_a = hw::layout_with_innermost({0, 1, 2}, 2);
  m.layout_b = hw::layout_with_innermost({2, 3}, 3);
  m.layout_out = hw::layout_with_innermost({0, 1, 3}, 3);

  auto res = run_tcu(a, b, tab, m, cfg);
  std::vector<DimId> out_dims;
  auto want = contract_arrays(a.value, a.dims, b.value, b.dims, tab, &out_dims);
  auto got = transpose_to(res.value, res.out_dims, out_dims);
  REQUIRE(got.shape == want.shape);
  for (std::int64_t i = 0; i < got.elems(); ++i)
    CHECK(got.data[i] == want.data[i]);
  CHECK(res.macs == 6 * 3 * 8 * 5);
  CHECK(res.tiles > 1);
  CHECK(res.cycles > 0);
}
