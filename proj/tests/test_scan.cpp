#include "wsod/scan.hpp"

#include <cstdlib>
#include <set>

#include <stdexcept>

#include "doctest.h"
#include "wsod/rng.hpp"

using namespace wsod;

TEST_CASE("scan_index on the 2x2 grid") {
  // cells: a(0,0) b(0,1) / c(1,0) d(1,1)
  auto at = [](std::size_t t, ScanOrder o) { return scan_index(t, o, 2, 2); };

  CHECK(at(0, ScanOrder::RowPrime) == GridPoint{0, 0});
  CHECK(at(1, ScanOrder::RowPrime) == GridPoint{0, 1});
  CHECK(at(2, ScanOrder::RowPrime) == GridPoint{1, 1});
  CHECK(at(3, ScanOrder::RowPrime) == GridPoint{1, 0});

  CHECK(at(0, ScanOrder::ColPrime) == GridPoint{0, 0});
  CHECK(at(1, ScanOrder::ColPrime) == GridPoint{1, 0});
  CHECK(at(2, ScanOrder::ColPrime) == GridPoint{1, 1});
  CHECK(at(3, ScanOrder::ColPrime) == GridPoint{0, 1});

  CHECK(at(0, ScanOrder::RowPrimeReversed) == GridPoint{1, 0});
  CHECK(at(1, ScanOrder::RowPrimeReversed) == GridPoint{1, 1});
  CHECK(at(2, ScanOrder::RowPrimeReversed) == GridPoint{0, 1});
  CHECK(at(3, ScanOrder::RowPrimeReversed) == GridPoint{0, 0});
}

TEST_CASE("scan_index serpentine spot values") {
  CHECK(scan_index(0, ScanOrder::RowPrime, 6, 9) == GridPoint{0, 0});
  CHECK(scan_index(5, ScanOrder::RowPrime, 4, 4) == GridPoint{1, 2});
  CHECK(deserialize_point(15, ScanOrder::RowPrimeReversed, 4, 4) == GridPoint{0, 0});
}

TEST_CASE("scan_index rejects out-of-range positions") {
  CHECK_THROWS_AS(scan_index(4, ScanOrder::RowPrime, 2, 2), std::invalid_argument);
}

TEST_CASE("bijection and serpentine adjacency, all orders, H,W <= 8") {
  for (std::size_t h = 1; h <= 8; ++h) {
    for (std::size_t w = 1; w <= 8; ++w) {
      for (ScanOrder order : kAllScanOrders) {
        std::set<std::pair<std::size_t, std::size_t>> seen;
        GridPoint prev{};
        for (std::size_t t = 0; t < h * w; ++t) {
          const GridPoint p = scan_index(t, order, h, w);
          REQUIRE(p.row < h);
          REQUIRE(p.col < w);
          seen.insert({p.row, p.col});
          if (t > 0) {
            const long dr = std::labs((long)p.row - (long)prev.row);
            const long dc = std::labs((long)p.col - (long)prev.col);
            // Chebyshev-adjacent neighbours in the serpentine traversal
            CHECK(std::max(dr, dc) == 1);
          }
          prev = p;
        }
        CHECK(seen.size() == h * w);
      }
    }
  }
}

TEST_CASE("raster style is a bijection but not serpentine") {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t t = 0; t < 12; ++t) {
    const GridPoint p = scan_index(t, ScanOrder::RowPrime, 3, 4, ScanStyle::Raster);
    seen.insert({p.row, p.col});
  }
  CHECK(seen.size() == 12);
  // Raster always walks each row left to right.
  CHECK(scan_index(4, ScanOrder::RowPrime, 3, 4, ScanStyle::Raster) == GridPoint{1, 0});
  CHECK(scan_index(7, ScanOrder::RowPrime, 3, 4, ScanStyle::Raster) == GridPoint{1, 3});
}

TEST_CASE("serialize/deserialize round trip on random maps") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = (std::size_t)rng.uniform_int(1, 6);
    const std::size_t w = (std::size_t)rng.uniform_int(1, 6);
    const std::size_t d = (std::size_t)rng.uniform_int(1, 3);
    Tensor map({h, w, d});
    rng.fill_uniform(map, -5.0, 5.0);
    for (ScanOrder order : kAllScanOrders) {
      FeatureSequence seq = serialize(map, order);
      REQUIRE(seq.frames.size() == h * w);
      Tensor back = deserialize(seq);
      REQUIRE(back.same_shape(map));
      for (std::size_t i = 0; i < map.size(); ++i) CHECK(back[i] == map[i]);
    }
  }
}

TEST_CASE("serialize on the degenerate 1x1 grid") {
  Tensor map({1, 1, 3}, {1.0, 2.0, 3.0});
  for (ScanOrder order : kAllScanOrders) {
    FeatureSequence seq = serialize(map, order);
    REQUIRE(seq.frames.size() == 1);
    CHECK(seq.frames[0] == std::vector<double>{1.0, 2.0, 3.0});
  }
}

TEST_CASE("serialize 2x2 single channel follows scan order") {
  Tensor map({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});  // a b / c d
  FeatureSequence seq = serialize(map, ScanOrder::RowPrime);
  CHECK(seq.frames[0][0] == 1.0);
  CHECK(seq.frames[1][0] == 2.0);
  CHECK(seq.frames[2][0] == 4.0);
  CHECK(seq.frames[3][0] == 3.0);
}

TEST_CASE("reversal identity: reversed order equals framewise reverse") {
  Rng rng(43);
  Tensor map({5, 3, 2});
  rng.fill_uniform(map, -1.0, 1.0);
  auto base = serialize(map, ScanOrder::RowPrime);
  auto rev = serialize(map, ScanOrder::RowPrimeReversed);
  REQUIRE(base.frames.size() == rev.frames.size());
  for (std::size_t t = 0; t < base.frames.size(); ++t) {
    CHECK(rev.frames[t] == base.frames[base.frames.size() - 1 - t]);
  }
}
