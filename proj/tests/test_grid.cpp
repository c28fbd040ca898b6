#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <fstream>

#include "baygds/grid.hpp"

using namespace baygds;

namespace {
Microstructure from_rows(const std::vector<std::vector<int>>& rows) {
  Microstructure m;
  m.n = static_cast<int>(rows.size());
  for (const auto& r : rows)
    for (int v : r) m.cells.push_back(static_cast<std::uint8_t>(v));
  return m;
}

std::string temp_path(const char* stem) {
  return std::string("./") + stem + "_" + std::to_string(::getpid()) + ".bgds";
}
}  // namespace

TEST_CASE("mirroring a 2x2 quadrant with one corner pixel puts pixels at all four corners") {
  auto quad = from_rows({{1, 0}, {0, 0}});
  auto full = mirror_periodic(quad);
  REQUIRE(full.n == 4);
  CHECK(full.at(0, 0) == 1);
  CHECK(full.at(0, 3) == 1);
  CHECK(full.at(3, 0) == 1);
  CHECK(full.at(3, 3) == 1);
  int total = 0;
  for (auto v : full.cells) total += v;
  CHECK(total == 4);
  CHECK(is_mirror_symmetric(full));
}

TEST_CASE("mirroring is idempotent through quadrant extraction") {
  Microstructure quad;
  quad.n = 6;
  quad.cells.resize(36);
  std::uint64_t s = 42;
  for (auto& c : quad.cells) c = static_cast<std::uint8_t>(splitmix64(s) & 1);
  auto full = mirror_periodic(quad);
  auto again = mirror_periodic(top_left_quadrant(full));
  REQUIRE(again.n == full.n);
  CHECK(again.cells == full.cells);
}

TEST_CASE("volume fraction counts solid cells") {
  auto m = from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 0}});
  CHECK(volume_fraction(m) == Catch::Approx(0.1875).margin(1e-15));
}

TEST_CASE("pool round-trips through the packed container") {
  DesignPool pool;
  pool.n = 6;
  Rng rng(7);
  for (int i = 0; i < 5; ++i) {
    Microstructure m;
    m.id = i + 1;
    m.n = 6;
    m.cells.resize(36);
    for (auto& c : m.cells) c = static_cast<std::uint8_t>(rng.next_u64() & 1);
    pool.designs.push_back(m);
  }
  const auto path = temp_path("roundtrip");
  save_pool(pool, path);
  auto loaded = load_pool(path);
  REQUIRE(loaded.n == pool.n);
  REQUIRE(loaded.designs.size() == pool.designs.size());
  for (std::size_t i = 0; i < pool.designs.size(); ++i) {
    CHECK(loaded.designs[i].id == static_cast<int>(i) + 1);
    CHECK(loaded.designs[i].cells == pool.designs[i].cells);
  }
  std::remove(path.c_str());
}

TEST_CASE("packed grids occupy ceil(n^2/8) bytes") {
  Microstructure m;
  m.n = 6;  // 36 bits -> 5 bytes
  m.cells.assign(36, 1);
  CHECK(pack_grid(m).size() == 5);
}

TEST_CASE("container loader distinguishes the failure modes") {
  DesignPool pool;
  pool.n = 4;
  Microstructure m;
  m.n = 4;
  m.cells.assign(16, 1);
  m.cells[3] = 0;
  pool.designs.push_back(m);
  const auto path = temp_path("errors");
  save_pool(pool, path);

  SECTION("bad magic is a format error") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("nope", 4);
    f.close();
    CHECK_THROWS_AS(load_pool(path), format_error);
  }
  SECTION("unsupported version is a format error") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[2] = {9, 0};
    f.write(v, 2);
    f.close();
    CHECK_THROWS_AS(load_pool(path), format_error);
  }
  SECTION("zero design count is a size error") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char z[4] = {0, 0, 0, 0};
    f.write(z, 4);
    f.close();
    CHECK_THROWS_AS(load_pool(path), size_error);
  }
  SECTION("short payload is a truncation error") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 1));
    out.close();
    CHECK_THROWS_AS(load_pool(path), truncated_error);
  }
  SECTION("trailing bytes are a size error") {
    std::ofstream f(path, std::ios::binary | std::ios::app);
    f.put('x');
    f.close();
    CHECK_THROWS_AS(load_pool(path), size_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("duplicate diagnostics count repeated grids") {
  DesignPool pool;
  pool.n = 4;
  Microstructure a;
  a.n = 4;
  a.cells.assign(16, 0);
  a.cells[0] = 1;
  Microstructure b = a;
  b.cells[5] = 1;
  pool.designs = {a, b, a};
  CHECK(count_duplicates(pool) == 1);
}
