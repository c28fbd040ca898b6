#pragma once

// Binary microstructure grids and the packed pool container format.
//
// Grids are square, periodic, row-major, one byte per cell in memory
// (1 = solid, 0 = void). On disk a pool is a fixed 16-byte header followed
// by bit-packed grids, LSB-first within each byte:
//
//   bytes 0..3   magic "BGDS"
//   bytes 4..5   format version (u16 LE), currently 1
//   bytes 6..7   grid side length n (u16 LE)
//   bytes 8..11  design count n_d (u32 LE)
//   bytes 12..15 reserved, zero
//   payload      n_d grids of ceil(n*n/8) bytes each

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "baygds/common.hpp"

namespace baygds {

struct Microstructure {
  int id = 0;  // 1-based pool index; 0 means unattached
  int n = 0;
  std::vector<std::uint8_t> cells;  // n*n entries, values 0/1

  std::uint8_t at(int r, int c) const { return cells[static_cast<std::size_t>(r) * n + c]; }
  std::uint8_t& at(int r, int c) { return cells[static_cast<std::size_t>(r) * n + c]; }
};

inline double volume_fraction(const Microstructure& m) {
  if (m.cells.empty()) throw size_error("volume_fraction: empty grid");
  std::size_t solid = 0;
  for (auto v : m.cells) solid += v;
  return static_cast<double>(solid) / static_cast<double>(m.cells.size());
}

// Expands an m x m quadrant to a 2m x 2m grid with mirror symmetry about
// both midlines: top-left quadrant is the input, top-right its left-right
// mirror, bottom half the up-down mirror of the top half. The result stays
// periodic when the quadrant came from a periodic field.
inline Microstructure mirror_periodic(const Microstructure& quad) {
  if (quad.n <= 0) throw size_error("mirror_periodic: empty quadrant");
  const int m = quad.n;
  Microstructure out;
  out.n = 2 * m;
  out.cells.assign(static_cast<std::size_t>(out.n) * out.n, 0);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const std::uint8_t v = quad.at(r, c);
      out.at(r, c) = v;
      out.at(r, 2 * m - 1 - c) = v;
      out.at(2 * m - 1 - r, c) = v;
      out.at(2 * m - 1 - r, 2 * m - 1 - c) = v;
    }
  }
  return out;
}

inline Microstructure top_left_quadrant(const Microstructure& m) {
  if (m.n % 2 != 0) throw size_error("top_left_quadrant: odd grid size");
  Microstructure q;
  q.n = m.n / 2;
  q.cells.resize(static_cast<std::size_t>(q.n) * q.n);
  for (int r = 0; r < q.n; ++r)
    for (int c = 0; c < q.n; ++c) q.at(r, c) = m.at(r, c);
  return q;
}

inline bool is_mirror_symmetric(const Microstructure& m) {
  if (m.n % 2 != 0) return false;
  for (int r = 0; r < m.n; ++r)
    for (int c = 0; c < m.n; ++c)
      if (m.at(r, c) != m.at(r, m.n - 1 - c) || m.at(r, c) != m.at(m.n - 1 - r, c))
        return false;
  return true;
}

inline std::uint64_t grid_hash(const Microstructure& m) {
  std::uint64_t h = fnv1a64(&m.n, sizeof m.n);
  return fnv1a64(m.cells.data(), m.cells.size(), h);
}

struct DesignPool {
  int n = 0;
  std::vector<Microstructure> designs;  // ids 1..designs.size()

  const Microstructure& by_id(int id) const {
    if (id < 1 || id > static_cast<int>(designs.size()))
      throw user_error("pool: no design with id " + std::to_string(id));
    return designs[static_cast<std::size_t>(id) - 1];
  }
};

// Counts grids that appear more than once (diagnostic; duplicates are legal).
inline int count_duplicates(const DesignPool& pool) {
  std::unordered_set<std::uint64_t> seen;
  int dup = 0;
  for (const auto& d : pool.designs)
    if (!seen.insert(grid_hash(d)).second) ++dup;
  return dup;
}

// ----------------------------------------------------------- bit packing --

inline std::vector<std::uint8_t> pack_grid(const Microstructure& m) {
  const std::size_t nbits = m.cells.size();
  std::vector<std::uint8_t> out((nbits + 7) / 8, 0);
  for (std::size_t i = 0; i < nbits; ++i)
    if (m.cells[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

inline void unpack_grid(const std::uint8_t* bytes, Microstructure& m) {
  const std::size_t nbits = static_cast<std::size_t>(m.n) * m.n;
  m.cells.resize(nbits);
  for (std::size_t i = 0; i < nbits; ++i)
    m.cells[i] = (bytes[i / 8] >> (i % 8)) & 1u;
}

// -------------------------------------------------------------- pool i/o --

namespace detail {
inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 255);
  b.push_back((v >> 8) & 255);
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 255);
}
inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline constexpr std::uint16_t kPoolFormatVersion = 1;

inline void save_pool(const DesignPool& pool, const std::string& path) {
  if (pool.n <= 0 || pool.designs.empty()) throw size_error("save_pool: empty pool");
  std::vector<std::uint8_t> buf;
  buf.push_back('B');
  buf.push_back('G');
  buf.push_back('D');
  buf.push_back('S');
  detail::put_u16(buf, kPoolFormatVersion);
  detail::put_u16(buf, static_cast<std::uint16_t>(pool.n));
  detail::put_u32(buf, static_cast<std::uint32_t>(pool.designs.size()));
  detail::put_u32(buf, 0);
  for (const auto& d : pool.designs) {
    if (d.n != pool.n) throw size_error("save_pool: mixed grid sizes");
    auto packed = pack_grid(d);
    buf.insert(buf.end(), packed.begin(), packed.end());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw user_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw user_error("short write to " + path);
}

inline DesignPool load_pool(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw user_error("cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw format_error(path + ": malformed header (too short)");
  if (std::memcmp(buf.data(), "BGDS", 4) != 0)
    throw format_error(path + ": malformed header (bad magic)");
  const std::uint16_t ver = detail::get_u16(buf.data() + 4);
  if (ver != kPoolFormatVersion)
    throw format_error(path + ": unsupported format version " + std::to_string(ver));
  const int n = detail::get_u16(buf.data() + 6);
  const std::uint32_t n_d = detail::get_u32(buf.data() + 8);
  if (n <= 0 || n_d == 0)
    throw size_error(path + ": header declares empty pool (n=" + std::to_string(n) +
                     ", n_d=" + std::to_string(n_d) + ")");
  const std::size_t per = (static_cast<std::size_t>(n) * n + 7) / 8;
  const std::size_t need = 16 + per * n_d;
  if (buf.size() < need)
    throw truncated_error(path + ": truncated payload (" + std::to_string(buf.size()) +
                          " bytes, need " + std::to_string(need) + ")");
  if (buf.size() > need)
    throw size_error(path + ": payload size mismatch (trailing bytes)");
  DesignPool pool;
  pool.n = n;
  pool.designs.resize(n_d);
  for (std::uint32_t i = 0; i < n_d; ++i) {
    auto& d = pool.designs[i];
    d.id = static_cast<int>(i) + 1;
    d.n = n;
    unpack_grid(buf.data() + 16 + per * i, d);
  }
  return pool;
}

}  // namespace baygds
