#pragma once

// Shared plumbing: error types, deterministic RNG streams, hashing,
// base64, CSV helpers. Everything downstream assumes these semantics,
// in particular the RNG (fixed algorithms, not std::distributions, so
// that seeded runs replay bit-identically).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#ifndef BAYGDS_VERSION_STRING
#define BAYGDS_VERSION_STRING "0.1.0"
#endif

namespace baygds {

inline const char* version() { return BAYGDS_VERSION_STRING; }

// ---------------------------------------------------------------- errors --

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad inputs: malformed files, infeasible settings, missing data. CLI maps
// these to exit code 1.
struct user_error : error {
  using error::error;
};

struct format_error : user_error {  // wrong magic, version, header fields
  using user_error::user_error;
};
struct size_error : user_error {  // implausible or inconsistent sizes
  using user_error::user_error;
};
struct truncated_error : user_error {  // payload shorter than header promises
  using user_error::user_error;
};
struct degenerate_error : user_error {  // zero-variance statistics and kin
  using user_error::user_error;
};
struct config_error : user_error {
  using user_error::user_error;
};

// Internal failures (exit code 2).
struct training_error : error {
  using error::error;
};
struct oracle_error : error {
  using error::error;
};

// Thrown by design generation when a draw binarizes to a single phase.
// Callers regenerate with a perturbed seed.
struct regenerate_signal : error {
  using error::error;
};

// ------------------------------------------------------------------- rng --

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive a substream seed from a base seed and tags. Used everywhere a
// component needs its own independent, reproducible stream.
inline std::uint64_t mix_seed(std::uint64_t base) {
  std::uint64_t s = base;
  return splitmix64(s);
}
template <class... Rest>
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, Rest... rest) {
  std::uint64_t s = base + 0x632be59bd9b4e019ull * (tag + 1);
  return mix_seed(splitmix64(s), rest...);
}

// xoshiro256++ with splitmix-expanded seed. Small, fast, and fully
// specified so results do not depend on the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without caching the second value: each call consumes exactly
  // two uniforms, which keeps interleaved streams easy to reason about.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Multiply-shift; bias is negligible for the n used here (pool sizes).
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// ------------------------------------------------------------------ hash --

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- base64 --

inline std::string base64_encode(const std::vector<std::uint8_t>& in) {
  static const char tab[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= in.size(); i += 3) {
    std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
    out.push_back(tab[(v >> 18) & 63]);
    out.push_back(tab[(v >> 12) & 63]);
    out.push_back(tab[(v >> 6) & 63]);
    out.push_back(tab[v & 63]);
  }
  if (i + 1 == in.size()) {
    std::uint32_t v = in[i] << 16;
    out.push_back(tab[(v >> 18) & 63]);
    out.push_back(tab[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == in.size()) {
    std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8);
    out.push_back(tab[(v >> 18) & 63]);
    out.push_back(tab[(v >> 12) & 63]);
    out.push_back(tab[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw format_error("base64: invalid character");
  };
  if (in.size() % 4 != 0) throw format_error("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    int a = val(in[i]), b = val(in[i + 1]), c = val(in[i + 2]), d = val(in[i + 3]);
    if (a < 0 || b < 0) throw format_error("base64: misplaced padding");
    std::uint32_t v = (std::uint32_t(a) << 18) | (std::uint32_t(b) << 12) |
                      (std::uint32_t(c < 0 ? 0 : c) << 6) | std::uint32_t(d < 0 ? 0 : d);
    out.push_back((v >> 16) & 255);
    if (c >= 0) out.push_back((v >> 8) & 255);
    if (d >= 0) out.push_back(v & 255);
  }
  return out;
}

// ------------------------------------------------------------ formatting --

// Round-trip-exact double formatting; used for every CSV so that repeated
// runs produce byte-identical artifacts.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

// Reads a text file, dropping '#' comment lines and blank lines.
inline std::vector<std::string> read_data_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw user_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

// Reads '#'-prefixed header comments (artifact provenance lines).
inline std::vector<std::string> read_comment_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw user_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line[0] == '#') lines.push_back(line);
  }
  return lines;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw format_error("trailing characters in number: " + s);
    return v;
  } catch (const std::invalid_argument&) {
    throw format_error("not a number: " + s);
  } catch (const std::out_of_range&) {
    throw format_error("number out of range: " + s);
  }
}

inline long parse_long(const std::string& s) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw format_error("trailing characters in integer: " + s);
    return v;
  } catch (const std::invalid_argument&) {
    throw format_error("not an integer: " + s);
  } catch (const std::out_of_range&) {
    throw format_error("integer out of range: " + s);
  }
}

// ------------------------------------------------------------- threading --

// Static block split; each worker owns a contiguous index range, so results
// written by index are identical no matter how many jobs run.
template <class Fn>
inline void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> workers;
  workers.reserve(k);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (std::size_t w = 0; w < k; ++w) {
    const std::size_t lo = n * w / k;
    const std::size_t hi = n * (w + 1) / k;
    workers.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace baygds
