#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mgaa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
template <typename... Ts>
std::string cat_impl(Ts&&... ts) {
  std::ostringstream os;
  (os << ... << std::forward<Ts>(ts));
  return os.str();
}
}  // namespace detail

template <typename... Ts>
std::string cat(Ts&&... ts) {
  return detail::cat_impl(std::forward<Ts>(ts)...);
}

template <typename... Ts>
[[noreturn]] void fail(Ts&&... ts) {
  throw Error(detail::cat_impl(std::forward<Ts>(ts)...));
}

template <typename... Ts>
void require(bool ok, Ts&&... ts) {
  if (!ok) fail(std::forward<Ts>(ts)...);
}

// SplitMix64 step; also used to derive independent stream seeds from one
// master seed without correlated low bits.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// xoshiro256** with a fixed algorithm so generated streams are identical
// across platforms and standard libraries (std:: distributions are not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t s = seed;
    for (auto& w : s_) w = mix64(s++);
  }

  uint64_t next() {
    auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next() % n; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::array<uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Bounded worker pool for independent per-item work. Each index is handled
// by exactly one worker; the first exception wins and is rethrown after all
// workers join.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  if (n <= 0) return;
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const int i = cursor.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---- little-endian binary primitives ----

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
  if (!os) fail("write failed");
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), std::streamsize(n));
  if (size_t(is.gcount()) != n) fail("unexpected end of stream");
}

template <typename U>
void write_le(std::ostream& os, U value) {
  static_assert(std::is_integral_v<U>);
  unsigned char buf[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i)
    buf[i] = (unsigned char)((std::make_unsigned_t<U>(value) >> (8 * i)) & 0xff);
  write_bytes(os, buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  static_assert(std::is_integral_v<U>);
  unsigned char buf[sizeof(U)];
  read_bytes(is, buf, sizeof(U));
  std::make_unsigned_t<U> v = 0;
  for (size_t i = 0; i < sizeof(U); ++i)
    v |= std::make_unsigned_t<U>(buf[i]) << (8 * i);
  return U(v);
}

inline void write_f32(std::ostream& os, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  write_le<uint32_t>(os, bits);
}

inline float read_f32(std::istream& is) {
  const uint32_t bits = read_le<uint32_t>(is);
  float x;
  std::memcpy(&x, &bits, 4);
  return x;
}

// FNV-1a, used as a cheap content digest for config blocks.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace mgaa
