#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace shellular {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using json = nlohmann::json;

// Error hierarchy. Pipeline stages tag errors with the stage name so CLI
// failures can be mapped back to the step that produced them.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class DegenerateDesignError : public Error {
 public:
  explicit DegenerateDesignError(const std::string& msg) : Error(msg) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHELL_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static-chunk parallel loop over [0, n). Chunk boundaries depend only on
// (n, threads), so any per-chunk output merged in chunk order is
// deterministic for a fixed thread count.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  int nt = resolve_threads(threads);
  if (nt > n) nt = static_cast<int>(n);
  if (nt <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(nt));
  std::int64_t chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    std::int64_t lo = t * chunk;
    std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

// Deterministic RNG. Gaussian uses Box-Muller rather than
// std::normal_distribution so draw sequences do not depend on the stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

class Timer {
 public:
  Timer() : start_(clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(clock::now() - start_).count();
  }
  void reset() { start_ = clock::now(); }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

// Per-stage wall times in milliseconds, named after the forward-phase
// pipeline stages (field sampling, meshing, periodic pairing, matrix
// assembly, right-hand sides, linear solve, tensor reduction, total).
struct StageTimings {
  double t_field = 0.0;
  double t_mesh = 0.0;
  double t_PBC = 0.0;
  double t_AS = 0.0;
  double t_RHS = 0.0;
  double t_solve = 0.0;
  double t_C = 0.0;
  double t_fwd = 0.0;

  json to_json() const {
    return json{{"t_field", t_field}, {"t_mesh", t_mesh}, {"t_PBC", t_PBC},
                {"t_AS", t_AS},       {"t_RHS", t_RHS},   {"t_solve", t_solve},
                {"t_C", t_C},         {"t_fwd", t_fwd}};
  }
};

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ValidationError(context + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace shellular
