#pragma once
/// \file common.hpp
/// \brief Small dense types, error classes and the element-parallel loop
///        shared by every lbafem module.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lbafem {

/// Dimension of the parametric domain (surfaces in R^3).
inline constexpr int kDim = 2;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat23 = Eigen::Matrix<double, 2, 3>;

// Errors
// ------

class Error : public std::exception {
 public:
  explicit Error(std::string what) : what_(std::move(what)) {}
  const char* what() const noexcept override { return what_.c_str(); }
  /// Appends where the failure happened, e.g. "k=3, j=1".
  void add_context(const std::string& where) { what_ += " [" + where + "]"; }

 private:
  std::string what_;
};

#define LBAFEM_DEFINE_ERROR(Name)                  \
  class Name : public Error {                      \
   public:                                         \
    explicit Name(const std::string& what)         \
        : Error(std::string(#Name ": ") + what) {} \
  }

LBAFEM_DEFINE_ERROR(NonManifoldTopology);
LBAFEM_DEFINE_ERROR(InadmissibleLabeling);
LBAFEM_DEFINE_ERROR(UnknownElement);
LBAFEM_DEFINE_ERROR(RefinementDepthExceeded);
LBAFEM_DEFINE_ERROR(DegenerateElement);
LBAFEM_DEFINE_ERROR(UnsupportedDegree);
LBAFEM_DEFINE_ERROR(NoConvergence);
LBAFEM_DEFINE_ERROR(IncompatibleLoad);
LBAFEM_DEFINE_ERROR(SingularGram);
LBAFEM_DEFINE_ERROR(MissingExactSolution);
LBAFEM_DEFINE_ERROR(BudgetExceeded);
LBAFEM_DEFINE_ERROR(InsufficientData);
LBAFEM_DEFINE_ERROR(ParseError);
LBAFEM_DEFINE_ERROR(UnknownKey);
LBAFEM_DEFINE_ERROR(RangeError);
LBAFEM_DEFINE_ERROR(IoError);
LBAFEM_DEFINE_ERROR(ContractViolation);

#undef LBAFEM_DEFINE_ERROR

// Threading
// ---------

/// Worker count for element loops, read from LBAFEM_THREADS (default 1).
inline int thread_count() {
  if (const char* env = std::getenv("LBAFEM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

/// Runs body(i) for i in [0, count). Each index must write only its own
/// output slot; gathers happen afterwards in index order, so results do not
/// depend on the thread count.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const auto workers =
      std::min<std::size_t>(static_cast<std::size_t>(thread_count()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(workers);
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, w, &body, &failures] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace lbafem
