#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "cplab/errors.hpp"

namespace cplab {

// Environment variable holding the default worker count.
inline constexpr const char* kWorkersEnv = "CPLAB_WORKERS";

// 0 means "use $CPLAB_WORKERS, else 1".
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kWorkersEnv)) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

// Non-library error raised inside replica `index`; wraps the original message.
class ReplicaError : public std::runtime_error {
 public:
  ReplicaError(std::size_t index, const std::string& what)
      : std::runtime_error("replica " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Evaluates fn(state, i) for i in [0, n) on a pool of workers, each owning one state from
// make_state(). Results land at their replica index, so the output never depends on the worker
// count or scheduling. The exception of the lowest failing index is rethrown after the pool drains;
// library error types are preserved and the message is prefixed with the replica index.
template <class MakeState, class Fn>
auto map_replicas(std::size_t n, int workers, MakeState make_state, Fn fn) {
  using State = std::invoke_result_t<MakeState>;
  using Result = std::invoke_result_t<Fn, State&, std::size_t>;
  std::vector<Result> out(n);
  const auto pool = static_cast<std::size_t>(std::max(1, resolve_workers(workers)));
  constexpr std::size_t kChunk = 64;
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t first_error_index = n;

  auto work = [&] {
    State state = make_state();
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      for (std::size_t i = begin; i < end; ++i) {
        try {
          out[i] = fn(state, i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (i < first_error_index) {
            first_error_index = i;
            first_error = std::current_exception();
          }
          next.store(n);
          return;
        }
      }
    }
  };

  if (pool == 1 || n <= kChunk) {
    work();
  } else {
    std::vector<std::thread> threads;
    const std::size_t count = std::min(pool, (n + kChunk - 1) / kChunk);
    threads.reserve(count);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  if (first_error) {
    const std::string prefix = "replica " + std::to_string(first_error_index) + ": ";
    try {
      std::rethrow_exception(first_error);
    } catch (const ResourceError& e) {
      throw ResourceError(prefix + e.what());
    } catch (const DomainError& e) {
      throw DomainError(prefix + e.what());
    } catch (const QualityError& e) {
      throw QualityError(prefix + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(prefix + e.what());
    } catch (const std::exception& e) {
      throw ReplicaError(first_error_index, e.what());
    }
  }
  return out;
}

}  // namespace cplab
