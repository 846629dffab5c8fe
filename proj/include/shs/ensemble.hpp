#ifndef SHS_ENSEMBLE_HPP
#define SHS_ENSEMBLE_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace shs {

struct EnsembleConfig {
  std::size_t paths = 1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;
  /// 0 picks the hardware concurrency.
  unsigned workers = 0;

  void validate() const {
    if (paths < 1) throw std::invalid_argument("ensemble needs at least one path");
    if (batch_size < 1) throw std::invalid_argument("ensemble batch size must be >= 1");
  }

  unsigned effective_workers() const {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return workers == 0 ? hw : workers;
  }
};

/// A path computation threw. Carries the failing path id and the original
/// exception.
class PathFailure : public std::runtime_error {
 public:
  PathFailure(std::uint64_t path_id, std::exception_ptr cause, const std::string& what)
      : std::runtime_error("path " + std::to_string(path_id) + " failed: " + what),
        path_id_(path_id),
        cause_(std::move(cause)) {}

  std::uint64_t path_id() const { return path_id_; }
  std::exception_ptr cause() const { return cause_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  std::uint64_t path_id_;
  std::exception_ptr cause_;
};

/// Runs `path_fn(path_id, acc)` for every path. Paths are cut into fixed
/// batches of `batch_size`; each batch fills its own copy of `init`, and the
/// batch accumulators are merged in batch order, so the result does not
/// depend on the worker count. Acc needs `merge(const Acc&)`.
/// If any path throws, the failure with the smallest path id is rethrown as
/// PathFailure; batches before the failing one still run to completion so the
/// reported path does not depend on scheduling.
template <class Acc, class PathFn>
Acc run_ensemble(const EnsembleConfig& cfg, const Acc& init, PathFn&& path_fn) {
  cfg.validate();
  const std::size_t batches = (cfg.paths + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<Acc> partial(batches, init);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed_batch{batches};
  std::mutex failure_mutex;
  std::uint64_t failed_path = UINT64_MAX;
  std::exception_ptr failure;
  std::string failure_what;

  auto work = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= batches || b > failed_batch.load()) return;
      const std::size_t first = b * cfg.batch_size;
      const std::size_t last = std::min(cfg.paths, first + cfg.batch_size);
      for (std::size_t p = first; p < last; ++p) {
        try {
          path_fn(static_cast<std::uint64_t>(p), partial[b]);
        } catch (const std::exception& e) {
          std::lock_guard lock(failure_mutex);
          if (p < failed_path) {
            failed_path = p;
            failure = std::current_exception();
            failure_what = e.what();
          }
          if (b < failed_batch.load()) failed_batch = b;
          break;
        }
      }
    }
  };

  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(cfg.effective_workers(), batches));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) throw PathFailure(failed_path, failure, failure_what);

  Acc total = init;
  for (const auto& acc : partial) total.merge(acc);
  return total;
}

/// Per-path records collected in path order.
template <class T>
struct Collector {
  std::vector<T> items;
  void merge(const Collector& other) { items.insert(items.end(), other.items.begin(), other.items.end()); }
};

}  // namespace shs

#endif  // SHS_ENSEMBLE_HPP
