#include "hsmlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace hsmlab::parallel {

namespace {

std::atomic<int> g_override{0};
thread_local bool t_inside_worker = false;

int env_threads() {
  static const int value = [] {
    if (const char* env = std::getenv("HSMLAB_THREADS")) {
      try {
        int n = std::stoi(env);
        if (n > 0) return n;
      } catch (...) {
      }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return value;
}

// Minimal pool: one job at a time, workers pull chunk indices from an atomic
// counter. The caller participates and blocks until every worker has left
// the job, so no worker can observe a later job's counter with a stale body.
class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
  }
  ~Pool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const { return threads_.size(); }

  void run(std::size_t count, const std::function<void(std::size_t)>& fn) {
    std::unique_lock lock(mutex_);
    job_ = &fn;
    count_ = count;
    next_.store(0);
    error_ = nullptr;
    ++generation_;
    lock.unlock();
    wake_.notify_all();
    work(fn, count);
    lock.lock();
    done_.wait(lock, [this] { return active_ == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void work(const std::function<void(std::size_t)>& fn, std::size_t count) {
    const bool was_inside = t_inside_worker;
    t_inside_worker = true;
    for (;;) {
      std::size_t i = next_.fetch_add(1);
      if (i >= count) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
    }
    t_inside_worker = was_inside;
  }

  void loop() {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* job = nullptr;
      std::size_t count = 0;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stop_ || (job_ != nullptr && generation_ != seen); });
        if (stop_) return;
        seen = generation_;
        job = job_;
        count = count_;
        ++active_;
      }
      work(*job, count);
      {
        std::lock_guard lock(mutex_);
        --active_;
      }
      done_.notify_all();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t count_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t active_ = 0;
  std::size_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

std::mutex g_pool_mutex;
std::unique_ptr<Pool> g_pool;

void dispatch(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const int threads = thread_count();
  if (count <= 1 || threads <= 1 || t_inside_worker) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::lock_guard guard(g_pool_mutex);
  if (!g_pool || g_pool->size() != static_cast<std::size_t>(threads - 1)) {
    g_pool.reset();
    g_pool = std::make_unique<Pool>(threads - 1);
  }
  g_pool->run(count, fn);
}

}  // namespace

int thread_count() {
  int o = g_override.load();
  return o > 0 ? o : env_threads();
}

void set_thread_count(int threads) { g_override.store(std::max(threads, 0)); }

void for_chunks(std::size_t n, std::size_t chunk,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  dispatch(chunks, [&](std::size_t c) {
    const std::size_t b = c * chunk;
    body(b, std::min(n, b + chunk), c);
  });
}

double sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& partial,
           std::size_t chunk) {
  if (n == 0) return 0.0;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  if (chunks == 1) return partial(0, n);
  std::vector<double> parts(chunks, 0.0);
  for_chunks(n, chunk, [&](std::size_t b, std::size_t e, std::size_t c) { parts[c] = partial(b, e); });
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

void run_tasks(std::size_t count, const std::function<void(std::size_t)>& task) {
  dispatch(count, task);
}

}  // namespace hsmlab::parallel
