#include "gsvr/common.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace gsvr {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  std::uint64_t x = seed;
  std::uint64_t h = splitmix(x);
  x ^= a + 0x632be59bd9b4e019ull;
  h ^= splitmix(x);
  x ^= b + 0x2545f4914f6cdd1dull;
  h ^= splitmix(x);
  return h ? h : 1;
}

std::uint64_t Rng::next() {
  // xorshift64* — small, fast, fully portable.
  std::uint64_t x = state_;
  x ^= x >> 12;
  x ^= x << 25;
  x ^= x >> 27;
  state_ = x;
  return x * 0x2545f4914f6cdd1dull;
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next() % span);
}

double Rng::normal() {
  // (0,1] for the log argument.
  double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace {

thread_local bool g_in_pool_worker = false;

struct PoolState {
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  std::vector<std::thread> workers;
  const std::function<void(int)>* job = nullptr;
  std::atomic<int> next_chunk{0};
  int total_chunks = 0;
  int active = 0;
  std::uint64_t generation = 0;
  bool stop = false;

  ~PoolState() {
    {
      std::lock_guard<std::mutex> lock(mu);
      stop = true;
    }
    cv_work.notify_all();
    for (auto& w : workers) w.join();
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lock(mu);
      cv_work.wait(lock, [&] { return stop || generation != seen; });
      if (stop) return;
      seen = generation;
      const std::function<void(int)>* fn = job;
      const int total = total_chunks;
      lock.unlock();
      g_in_pool_worker = true;
      for (;;) {
        int c = next_chunk.fetch_add(1);
        if (c >= total) break;
        (*fn)(c);
      }
      g_in_pool_worker = false;
      lock.lock();
      if (--active == 0) cv_done.notify_all();
    }
  }

  void ensure_workers(int n) {
    while (static_cast<int>(workers.size()) < n) {
      workers.emplace_back([this] { worker_loop(); });
    }
  }
};

PoolState& pool_state() {
  static PoolState state;
  return state;
}

}  // namespace

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

void ThreadPool::set_thread_count(int n) { threads_ = n < 0 ? 0 : n; }

void ThreadPool::run_chunks(int num_chunks, const std::function<void(int)>& fn) {
  if (num_chunks <= 0) return;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  const int want = threads_ > 0 ? threads_ : hw;
  // nested parallel sections run serially on the calling worker
  if (want <= 1 || num_chunks == 1 || g_in_pool_worker) {
    for (int c = 0; c < num_chunks; ++c) fn(c);
    return;
  }
  PoolState& st = pool_state();
  std::unique_lock<std::mutex> lock(st.mu);
  const int helpers = std::min(want, num_chunks) - 1;
  st.ensure_workers(helpers);
  st.job = &fn;
  st.total_chunks = num_chunks;
  st.next_chunk.store(0);
  st.active = helpers;
  ++st.generation;
  lock.unlock();
  st.cv_work.notify_all();
  for (;;) {
    int c = st.next_chunk.fetch_add(1);
    if (c >= num_chunks) break;
    fn(c);
  }
  lock.lock();
  st.cv_done.wait(lock, [&] { return st.active == 0; });
  st.job = nullptr;
}

void parallel_chunks(std::size_t n, int num_chunks,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t chunks = std::min<std::size_t>(num_chunks > 0 ? num_chunks : 1, n);
  const std::size_t per = (n + chunks - 1) / chunks;
  ThreadPool::instance().run_chunks(static_cast<int>(chunks), [&](int c) {
    const std::size_t begin = static_cast<std::size_t>(c) * per;
    const std::size_t end = std::min(n, begin + per);
    if (begin < end) fn(c, begin, end);
  });
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  parallel_chunks(n, 64, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace gsvr
