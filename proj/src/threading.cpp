#include "satfields/threading.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace satfields {

namespace {

int g_num_threads = static_cast<int>(std::thread::hardware_concurrency());
thread_local bool t_in_worker = false;

// Lazily started pool of persistent workers. Work items are (begin, end)
// ranges of a shared job; the caller participates with chunk 0 and waits for
// the rest.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(std::size_t total, int nchunks, const std::function<void(std::size_t, std::size_t)>& fn) {
    ensure_workers(nchunks - 1);
    const std::size_t chunk = (total + nchunks - 1) / nchunks;
    {
      std::lock_guard<std::mutex> lk(m_);
      job_fn_ = &fn;
      job_total_ = total;
      job_chunk_ = chunk;
      next_chunk_ = 1;
      pending_ = 0;
      for (int c = 1; c < nchunks; ++c) {
        if (static_cast<std::size_t>(c) * chunk >= total) break;
        ++pending_;
      }
      issued_ = pending_;
      ++generation_;
    }
    cv_work_.notify_all();

    // Caller handles the first chunk.
    fn(0, std::min(chunk, total));

    std::unique_lock<std::mutex> lk(m_);
    cv_done_.wait(lk, [&] { return pending_ == 0; });
    job_fn_ = nullptr;
  }

 private:
  Pool() = default;
  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
      ++generation_;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void ensure_workers(int n) {
    std::lock_guard<std::mutex> lk(m_);
    while (static_cast<int>(workers_.size()) < n) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    t_in_worker = true;
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(m_);
      cv_work_.wait(lk, [&] { return stop_ || (generation_ != seen && issued_ > 0); });
      if (stop_) return;
      seen = generation_;
      while (next_chunk_ * job_chunk_ < job_total_ && issued_ > 0) {
        const std::size_t c = next_chunk_++;
        --issued_;
        const std::size_t b = c * job_chunk_;
        const std::size_t e = std::min(b + job_chunk_, job_total_);
        const auto* fn = job_fn_;
        lk.unlock();
        (*fn)(b, e);
        lk.lock();
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }

  std::mutex m_;
  std::condition_variable cv_work_, cv_done_;
  std::vector<std::thread> workers_;
  const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
  std::size_t job_total_ = 0, job_chunk_ = 0, next_chunk_ = 0;
  int pending_ = 0, issued_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

void set_num_threads(int n) { g_num_threads = n < 1 ? 1 : n; }

int num_threads() { return g_num_threads < 1 ? 1 : g_num_threads; }

void parallel_for(std::size_t total, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  const int nt = num_threads();
  // Nested calls from inside a worker run inline; the pool is not reentrant.
  if (nt == 1 || total < 2048 || t_in_worker) {
    fn(0, total);
    return;
  }
  Pool::instance().run(total, nt, fn);
}

}  // namespace satfields
